# coding: utf-8

# # Fourier losses
#
# The amplitude loss compares spectra and ignores where features sit; the
# correlation loss cares about placement. Training blends them with a
# weight that slides from correlation to amplitude.

# In[1]:

import numpy as np

from radarcast.loss import facl, fal, fcl, schedule_weight

rng = np.random.default_rng(0)
target = rng.random((1, 2, 32, 32, 1))


# Shifting a field leaves its amplitude spectrum alone.

# In[2]:

moved = np.roll(target, (5, 9), axis=(2, 3))
print(f"FAL(shifted, target) = {fal(moved, target):.2e}")
print(f"FCL(shifted, target) = {fcl(moved, target):.3f}")


# Correlation is blind to scale and maxes out at 2 for an inverted field.

# In[3]:

print(fcl(3 * target, target), fcl(-target, target))


# The schedule weight and the blended loss along a noisy-to-clean path.

# In[4]:

noise = rng.random(target.shape)
for n in (0, 50, 100):
    vals = [facl((1 - lam) * noise + lam * target, target, n, 100) for lam in (0, 0.25, 0.5, 0.75, 1)]
    print(f"P({n:3d})={schedule_weight(n, 100):.2f}", " ".join(f"{v:.4f}" for v in vals))
