# coding: utf-8

# # Upsampling: trilinear, pixel shuffle and the dual block
#
# The decoder doubles resolution with a block that runs two branches side
# by side. One interpolates, the other rearranges channels into space, and
# a final convolution fuses them.

# In[1]:

import numpy as np

from radarcast.ablation import ablate
from radarcast.upsample import CduWeights, cdu_forward, pixel_shuffle3d, space_to_depth3d, trilinear_upsample


# Align-corners trilinear sampling keeps the end points fixed, so [0, 2]
# becomes four evenly spaced values.

# In[2]:

line = np.array([0.0, 2.0], np.float32).reshape(1, 1, 1, 2, 1)
print(trilinear_upsample(line, (1, 1, 2)).ravel())


# Pixel shuffle moves channel groups into sub-voxels and loses nothing:
# space_to_depth3d undoes it bit for bit.

# In[3]:

z = np.random.default_rng(1).standard_normal((1, 2, 3, 3, 8)).astype(np.float32)
up = pixel_shuffle3d(z, 2)
print(up.shape, np.array_equal(space_to_depth3d(up, 2), z))


# The dual block halves the channel count while scaling (t, h, w).

# In[4]:

w = CduWeights.random(c=8, s=(1, 2, 2), seed=0)
print(cdu_forward(z, w, (1, 2, 2)).shape)


# A quick ablation: shrink a smooth field, bring it back with each
# operator, and score the reconstruction. The dual block here has random
# untrained weights, so only its shape behaviour is meaningful.

# In[5]:

t, h, wd = np.meshgrid(np.arange(2), np.arange(16), np.arange(16), indexing="ij")
target = (0.5 + 0.4 * np.sin(h / 3.0) * np.cos(wd / 4.0) + 0.05 * t)[None, ..., None]
for row in ablate(target, s=(1, 2, 2)):
    print(f"{row['mode']:>5}  mse={row['mse']:.2e}  mae={row['mae']:.3f}  csi_m={row['csi_m']:.3f}")
