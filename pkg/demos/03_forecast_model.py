# coding: utf-8

# # The forecast model
#
# A windowed-attention encoder/decoder maps a short radar history to a
# sequence of future frames. Weights here are seeded random draws; the
# point is the plumbing, not the skill.

# In[1]:

import numpy as np

from radarcast import init_weights, model_forward, preset
from radarcast.swin import count_params, encode, estimate_flops


# Each preset fixes the horizon and grid. The toy preset is small enough
# to run instantly.

# In[2]:

for name in ("toy", "kma-1h", "kma-6h", "sevir", "meteonet"):
    cfg = preset(name)
    print(f"{name:>9}: {cfg.in_frames:2d} -> {cfg.out_frames:2d} frames at {cfg.height}x{cfg.width}, "
          f"{count_params(cfg) / 1e6:6.2f}M params, {estimate_flops(cfg) / 1e9:7.1f} GFLOPs")


# In[3]:

cfg = preset("toy")
store = init_weights(cfg, seed=0)
x = np.random.default_rng(0).random((1, 4, 16, 16, 1)).astype(np.float32)
y = model_forward(x, cfg, store)
print(y.shape, store.checksum()[:16])


# The encoder feature pyramid, one entry per stage.

# In[4]:

for i, f in enumerate(encode(x, cfg, store)):
    print(i, f.shape)


# The short- and long-horizon KMA configurations share an encoder layout,
# and seeded initialisation is keyed by weight name, so the same seed
# gives identical encoder features. That is what makes freezing the
# encoder and retraining only the decoder possible.

# In[5]:

kw = dict(embed_dim=8, num_heads=(1, 1, 1), height=64, width=64)
short, long = preset("kma-1h", **kw), preset("kma-6h", **kw)
x = np.random.default_rng(1).random((1, 7, 64, 64, 1)).astype(np.float32)
a = encode(x, short, init_weights(short, 3))
b = encode(x, long, init_weights(long, 3))
print(all(np.array_equal(p, q) for p, q in zip(a, b)))
print(model_forward(x, long, init_weights(long, 3)).shape)
