# coding: utf-8

# # Array kernels
#
# Everything in radarcast runs on plain channels-last numpy arrays of shape
# (batch, time, height, width, channels). This walk-through pokes at the
# small set of kernels the model is built from.

# In[1]:

import numpy as np

from radarcast.tensor import conv3d, layer_norm, max_pool2d, softmax

rng = np.random.default_rng(0)


# A 3x3 box filter over a constant field returns the constant on every
# interior voxel. With no padding the spatial extent shrinks by two.

# In[2]:

x = np.full((1, 1, 5, 5, 1), 2.0, np.float32)
box = np.full((1, 1, 1, 3, 3), 1 / 9, np.float32)
y = conv3d(x, box)
print(y.shape, float(y.min()), float(y.max()))


# Same padding keeps the extent. Weights are laid out (out, in, kt, kh, kw).

# In[3]:

x = rng.standard_normal((1, 2, 8, 8, 3)).astype(np.float32)
w = rng.standard_normal((4, 3, 3, 3, 3)).astype(np.float32) * 0.1
print(conv3d(x, w, padding=1).shape)


# Max pooling works frame by frame over (h, w). Pooled CSI later uses a
# kernel k with stride k/4.

# In[4]:

field = np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4, 1)
print(max_pool2d(field, 2, 2)[0, 0, :, :, 0])


# Softmax ignores masked (-inf) entries, and layer norm centres each
# token's channel vector.

# In[5]:

print(softmax(np.array([3.2, -np.inf])))
print(layer_norm(np.array([1.0, 3.0]), np.ones(2), np.zeros(2), eps=0.0))
