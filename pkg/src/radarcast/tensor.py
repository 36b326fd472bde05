"""Dense (b, t, h, w, c) array kernels.

Every feature volume in the package is a float32 numpy array laid out
channels-last as ``(batch, time, height, width, channel)``. Kernels accumulate
in float64 and round the result back to float32 so that results can be
compared against plain-loop oracles.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import ConfigError, DegenerateInputError, DimensionError

DTYPE = np.float32
ACC = np.float64


def _triple(v):
    if np.isscalar(v):
        return (int(v),) * 3
    v = tuple(int(i) for i in v)
    if len(v) != 3:
        raise ConfigError(f"expected 3 values, got {v}")
    return v


def as_tensor5(x, name="x"):
    """Return ``x`` as a float32 rank-5 array, raising on any other rank."""
    x = np.asarray(x)
    if x.ndim != 5:
        raise DimensionError(f"{name} must be rank 5 (b,t,h,w,c), got shape {x.shape}")
    return x.astype(DTYPE, copy=False)


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of a 3-D convolution over (t, h, w)."""

    kernel_size: tuple
    in_channels: int
    out_channels: int
    stride: tuple = (1, 1, 1)
    padding: tuple = (0, 0, 0)
    has_bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kernel_size", _triple(self.kernel_size))
        object.__setattr__(self, "stride", _triple(self.stride))
        object.__setattr__(self, "padding", _triple(self.padding))
        if min(self.kernel_size) < 1 or min(self.stride) < 1 or min(self.padding) < 0:
            raise ConfigError(f"invalid conv geometry {self}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError(f"channel counts must be positive: {self}")

    @property
    def weight_shape(self):
        return (self.out_channels, self.in_channels) + self.kernel_size

    def output_extent(self, extent):
        """Output (t, h, w) for an input of spatial extent ``extent``."""
        out = tuple(
            (n + 2 * p - k) // s + 1
            for n, k, s, p in zip(extent, self.kernel_size, self.stride, self.padding)
        )
        if min(out) < 1:
            raise DimensionError(f"conv {self.kernel_size} yields empty output on extent {tuple(extent)}")
        return out


def _matmul(x, w):
    """``x @ w`` over the last axis as a single 2-D GEMM.

    numpy treats leading axes of an N-d operand as a batch of small matrices,
    which is far slower than flattening them first.
    """
    lead = x.shape[:-1]
    y = np.ascontiguousarray(x).reshape(-1, x.shape[-1]) @ w
    return y.reshape(lead + (w.shape[-1],))


def conv3d(x, weight, bias=None, stride=1, padding=0):
    """Direct 3-D cross-correlation.

    Parameters
    ----------
    x : array (b, t, h, w, c_in)
    weight : array (c_out, c_in, k_t, k_h, k_w)
    bias : array (c_out,), optional
    stride, padding : int or 3-tuple over (t, h, w); padding is zero-fill.

    Returns
    -------
    array (b, t', h', w', c_out) with t' = (t + 2p - k) // s + 1 etc.
    """
    x = as_tensor5(x)
    weight = np.asarray(weight)
    if weight.ndim != 5:
        raise DimensionError(f"conv weight must be (out,in,kt,kh,kw), got {weight.shape}")
    spec = ConvSpec(weight.shape[2:], weight.shape[1], weight.shape[0], stride, padding, bias is not None)
    if x.shape[-1] != spec.in_channels:
        raise DimensionError(
            f"conv3d channel mismatch: input shape {x.shape} vs weight shape {weight.shape}"
        )
    if bias is not None and np.shape(bias) != (spec.out_channels,):
        raise DimensionError(f"bias shape {np.shape(bias)} does not match weight shape {weight.shape}")
    out_ext = spec.output_extent(x.shape[1:4])
    pt, ph, pw = spec.padding
    xp = np.pad(x.astype(ACC), ((0, 0), (pt, pt), (ph, ph), (pw, pw), (0, 0)))
    w64 = weight.astype(ACC)
    st, sh, sw = spec.stride
    To, Ho, Wo = out_ext
    out = np.zeros((x.shape[0], To, Ho, Wo, spec.out_channels), dtype=ACC)
    kt, kh, kw = spec.kernel_size
    for a in range(kt):
        for b in range(kh):
            for c in range(kw):
                patch = xp[:, a:a + st * (To - 1) + 1:st, b:b + sh * (Ho - 1) + 1:sh, c:c + sw * (Wo - 1) + 1:sw, :]
                out += _matmul(patch, np.ascontiguousarray(w64[:, :, a, b, c].T))
    if bias is not None:
        out += np.asarray(bias, dtype=ACC)
    return out.astype(DTYPE)


def conv_transpose3d(x, weight, bias=None, stride=1):
    """Transposed 3-D convolution without padding.

    ``weight`` is laid out (c_in, c_out, k_t, k_h, k_w); output extent along
    each axis is ``(n - 1) * s + k``.
    """
    x = as_tensor5(x)
    weight = np.asarray(weight)
    if weight.ndim != 5 or weight.shape[0] != x.shape[-1]:
        raise DimensionError(
            f"conv_transpose3d channel mismatch: input shape {x.shape} vs weight shape {weight.shape}"
        )
    st, sh, sw = _triple(stride)
    kt, kh, kw = weight.shape[2:]
    b, t, h, w, _ = x.shape
    c_out = weight.shape[1]
    out = np.zeros((b, (t - 1) * st + kt, (h - 1) * sh + kh, (w - 1) * sw + kw, c_out), dtype=ACC)
    x64 = x.astype(ACC)
    w64 = weight.astype(ACC)
    for a in range(kt):
        for bb in range(kh):
            for c in range(kw):
                out[:, a:a + st * (t - 1) + 1:st, bb:bb + sh * (h - 1) + 1:sh, c:c + sw * (w - 1) + 1:sw, :] += (
                    _matmul(x64, np.ascontiguousarray(w64[:, :, a, bb, c]))
                )
    if bias is not None:
        out += np.asarray(bias, dtype=ACC)
    return out.astype(DTYPE)


def max_pool2d(x, k, stride):
    """Max over k x k spatial windows of every (b, t, c) slice, no padding."""
    x = as_tensor5(x)
    k, stride = int(k), int(stride)
    if k < 1 or stride < 1:
        raise ConfigError(f"pool kernel and stride must be positive, got k={k}, stride={stride}")
    if k > x.shape[2] or k > x.shape[3]:
        raise DegenerateInputError(f"pool kernel {k} larger than spatial extent {x.shape[2:4]}")
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    return win[:, :, ::stride, ::stride].max(axis=(-2, -1))


def softmax(x, axis=-1):
    """Numerically stable softmax; ``-inf`` entries receive exactly zero weight."""
    x = np.asarray(x, dtype=ACC)
    m = np.max(x, axis=axis, keepdims=True)
    if np.any(np.isneginf(m)):
        raise DegenerateInputError("softmax over a slice whose entries are all -inf")
    e = np.exp(x - m)
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize over the last (channel) axis, then scale and shift."""
    x64 = np.asarray(x, dtype=ACC)
    c = x64.shape[-1]
    if np.shape(gamma) != (c,) or np.shape(beta) != (c,):
        raise DimensionError(f"layer_norm params {np.shape(gamma)}/{np.shape(beta)} vs channels {c}")
    mu = x64.mean(axis=-1, keepdims=True)
    var = ((x64 - mu) ** 2).mean(axis=-1, keepdims=True)
    y = (x64 - mu) / np.sqrt(var + eps)
    return (y * np.asarray(gamma, ACC) + np.asarray(beta, ACC)).astype(DTYPE)


def linear(x, weight, bias=None):
    """``y = x @ weight + bias`` over the last axis, with weight shaped (in, out)."""
    x = np.asarray(x)
    weight = np.asarray(weight)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"linear: input shape {x.shape} incompatible with weight shape {weight.shape}")
    y = _matmul(x.astype(ACC), weight.astype(ACC))
    if bias is not None:
        if np.shape(bias) != (weight.shape[1],):
            raise DimensionError(f"linear: bias shape {np.shape(bias)} vs weight shape {weight.shape}")
        y += np.asarray(bias, ACC)
    return y.astype(DTYPE)


def gelu(x):
    x64 = np.asarray(x, dtype=ACC)
    return (0.5 * x64 * (1.0 + erf(x64 / np.sqrt(2.0)))).astype(DTYPE)


def prelu(x, slope):
    """Per-channel PReLU: ``max(0, x) + a * min(0, x)``."""
    x = np.asarray(x)
    slope = np.asarray(slope, dtype=DTYPE)
    if slope.shape != (x.shape[-1],):
        raise DimensionError(f"prelu slope shape {slope.shape} vs channels {x.shape[-1]}")
    return np.where(x >= 0, x, slope * x).astype(DTYPE)
