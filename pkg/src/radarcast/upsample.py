"""Upsampling operators and the cubic dual upsample (CDU) block.

All resamplers act on the (t, h, w) axes of a (b, t, h, w, c) array and are
implemented as one interpolation matrix per axis, so each is separable and
exactly linear.
"""

from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import ACC, DTYPE, as_tensor5, conv3d, prelu

INTERP_MODES = ("nearest", "linear", "bicubic", "area")
CUBIC_A = -0.5


def as_scale(s):
    """Validate a scale factor ``(s_t, s_h, s_w)``; a scalar applies to all axes."""
    s = (int(s),) * 3 if np.isscalar(s) else tuple(int(v) for v in s)
    if len(s) != 3 or min(s) < 1:
        raise ConfigError(f"scale factor must be three positive integers, got {s}")
    return s


def _align_corners_coords(n_in, n_out):
    if n_in == 1 or n_out == 1:
        return np.zeros(n_out)
    return np.arange(n_out) * (n_in - 1) / (n_out - 1)


def _linear_matrix(n_in, n_out):
    m = np.zeros((n_out, n_in))
    x = _align_corners_coords(n_in, n_out)
    i0 = np.clip(np.floor(x).astype(int), 0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = x - i0
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - frac)
    np.add.at(m, (rows, i1), frac)
    return m


def _cubic_kernel(d, a=CUBIC_A):
    d = np.abs(d)
    return np.where(
        d <= 1,
        (a + 2) * d**3 - (a + 3) * d**2 + 1,
        np.where(d < 2, a * d**3 - 5 * a * d**2 + 8 * a * d - 4 * a, 0.0),
    )


def _cubic_matrix(n_in, n_out):
    m = np.zeros((n_out, n_in))
    x = _align_corners_coords(n_in, n_out)
    base = np.floor(x).astype(int)
    rows = np.arange(n_out)
    for off in (-1, 0, 1, 2):
        idx = base + off
        wgt = _cubic_kernel(x - idx)
        # replicate border: taps past the edge fold onto the edge sample
        np.add.at(m, (rows, np.clip(idx, 0, n_in - 1)), wgt)
    return m


def _nearest_matrix(n_in, n_out):
    m = np.zeros((n_out, n_in))
    src = np.minimum((np.arange(n_out) * n_in) // n_out, n_in - 1)
    m[np.arange(n_out), src] = 1.0
    return m


def _area_matrix(n_in, n_out):
    m = np.zeros((n_out, n_in))
    # output cell i spans [i*n_in/n_out, (i+1)*n_in/n_out) in input units;
    # work in units of 1/n_out to keep the overlap arithmetic integral
    for i in range(n_out):
        lo, hi = i * n_in, (i + 1) * n_in
        for j in range(lo // n_out, min(n_in, -(-hi // n_out))):
            overlap = min(hi, (j + 1) * n_out) - max(lo, j * n_out)
            if overlap > 0:
                m[i, j] = overlap / n_in
    return m


_MATRIX = {
    "nearest": _nearest_matrix,
    "linear": _linear_matrix,
    "bicubic": _cubic_matrix,
    "area": _area_matrix,
}


def _apply_axis(x, mat, axis):
    y = np.tensordot(mat, x, axes=([1], [axis]))
    return np.moveaxis(y, 0, axis)


def resize(z, size, mode="linear"):
    """Resample the (t, h, w) axes of ``z`` to ``size``.

    ``mode`` is one of nearest, linear, bicubic, area. Linear and bicubic use
    align-corners sampling; bicubic is applied to the spatial axes with a
    linear blend along time.
    """
    if mode not in _MATRIX:
        raise ConfigError(f"unknown interpolation mode {mode!r}; expected one of {INTERP_MODES}")
    z = as_tensor5(z)
    size = tuple(int(v) for v in size)
    if len(size) != 3 or min(size) < 1:
        raise DimensionError(f"target size must be three positive extents, got {size}")
    y = z.astype(ACC)
    for axis, n_out in zip((1, 2, 3), size):
        n_in = y.shape[axis]
        if n_in == n_out and mode != "area":
            continue
        kind = "linear" if (mode == "bicubic" and axis == 1) else mode
        y = _apply_axis(y, _MATRIX[kind](n_in, n_out), axis)
    return y.astype(DTYPE)


def _scaled(z, s):
    s = as_scale(s)
    return tuple(n * k for n, k in zip(z.shape[1:4], s))


def trilinear_upsample(z, s):
    """Align-corners trilinear upsampling by integer factors ``s``."""
    z = as_tensor5(z)
    return resize(z, _scaled(z, s), "linear")


def interp_upsample(z, s, mode):
    """Upsample by ``s`` with ``mode`` in {nearest, bicubic, area} (or linear)."""
    z = as_tensor5(z)
    return resize(z, _scaled(z, s), mode)


def pixel_shuffle3d(z, s):
    """Depth-to-space: move channel groups into (t, h, w) sub-voxels.

    ``out[b, st*i+a, sh*j+d, sw*k+e, f] = z[b, i, j, k, ((a*sh + d)*sw + e)*c' + f]``
    """
    z = as_tensor5(z)
    st, sh, sw = as_scale(s)
    b, t, h, w, c = z.shape
    r = st * sh * sw
    if c % r:
        raise DimensionError(f"pixel_shuffle3d: {c} channels not divisible by {st}*{sh}*{sw}={r}")
    cp = c // r
    y = z.reshape(b, t, h, w, st, sh, sw, cp).transpose(0, 1, 4, 2, 5, 3, 6, 7)
    return np.ascontiguousarray(y.reshape(b, t * st, h * sh, w * sw, cp))


def space_to_depth3d(z, s):
    """Exact inverse of :func:`pixel_shuffle3d`."""
    z = as_tensor5(z)
    st, sh, sw = as_scale(s)
    b, t, h, w, c = z.shape
    if t % st or h % sh or w % sw:
        raise DimensionError(f"space_to_depth3d: extent {(t, h, w)} not divisible by {(st, sh, sw)}")
    y = z.reshape(b, t // st, st, h // sh, sh, w // sw, sw, c).transpose(0, 1, 3, 5, 2, 4, 6, 7)
    return np.ascontiguousarray(y.reshape(b, t // st, h // sh, w // sw, st * sh * sw * c))


@dataclass
class CduWeights:
    """Parameters of one CDU block.

    Convolution weights are (out, in, kt, kh, kw); each has a bias vector.
    ``prelu_ti`` and ``prelu_ps`` are independent per-channel slopes.
    """

    ti_conv1: np.ndarray
    ti_conv1_bias: np.ndarray
    ti_conv2: np.ndarray
    ti_conv2_bias: np.ndarray
    ps_conv1: np.ndarray
    ps_conv1_bias: np.ndarray
    ps_conv2: np.ndarray
    ps_conv2_bias: np.ndarray
    fuse_conv: np.ndarray
    fuse_conv_bias: np.ndarray
    prelu_ti: np.ndarray
    prelu_ps: np.ndarray

    @staticmethod
    def shapes(c, s, kernel=(3, 3, 3)):
        """Expected parameter shapes for ``c`` input channels and scale ``s``."""
        if c % 2:
            raise DimensionError(f"CDU needs an even channel count, got {c}")
        st, sh, sw = as_scale(s)
        k = tuple(kernel)
        half = c // 2
        ps_c = half * st * sh * sw
        return {
            "ti_conv1": (c, c) + k,
            "ti_conv1_bias": (c,),
            "ti_conv2": (half, c) + k,
            "ti_conv2_bias": (half,),
            "ps_conv1": (ps_c, c) + k,
            "ps_conv1_bias": (ps_c,),
            "ps_conv2": (half, half) + k,
            "ps_conv2_bias": (half,),
            "fuse_conv": (half, c) + k,
            "fuse_conv_bias": (half,),
            "prelu_ti": (c,),
            "prelu_ps": (ps_c,),
        }

    @classmethod
    def random(cls, c, s, seed=0, kernel=(3, 3, 3), std=0.02, slope=0.25):
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in cls.shapes(c, s, kernel).items():
            if name.startswith("prelu"):
                params[name] = np.full(shape, slope, DTYPE)
            elif name.endswith("_bias"):
                params[name] = np.zeros(shape, DTYPE)
            else:
                params[name] = trunc_normal(rng, shape, std)
        return cls(**params)

    def to_dict(self, prefix):
        """Flatten to XT5 names ``<prefix>.ti_conv1``, ``<prefix>.ti_conv1.bias``, ..."""
        out = {}
        for f in fields(self):
            key = f.name.replace("_bias", ".bias")
            out[f"{prefix}.{key}"] = getattr(self, f.name)
        return out

    @classmethod
    def from_dict(cls, store, prefix):
        return cls(**{f.name: store[f"{prefix}.{f.name.replace('_bias', '.bias')}"] for f in fields(cls)})


def trunc_normal(rng, shape, std):
    """Normal(0, std) samples truncated to two standard deviations by redrawing."""
    x = rng.standard_normal(shape)
    bad = np.abs(x) > 2.0
    while bad.any():
        x[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(x) > 2.0
    return (x * std).astype(DTYPE)


def _same(weight):
    return tuple(k // 2 for k in np.shape(weight)[2:])


def _check_branch(name, weight, c_in):
    if np.ndim(weight) != 5 or np.shape(weight)[1] != c_in:
        raise DimensionError(f"CDU {name}: weight shape {np.shape(weight)} expects {c_in} input channels")


def cdu_ti_branch(z, w, s):
    """Interpolation branch: conv -> PReLU -> trilinear -> conv."""
    _check_branch("ti_conv1", w.ti_conv1, z.shape[-1])
    y = conv3d(z, w.ti_conv1, w.ti_conv1_bias, padding=_same(w.ti_conv1))
    y = trilinear_upsample(prelu(y, w.prelu_ti), s)
    _check_branch("ti_conv2", w.ti_conv2, y.shape[-1])
    return conv3d(y, w.ti_conv2, w.ti_conv2_bias, padding=_same(w.ti_conv2))


def cdu_ps_branch(z, w, s):
    """Pixel-shuffle branch: conv (channel expand) -> PReLU -> shuffle -> conv."""
    _check_branch("ps_conv1", w.ps_conv1, z.shape[-1])
    y = conv3d(z, w.ps_conv1, w.ps_conv1_bias, padding=_same(w.ps_conv1))
    y = pixel_shuffle3d(prelu(y, w.prelu_ps), s)
    _check_branch("ps_conv2", w.ps_conv2, y.shape[-1])
    return conv3d(y, w.ps_conv2, w.ps_conv2_bias, padding=_same(w.ps_conv2))


def cdu_forward(z, w, s):
    """Cubic dual upsample: fuse the trilinear and pixel-shuffle branches.

    Maps (b, t, h, w, c) to (b, s_t*t, s_h*h, s_w*w, c/2).
    """
    z = as_tensor5(z, "z_in")
    c = z.shape[-1]
    if c % 2:
        raise DimensionError(f"CDU input must have an even channel count, got shape {z.shape}")
    z_ti = cdu_ti_branch(z, w, s)
    z_ps = cdu_ps_branch(z, w, s)
    cat = np.concatenate([z_ti, z_ps], axis=-1)
    _check_branch("fuse_conv", w.fuse_conv, cat.shape[-1])
    return conv3d(cat, w.fuse_conv, w.fuse_conv_bias, padding=_same(w.fuse_conv))
