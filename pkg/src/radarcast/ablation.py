"""Single-block reconstruction harness for comparing upsamplers.

The target volume is reduced by the scale factor, upsampled back with one
of the candidate operators, and the reconstruction is scored against the
original.
"""

import numpy as np

from .errors import ConfigError
from .tensor import as_tensor5
from .upsample import (
    CduWeights, as_scale, cdu_forward, interp_upsample, pixel_shuffle3d, resize, space_to_depth3d,
    trilinear_upsample,
)
from .verify import contingency, csi_m

MODES = ("cdu", "ps", "ti", "bic", "area")


def downsample(target, s):
    """Align-corners linear reduction of the (t, h, w) axes by ``s``."""
    target = as_tensor5(target)
    st, sh, sw = as_scale(s)
    t, h, w = target.shape[1:4]
    if t % st or h % sh or w % sw:
        raise ConfigError(f"target extent {(t, h, w)} not divisible by scale {(st, sh, sw)}")
    return resize(target, (t // st, h // sh, w // sw), "linear")


def reconstruct(target, mode, s, seed=0, cdu_weights=None, low=None):
    """Upsample a reduced copy of ``target`` back to full size with ``mode``.

    ``low`` overrides the reduced input for the interpolation modes and CDU;
    the ``ps`` mode always uses the exact space-to-depth of the target.
    """
    target = as_tensor5(target)
    s = as_scale(s)
    if mode not in MODES:
        raise ConfigError(f"unknown upsampling mode {mode!r}; expected one of {MODES}")
    if mode == "ps":
        return pixel_shuffle3d(space_to_depth3d(target, s), s)
    small = downsample(target, s) if low is None else as_tensor5(low)
    if mode == "ti":
        return trilinear_upsample(small, s)
    if mode == "bic":
        return interp_upsample(small, s, "bicubic")
    if mode == "area":
        return interp_upsample(small, s, "area")
    c = target.shape[-1]
    lifted = np.concatenate([small, small], axis=-1)
    w = cdu_weights if cdu_weights is not None else CduWeights.random(2 * c, s, seed=seed)
    return cdu_forward(lifted, w, s)


def ablate(target, modes=MODES, s=(1, 2, 2), thresholds=(0.1, 0.3, 0.5), seed=0, cdu_weights=None, low=None):
    """One score row per mode, in the order given."""
    target = as_tensor5(target)
    rows = []
    for mode in modes:
        rec = reconstruct(target, mode, s, seed, cdu_weights, low)
        d = rec.astype(np.float64) - target
        tables = [contingency(rec, target, p) for p in thresholds]
        rows.append({
            "mode": mode,
            "mse": float((d**2).mean()),
            "mae": float(np.abs(d).mean()),
            "csi_m": csi_m(tables),
        })
    return rows
