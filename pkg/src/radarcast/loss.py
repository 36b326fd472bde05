"""Fourier amplitude / correlation losses and their scheduled blend.

FAL compares per-frame amplitude spectra (L1, normalized by H*W); FCL is
one minus the normalized spectral inner product, which by Parseval equals
one minus the zero-lag spatial correlation. FACL blends the two with a
weight that falls linearly from 1 to 0 over training.
"""

import warnings

import numpy as np

from .errors import DimensionError, ScheduleError
from .tensor import as_tensor5


def _dft_matrix(n):
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def dft2(x, method="direct"):
    """2-D DFT over the last two axes.

    ``method="direct"`` evaluates the transform as two dense DFT-matrix
    products (exact sums, no FFT); ``"fft"`` uses :func:`numpy.fft.fft2`.
    """
    x = np.asarray(x, dtype=np.float64)
    if method == "fft":
        return np.fft.fft2(x)
    if method != "direct":
        raise ValueError(f"unknown DFT method {method!r}")
    h, w = x.shape[-2:]
    return _dft_matrix(h) @ x @ _dft_matrix(w).T


def dft2_amplitude(frame, method="direct"):
    """``|F(frame)|`` of a real 2-D field (or stack of fields)."""
    return np.abs(dft2(frame, method))


def _frames(x):
    # (b, t, h, w, c) -> (b, t, c, h, w)
    return as_tensor5(x).transpose(0, 1, 4, 2, 3)


def _check(pred, target):
    if np.shape(pred) != np.shape(target):
        raise DimensionError(f"loss inputs differ in shape: {np.shape(pred)} vs {np.shape(target)}")


def fal(pred, target, method="direct"):
    """Fourier amplitude loss: mean |A(pred) - A(target)| / (H W) over frames."""
    _check(pred, target)
    p, t = _frames(pred), _frames(target)
    hw = p.shape[-1] * p.shape[-2]
    diff = np.abs(dft2_amplitude(p, method) - dft2_amplitude(t, method)) / hw
    return float(diff.mean(axis=(-2, -1)).mean())


def fcl(pred, target, method="direct"):
    """Fourier correlation loss: ``1 - Re<F(p), F(t)> / (|F(p)| |F(t)|)`` averaged over frames.

    Frames where either field is identically zero contribute 1 and emit a
    :class:`RuntimeWarning`.
    """
    _check(pred, target)
    fp, ft = dft2(_frames(pred), method), dft2(_frames(target), method)
    inner = np.real(fp * np.conj(ft)).sum(axis=(-2, -1))
    norm = np.sqrt((np.abs(fp) ** 2).sum(axis=(-2, -1)) * (np.abs(ft) ** 2).sum(axis=(-2, -1)))
    empty = norm == 0
    if empty.any():
        warnings.warn(f"{int(empty.sum())} all-zero frame(s) in FCL; scored as loss 1", RuntimeWarning, stacklevel=2)
    corr = np.where(empty, 0.0, inner / np.where(empty, 1.0, norm))
    return float((1.0 - corr).mean())


def schedule_weight(n, total):
    """``P(n) = 1 - n / N``: 1 at the start of training, 0 at the end."""
    if total <= 0:
        raise ScheduleError(f"total iterations must be positive, got {total}")
    if not 0 <= n <= total:
        raise ScheduleError(f"iteration {n} outside [0, {total}]")
    return min(1.0, max(0.0, 1.0 - n / total))


def facl(pred, target, n, total, method="direct"):
    """``(1 - P(n)) * FAL + P(n) * FCL``."""
    p = schedule_weight(n, total)
    if p == 1.0:
        return fcl(pred, target, method)
    if p == 0.0:
        return fal(pred, target, method)
    return (1.0 - p) * fal(pred, target, method) + p * fcl(pred, target, method)
