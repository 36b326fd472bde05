"""Plain-loop reference implementations used only by the tests.

Nothing here imports the package's kernels: each function recomputes its
quantity from the textbook definition with explicit Python loops.
"""

import math

import numpy as np


def conv3d(x, w, bias=None, stride=(1, 1, 1), padding=(0, 0, 0)):
    b, t, h, wd, ci = x.shape
    co, _, kt, kh, kw = w.shape
    st, sh, sw = stride
    pt, ph, pw = padding
    To = (t + 2 * pt - kt) // st + 1
    Ho = (h + 2 * ph - kh) // sh + 1
    Wo = (wd + 2 * pw - kw) // sw + 1
    out = np.zeros((b, To, Ho, Wo, co))
    for n in range(b):
        for i in range(To):
            for j in range(Ho):
                for k in range(Wo):
                    for o in range(co):
                        acc = 0.0 if bias is None else float(bias[o])
                        for a in range(kt):
                            for d in range(kh):
                                for e in range(kw):
                                    ti, hi, wi = i * st + a - pt, j * sh + d - ph, k * sw + e - pw
                                    if 0 <= ti < t and 0 <= hi < h and 0 <= wi < wd:
                                        for c in range(ci):
                                            acc += float(x[n, ti, hi, wi, c]) * float(w[o, c, a, d, e])
                        out[n, i, j, k, o] = acc
    return out


def max_pool2d(x, k, s):
    b, t, h, w, c = x.shape
    Ho, Wo = (h - k) // s + 1, (w - k) // s + 1
    out = np.empty((b, t, Ho, Wo, c), dtype=x.dtype)
    for n in range(b):
        for i in range(t):
            for ch in range(c):
                for r in range(Ho):
                    for q in range(Wo):
                        m = -math.inf
                        for dr in range(k):
                            for dq in range(k):
                                m = max(m, x[n, i, r * s + dr, q * s + dq, ch])
                        out[n, i, r, q, ch] = m
    return out


def dft2(x):
    h, w = x.shape
    out = np.zeros((h, w), dtype=complex)
    for u in range(h):
        for v in range(w):
            acc = 0j
            for m in range(h):
                for n in range(w):
                    acc += x[m, n] * complex(math.cos(-2 * math.pi * (u * m / h + v * n / w)),
                                             math.sin(-2 * math.pi * (u * m / h + v * n / w)))
            out[u, v] = acc
    return out


def counts(pred, obs, p, mask=None):
    """(H, M, FA, CR) by visiting every cell of flattened same-shape arrays."""
    pred = np.asarray(pred).ravel()
    obs = np.asarray(obs).ravel()
    m = np.ones(pred.size, bool) if mask is None else np.asarray(mask).ravel()
    H = M = FA = CR = 0
    for a, b, keep in zip(pred, obs, m):
        if not keep:
            continue
        if a >= p and b >= p:
            H += 1
        elif a < p and b >= p:
            M += 1
        elif a >= p and b < p:
            FA += 1
        else:
            CR += 1
    return H, M, FA, CR


def csi(H, M, FA, CR=None):
    d = H + M + FA
    return None if d == 0 else H / d


def hss(H, M, FA, CR):
    num = 2 * (H * CR - M * FA)
    den = (H + M) * (M + CR) + (H + FA) * (FA + CR)
    return None if den == 0 else num / den


def pooled_field(f, k):
    """Materialize every stride-k/4 window of a 2-D field and take its max."""
    s = k // 4
    h, w = f.shape
    rows = []
    for r in range(0, h - k + 1, s):
        row = []
        for q in range(0, w - k + 1, s):
            row.append(max(f[r + i, q + j] for i in range(k) for j in range(k)))
        rows.append(row)
    return np.array(rows)


def pooled_mask(mask, k):
    s = k // 4
    h, w = mask.shape
    return np.array([[all(mask[r + i, q + j] for i in range(k) for j in range(k))
                      for q in range(0, w - k + 1, s)] for r in range(0, h - k + 1, s)])


def fractions(binary, n):
    h, w = binary.shape
    r = n // 2
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for a in range(i - r, i + r + 1):
                for b in range(j - r, j + r + 1):
                    if 0 <= a < h and 0 <= b < w:
                        acc += binary[a, b]
            out[i, j] = acc / (n * n)
    return out


def fss_frames(pred_frames, obs_frames, p, n, mask=None):
    num = den = 0.0
    for fp, fo in zip(pred_frames, obs_frames):
        m = np.ones(fp.shape, bool) if mask is None else mask
        bp = ((fp >= p) & m).astype(float)
        bo = ((fo >= p) & m).astype(float)
        qp, qo = fractions(bp, n), fractions(bo, n)
        for i in range(fp.shape[0]):
            for j in range(fp.shape[1]):
                if m[i, j]:
                    num += (qp[i, j] - qo[i, j]) ** 2
                    den += qp[i, j] ** 2 + qo[i, j] ** 2
    return None if den == 0 else 1 - num / den


def rhd_frames(pred_frames, obs_frames, region, thresholds, mask=None):
    def bin_of(v):
        k = 0
        for t in thresholds:
            if v >= t:
                k += 1
        return k

    nb = len(thresholds) + 1
    total, blocks = 0.0, 0
    for fp, fo in zip(pred_frames, obs_frames):
        h, w = fp.shape
        for i0 in range(0, h, region):
            for j0 in range(0, w, region):
                hp, ho = [0] * nb, [0] * nb
                cnt = 0
                for i in range(i0, min(h, i0 + region)):
                    for j in range(j0, min(w, j0 + region)):
                        if mask is not None and not mask[i, j]:
                            continue
                        hp[bin_of(fp[i, j])] += 1
                        ho[bin_of(fo[i, j])] += 1
                        cnt += 1
                if cnt:
                    total += sum(abs(a - b) / cnt for a, b in zip(hp, ho))
                    blocks += 1
    return None if blocks == 0 else total / blocks


def windows(stamps, n, interval, stride):
    """Enumerate window starts by checking every internal delta one by one."""
    out = []
    start = 0
    while start + n <= len(stamps):
        if all(stamps[start + i + 1] - stamps[start + i] == interval for i in range(n - 1)):
            out.append(start)
        start += stride
    return out
