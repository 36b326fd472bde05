"""Categorical and spatial verification scores for radar forecasts.

Fields are accepted as (b, t, h, w, c) arrays; lower-rank inputs are
promoted (``(h, w)``, ``(t, h, w)``, ``(t, h, w, c)``). Masks are 2-D
``(h, w)`` arrays, nonzero meaning "evaluate".

Ratios whose denominator is zero are reported as ``None`` (absent) and are
left out of threshold averages.
"""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import max_pool2d

UNITS = ("mm_per_h", "dBZ", "pixel")


@dataclass(frozen=True)
class ThresholdSet:
    values: tuple
    unit: str = "mm_per_h"

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        object.__setattr__(self, "values", v)
        if not v:
            raise ConfigError("threshold set is empty")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ConfigError(f"thresholds must be strictly increasing: {v}")
        if self.unit not in UNITS:
            raise ConfigError(f"unknown threshold unit {self.unit!r}")

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class ContingencyTable:
    hits: int = 0
    misses: int = 0
    false_alarms: int = 0
    correct_rejections: int = 0

    def __add__(self, other):
        return ContingencyTable(
            self.hits + other.hits,
            self.misses + other.misses,
            self.false_alarms + other.false_alarms,
            self.correct_rejections + other.correct_rejections,
        )

    @property
    def total(self):
        return self.hits + self.misses + self.false_alarms + self.correct_rejections

    def as_list(self):
        return [self.hits, self.misses, self.false_alarms, self.correct_rejections]


def _to5(x):
    x = np.asarray(x)
    if x.ndim == 2:
        return x[None, None, :, :, None]
    if x.ndim == 3:
        return x[None, :, :, :, None]
    if x.ndim == 4:
        return x[None]
    if x.ndim == 5:
        return x
    raise DimensionError(f"cannot interpret array of shape {x.shape} as a radar field")


def _pair(pred, obs):
    p, o = _to5(pred), _to5(obs)
    if p.shape != o.shape:
        raise DimensionError(f"prediction shape {p.shape} differs from observation shape {o.shape}")
    return p, o


def _mask5(mask, shape):
    if mask is None:
        return np.ones((1, 1) + tuple(shape[2:4]) + (1,), dtype=bool)
    m = np.asarray(mask)
    if m.shape != tuple(shape[2:4]):
        raise DimensionError(f"mask shape {m.shape} does not match field extent {tuple(shape[2:4])}")
    return (m != 0)[None, None, :, :, None]


def contingency(pred, obs, p, mask=None):
    """Hit / miss / false-alarm / correct-rejection counts for exceedance ``>= p``."""
    pred, obs = _pair(pred, obs)
    m = np.broadcast_to(_mask5(mask, pred.shape), pred.shape)
    fp = pred >= p
    fo = obs >= p
    return ContingencyTable(
        int(np.count_nonzero(fp & fo & m)),
        int(np.count_nonzero(~fp & fo & m)),
        int(np.count_nonzero(fp & ~fo & m)),
        int(np.count_nonzero(~fp & ~fo & m)),
    )


def csi(table):
    """``H / (H + M + FA)``, or ``None`` when no event was forecast or observed."""
    den = table.hits + table.misses + table.false_alarms
    return table.hits / den if den else None


def _mean_defined(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def csi_m(tables):
    """Mean CSI over thresholds, skipping thresholds where CSI is undefined."""
    return _mean_defined(csi(t) for t in tables)


def hss_score(table, form="standard"):
    """Heidke skill score of one table.

    ``form="standard"`` is ``2(H CR - M FA) / ((H+M)(M+CR) + (H+FA)(FA+CR))``.
    ``form="printed"`` reproduces the alternative numerator/denominator
    arrangement ``2(H M - FA CR) / ((H+FA)(FA+M) + (H+CR)(CR+M))`` for
    comparison against numbers computed that way; it does not score a perfect
    forecast as 1.
    """
    h, m, fa, cr = (float(v) for v in table.as_list())
    if form == "standard":
        num = 2.0 * (h * cr - m * fa)
        den = (h + m) * (m + cr) + (h + fa) * (fa + cr)
    elif form == "printed":
        num = 2.0 * (h * m - fa * cr)
        den = (h + fa) * (fa + m) + (h + cr) * (cr + m)
    else:
        raise ConfigError(f"unknown HSS form {form!r}")
    return num / den if den else None


def hss(tables, form="standard"):
    return _mean_defined(hss_score(t, form) for t in tables)


def pool_fields(pred, obs, k, mask=None):
    """Max-pool both fields with kernel ``k`` and stride ``k // 4``.

    The mask is pooled with a min so a pooled cell is evaluated only when its
    whole window lies inside the mask. ``k == 1`` returns the inputs unchanged.
    """
    pred, obs = _pair(pred, obs)
    k = int(k)
    if k == 1:
        return pred, obs, mask
    if k < 4 or k % 4:
        raise ConfigError(f"pool size must be 1 or a multiple of 4, got {k}")
    s = k // 4
    pp = max_pool2d(pred.astype(np.float32, copy=False), k, s)
    po = max_pool2d(obs.astype(np.float32, copy=False), k, s)
    pm = None
    if mask is not None:
        inv = (np.asarray(mask) == 0).astype(np.float32)[None, None, :, :, None]
        pm = max_pool2d(inv, k, s)[0, 0, :, :, 0] == 0
    return pp, po, pm


def pooled_contingency(pred, obs, p, k, mask=None):
    pp, po, pm = pool_fields(pred, obs, k, mask)
    return contingency(pp, po, p, pm)


def pooled_csi(pred, obs, p, k, mask=None):
    return csi(pooled_contingency(pred, obs, p, k, mask))


def _box_sum(x, n):
    """Sum over an n x n window centred on each cell (zeros outside), axes 2 and 3."""
    r = n // 2
    xp = np.pad(x, ((0, 0), (0, 0), (r + 1, r), (r + 1, r), (0, 0)))
    c = xp.cumsum(axis=2).cumsum(axis=3)
    h, w = x.shape[2:4]
    return c[:, :, n:n + h, n:n + w] - c[:, :, :h, n:n + w] - c[:, :, n:n + h, :w] + c[:, :, :h, :w]


def fss_sums(pred, obs, p, n, mask=None):
    """Return ``(sum (fp - fo)^2, sum fp^2 + sum fo^2)`` over evaluated cells."""
    n = int(n)
    if n < 1 or n % 2 == 0:
        raise ConfigError(f"FSS neighbourhood must be a positive odd integer, got {n}")
    pred, obs = _pair(pred, obs)
    m = _mask5(mask, pred.shape)
    bp = ((pred >= p) & m).astype(np.float64)
    bo = ((obs >= p) & m).astype(np.float64)
    fp = _box_sum(bp, n) / (n * n)
    fo = _box_sum(bo, n) / (n * n)
    mm = np.broadcast_to(m, fp.shape)
    num = float(((fp - fo) ** 2)[mm].sum())
    den = float((fp**2)[mm].sum() + (fo**2)[mm].sum())
    return num, den


def fss(pred, obs, p, n, mask=None):
    """Fractions skill score, ``None`` when neither field has an event."""
    num, den = fss_sums(pred, obs, p, n, mask)
    return 1.0 - num / den if den else None


def _bins(x, thresholds):
    return np.searchsorted(np.asarray(thresholds, dtype=np.float64), x, side="right")


def rhd_sums(pred, obs, region, thresholds, mask=None):
    """Return ``(sum of block L1 distances, number of blocks)``."""
    region = int(region)
    if region <= 0:
        raise ConfigError(f"RHD region size must be positive, got {region}")
    pred, obs = _pair(pred, obs)
    m = np.broadcast_to(_mask5(mask, pred.shape), pred.shape)
    nb = len(thresholds) + 1
    bp, bo = _bins(pred, thresholds), _bins(obs, thresholds)
    b, t, h, w, c = pred.shape
    total, count = 0.0, 0
    for i0 in range(0, h, region):
        for j0 in range(0, w, region):
            sl = (slice(None), slice(None), slice(i0, i0 + region), slice(j0, j0 + region), slice(None))
            # one histogram per (b, t, c) frame
            mb = m[sl].transpose(0, 1, 4, 2, 3).reshape(b * t * c, -1)
            hp = bp[sl].transpose(0, 1, 4, 2, 3).reshape(b * t * c, -1)
            ho = bo[sl].transpose(0, 1, 4, 2, 3).reshape(b * t * c, -1)
            cnt = mb.sum(axis=1)
            keep = cnt > 0
            if not keep.any():
                continue
            onehot = np.arange(nb)[None, None, :]
            dp = ((hp[..., None] == onehot) & mb[..., None]).sum(axis=1) / np.maximum(cnt, 1)[:, None]
            do = ((ho[..., None] == onehot) & mb[..., None]).sum(axis=1) / np.maximum(cnt, 1)[:, None]
            total += float(np.abs(dp - do).sum(axis=1)[keep].sum())
            count += int(keep.sum())
    return total, count


def rhd(pred, obs, region, thresholds, mask=None):
    """Regional histogram divergence: mean per-block L1 between intensity-bin distributions."""
    total, count = rhd_sums(pred, obs, region, thresholds, mask)
    return total / count if count else None


def mae_mse(pred, obs, mask=None):
    """Masked mean absolute and squared error; ``(None, None)`` for an empty mask."""
    pred, obs = _pair(pred, obs)
    m = np.broadcast_to(_mask5(mask, pred.shape), pred.shape)
    d = (pred.astype(np.float64) - obs.astype(np.float64))[m]
    if d.size == 0:
        return None, None
    return float(np.abs(d).mean()), float((d**2).mean())


@dataclass
class MetricReport:
    """Result of an evaluation run.

    ``csi`` and ``counts`` are keyed by pool size then threshold (as strings
    so the report round-trips through JSON); ``fss`` is keyed by
    neighbourhood then threshold.
    """

    thresholds: list
    unit: str
    pools: list
    csi: dict
    csi_m: dict
    hss: float
    hss_per_threshold: dict
    fss: dict
    rhd: float
    mae: float
    mse: float
    counts: dict
    cells: int
    absent: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def rows(self):
        """Flat ``(metric, threshold, pool, value)`` rows in a stable order."""
        out = []
        for k in self.pools:
            for thr in self.thresholds:
                out.append(("csi", thr, k, self.csi[str(k)][_key(thr)]))
            out.append(("csi_m", "", k, self.csi_m[str(k)]))
        for thr in self.thresholds:
            out.append(("hss", thr, 1, self.hss_per_threshold[_key(thr)]))
        out.append(("hss_m", "", 1, self.hss))
        for n in sorted(self.fss, key=int):
            for thr in self.thresholds:
                out.append((f"fss_{n}", thr, 1, self.fss[n][_key(thr)]))
        out.append(("rhd", "", 1, self.rhd))
        out.append(("mae", "", 1, self.mae))
        out.append(("mse", "", 1, self.mse))
        return out

    def to_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["metric", "threshold", "pool", "value"])
        for metric, thr, pool, val in self.rows():
            wr.writerow([metric, thr, pool, "" if val is None else repr(float(val))])
        return buf.getvalue()

    def ranges_ok(self):
        """True when every reported score lies inside its documented range."""
        checks = []
        for per in self.csi.values():
            checks += [v is None or 0.0 <= v <= 1.0 for v in per.values()]
        checks += [v is None or 0.0 <= v <= 1.0 for v in self.csi_m.values()]
        checks += [v is None or -1.0 <= v <= 1.0 for v in self.hss_per_threshold.values()]
        checks.append(self.hss is None or -1.0 <= self.hss <= 1.0)
        for per in self.fss.values():
            checks += [v is None or 0.0 <= v <= 1.0 for v in per.values()]
        checks.append(self.rhd is None or 0.0 <= self.rhd <= 2.0)
        checks.append(self.mae is None or self.mae >= 0.0)
        checks.append(self.mse is None or self.mse >= 0.0)
        return all(checks)


def _key(thr):
    return repr(float(thr))


class Evaluator:
    """Streaming accumulator of every score in :class:`MetricReport`.

    Counts and sums are additive, so evaluators fed disjoint shards can be
    combined with ``+`` in any order and give the same report as a single pass.
    """

    def __init__(self, thresholds, pools=(1,), neighbors=(15,), rhd_region=15, hss_form="standard"):
        if not isinstance(thresholds, ThresholdSet):
            thresholds = ThresholdSet(tuple(thresholds))
        self.thresholds = thresholds
        self.pools = tuple(int(k) for k in pools)
        if 1 not in self.pools:
            self.pools = (1,) + self.pools
        for k in self.pools:
            if k != 1 and (k < 4 or k % 4):
                raise ConfigError(f"pool size must be 1 or a multiple of 4, got {k}")
        self.neighbors = tuple(int(n) for n in neighbors)
        for n in self.neighbors:
            if n < 1 or n % 2 == 0:
                raise ConfigError(f"FSS neighbourhood must be a positive odd integer, got {n}")
        self.rhd_region = int(rhd_region)
        self.hss_form = hss_form
        self.tables = {k: [ContingencyTable() for _ in thresholds] for k in self.pools}
        self.fss_acc = {n: [[0.0, 0.0] for _ in thresholds] for n in self.neighbors}
        self.rhd_acc = [0.0, 0]
        self.err_acc = [0.0, 0.0, 0]

    def update(self, pred, obs, mask=None):
        pred, obs = _pair(pred, obs)
        for k in self.pools:
            pp, po, pm = pool_fields(pred, obs, k, mask)
            for i, p in enumerate(self.thresholds):
                self.tables[k][i] = self.tables[k][i] + contingency(pp, po, p, pm)
        for n in self.neighbors:
            for i, p in enumerate(self.thresholds):
                num, den = fss_sums(pred, obs, p, n, mask)
                self.fss_acc[n][i][0] += num
                self.fss_acc[n][i][1] += den
        tot, cnt = rhd_sums(pred, obs, self.rhd_region, self.thresholds.values, mask)
        self.rhd_acc[0] += tot
        self.rhd_acc[1] += cnt
        m = np.broadcast_to(_mask5(mask, pred.shape), pred.shape)
        d = (pred.astype(np.float64) - obs.astype(np.float64))[m]
        self.err_acc[0] += float(np.abs(d).sum())
        self.err_acc[1] += float((d**2).sum())
        self.err_acc[2] += int(d.size)
        return self

    def __add__(self, other):
        out = Evaluator(self.thresholds, self.pools, self.neighbors, self.rhd_region, self.hss_form)
        for k in self.pools:
            out.tables[k] = [a + b for a, b in zip(self.tables[k], other.tables[k])]
        for n in self.neighbors:
            out.fss_acc[n] = [[a[0] + b[0], a[1] + b[1]] for a, b in zip(self.fss_acc[n], other.fss_acc[n])]
        out.rhd_acc = [self.rhd_acc[0] + other.rhd_acc[0], self.rhd_acc[1] + other.rhd_acc[1]]
        out.err_acc = [a + b for a, b in zip(self.err_acc, other.err_acc)]
        return out

    def report(self, config=None):
        thr = self.thresholds.values
        absent = []
        csi_tab, csim, counts = {}, {}, {}
        for k in self.pools:
            vals = {}
            for p, t in zip(thr, self.tables[k]):
                v = csi(t)
                if v is None:
                    absent.append(f"csi[pool={k},p={p:g}]")
                vals[_key(p)] = v
            csi_tab[str(k)] = vals
            csim[str(k)] = csi_m(self.tables[k])
            counts[str(k)] = {_key(p): t.as_list() for p, t in zip(thr, self.tables[k])}
        hss_per = {}
        for p, t in zip(thr, self.tables[1]):
            v = hss_score(t, self.hss_form)
            if v is None:
                absent.append(f"hss[p={p:g}]")
            hss_per[_key(p)] = v
        fss_tab = {}
        for n in self.neighbors:
            per = {}
            for p, (num, den) in zip(thr, self.fss_acc[n]):
                per[_key(p)] = 1.0 - num / den if den else None
                if not den:
                    absent.append(f"fss[n={n},p={p:g}]")
            fss_tab[str(n)] = per
        cells = self.err_acc[2]
        return MetricReport(
            thresholds=list(thr),
            unit=self.thresholds.unit,
            pools=list(self.pools),
            csi=csi_tab,
            csi_m=csim,
            hss=hss(self.tables[1], self.hss_form),
            hss_per_threshold=hss_per,
            fss=fss_tab,
            rhd=self.rhd_acc[0] / self.rhd_acc[1] if self.rhd_acc[1] else None,
            mae=self.err_acc[0] / cells if cells else None,
            mse=self.err_acc[1] / cells if cells else None,
            counts=counts,
            cells=cells,
            absent=absent,
            config=dict(config or {}, neighbors=list(self.neighbors), rhd_region=self.rhd_region,
                        hss_form=self.hss_form),
        )


def evaluate(pred, obs, thresholds, pools=(1,), neighbors=(15,), rhd_region=15, mask=None, config=None,
             hss_form="standard"):
    """Single-pass evaluation of a forecast/observation pair."""
    ev = Evaluator(thresholds, pools, neighbors, rhd_region, hss_form)
    return ev.update(pred, obs, mask).report(config)
