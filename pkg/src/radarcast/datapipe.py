"""Radar frame preprocessing, dataset profiles and sequence windowing."""

import datetime as dt
import json
import os
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .container import atomic_write
from .errors import ConfigError, DimensionError, DomainError, FormatError
from .verify import ThresholdSet

UNITS = ("raw_0p01dBZ", "dBZ", "mm_per_h", "VIL_pixel", "dbz_fraction", "pixel")

ZR_A = 200.0
ZR_B = 1.6
DBZ_FLOOR = -32.0
KMA_SCALE = 10_000.0


@dataclass(frozen=True)
class RadarGrid:
    """One timestamped 2-D radar frame."""

    timestamp: int
    data: np.ndarray
    unit: str
    resolution_km: float = 1.0
    source: str = ""

    def __post_init__(self):
        if self.unit not in UNITS:
            raise ConfigError(f"unknown unit {self.unit!r}; expected one of {UNITS}")
        if np.ndim(self.data) != 2:
            raise DimensionError(f"radar grid must be 2-D, got shape {np.shape(self.data)}")

    @property
    def time(self):
        return dt.datetime.fromtimestamp(self.timestamp, dt.timezone.utc)


def normalize_kma(raw):
    """Clip negative HSR values (0.01 dBZ units) to 0 and divide by 10,000.

    Only accepts grids tagged ``raw_0p01dBZ``; the result is tagged
    ``dbz_fraction`` so the scaling cannot be applied twice.
    """
    if raw.unit != "raw_0p01dBZ":
        raise ConfigError(f"normalize_kma expects unit 'raw_0p01dBZ', got {raw.unit!r}")
    data = np.maximum(np.asarray(raw.data, dtype=np.float64), 0.0) / KMA_SCALE
    if np.any(data >= 1.0):
        warnings.warn("KMA values at or above 100 dBZ after normalization", RuntimeWarning, stacklevel=2)
    return replace(raw, data=data.astype(np.float32), unit="dbz_fraction")


def rain_to_dbz(rain):
    """Marshall-Palmer ``Z = 200 R^1.6`` in dBZ; ``R = 0`` maps to -32 dBZ."""
    r = np.asarray(rain, dtype=np.float64)
    if np.any(r < 0) or np.any(np.isnan(r)):
        raise DomainError("rain rate must be non-negative")
    with np.errstate(divide="ignore"):
        z = 10.0 * np.log10(ZR_A * r**ZR_B)
    z = np.where(r > 0, z, DBZ_FLOOR)
    return float(z) if z.ndim == 0 else z


def dbz_to_rain(dbz):
    """Inverse Z-R: ``R = (10^(dBZ/10) / 200)^(1/1.6)``; values at the floor map to 0."""
    z = np.asarray(dbz, dtype=np.float64)
    r = (10.0 ** (z / 10.0) / ZR_A) ** (1.0 / ZR_B)
    r = np.where(z > DBZ_FLOOR, r, 0.0)
    return float(r) if r.ndim == 0 else r


def kma_to_rain(fraction):
    """Normalized KMA values (dBZ / 100) to rain rate in mm/h."""
    return dbz_to_rain(np.asarray(fraction, dtype=np.float64) * 100.0)


def subsample_crop(grid, factor, crop):
    """Keep every ``factor``-th row/column from index 0, then crop the centre.

    Works on a :class:`RadarGrid` or a bare 2-D array; the crop offsets are
    ``floor((extent - crop) / 2)``.
    """
    factor = int(factor)
    if factor < 1:
        raise ConfigError(f"subsample factor must be >= 1, got {factor}")
    data = grid.data if isinstance(grid, RadarGrid) else np.asarray(grid)
    sub = data[::factor, ::factor]
    ch, cw = crop
    h, w = sub.shape
    if ch > h or cw > w:
        raise DimensionError(f"crop {crop} larger than subsampled grid {sub.shape}")
    r0, c0 = (h - ch) // 2, (w - cw) // 2
    out = sub[r0:r0 + ch, c0:c0 + cw].copy()
    if isinstance(grid, RadarGrid):
        return replace(grid, data=out, resolution_km=grid.resolution_km * factor)
    return out


def crop_offsets(shape, factor, crop):
    h, w = (-(-n // factor) for n in shape)
    return ((h - crop[0]) // 2, (w - crop[1]) // 2)


@dataclass(frozen=True)
class DatasetProfile:
    name: str
    frame_interval_minutes: int
    native_shape: tuple
    processed_shape: tuple
    value_range: tuple
    thresholds: ThresholdSet
    in_frames: int
    out_frames: int
    preset: str
    split_years: tuple = None  # (first validation year, first test year)
    eval_transform: str = "identity"
    subsample: int = 1
    crop_mode: str = "center"

    def __post_init__(self):
        if self.in_frames < 1 or self.out_frames < 1:
            raise ConfigError(f"profile {self.name}: frame counts must be positive")

    @property
    def interval_seconds(self):
        return 60 * self.frame_interval_minutes

    @property
    def window_length(self):
        return self.in_frames + self.out_frames

    def to_eval_units(self, x):
        """Map stored values to the units the thresholds are expressed in."""
        if self.eval_transform == "kma_to_rain":
            return kma_to_rain(x).astype(np.float32)
        return np.asarray(x, dtype=np.float32)


_KMA = dict(
    frame_interval_minutes=10, native_shape=(2304, 2880), processed_shape=(256, 256), value_range=(0.0, 1.0),
    thresholds=ThresholdSet((1, 4, 8, 10, 20, 40, 80), "mm_per_h"), in_frames=7, split_years=(2022, 2023),
    eval_transform="kma_to_rain", subsample=8,
)

PROFILES = {
    "kma": DatasetProfile(name="kma", out_frames=6, preset="kma-1h", **_KMA),
    "kma-6h": DatasetProfile(name="kma-6h", out_frames=36, preset="kma-6h", **_KMA),
    "sevir": DatasetProfile(
        name="sevir", frame_interval_minutes=5, native_shape=(384, 384), processed_shape=(384, 384),
        value_range=(0.0, 256.0), thresholds=ThresholdSet((16, 74, 133, 160, 181, 219), "pixel"),
        in_frames=13, out_frames=12, preset="sevir",
    ),
    "meteonet": DatasetProfile(
        name="meteonet", frame_interval_minutes=5, native_shape=(515, 784), processed_shape=(416, 416),
        value_range=(0.0, 70.0), thresholds=ThresholdSet((19, 28, 35, 40, 47), "dBZ"),
        in_frames=12, out_frames=12, preset="meteonet", crop_mode="upper_left",
    ),
    "toy": DatasetProfile(
        name="toy", frame_interval_minutes=10, native_shape=(16, 16), processed_shape=(16, 16),
        value_range=(0.0, 1.0), thresholds=ThresholdSet((0.1, 0.3, 0.5), "pixel"),
        in_frames=4, out_frames=4, preset="toy", split_years=(2022, 2023),
    ),
}


def get_profile(name):
    try:
        return PROFILES[name]
    except KeyError:
        raise ConfigError(f"unknown dataset profile {name!r}; choose from {sorted(PROFILES)}") from None


def crop_upper_left(data, shape):
    """MeteoNet-style crop of the upper-left ``shape`` corner."""
    h, w = shape
    if h > data.shape[0] or w > data.shape[1]:
        raise DimensionError(f"crop {shape} larger than frame {data.shape}")
    return np.array(data[:h, :w])


def preprocess_grid(grid, profile, factor=None, crop=None):
    """Apply a profile's preprocessing chain to one frame.

    Raw KMA frames are normalized first; then the frame is subsampled and
    cropped (centred, or the upper-left corner for MeteoNet).
    """
    if grid.unit == "raw_0p01dBZ":
        grid = normalize_kma(grid)
    factor = profile.subsample if factor is None else int(factor)
    crop = tuple(profile.processed_shape if crop is None else crop)
    if profile.crop_mode == "upper_left":
        sub = grid.data[::factor, ::factor]
        return replace(grid, data=crop_upper_left(sub, crop), resolution_km=grid.resolution_km * factor)
    return subsample_crop(grid, factor, crop)


@dataclass(frozen=True)
class SequenceSample:
    """Index range ``[start, start + n_in + n_out)`` into a timestamp list."""

    start: int
    n_in: int
    n_out: int
    start_timestamp: int

    @property
    def stop(self):
        return self.start + self.n_in + self.n_out

    @property
    def inputs(self):
        return range(self.start, self.start + self.n_in)

    @property
    def targets(self):
        return range(self.start + self.n_in, self.stop)

    def to_json(self):
        return json.dumps(
            {"start": self.start, "n_in": self.n_in, "n_out": self.n_out, "start_timestamp": self.start_timestamp},
            sort_keys=True,
        )


def build_windows(timestamps, profile, stride=1):
    """Every gap-free window of ``in_frames + out_frames`` consecutive stamps.

    Candidate windows start at indices ``0, stride, 2*stride, ...``; a
    window is emitted only when all consecutive differences equal the
    profile interval. Missing frames are never bridged.
    """
    ts = np.asarray(timestamps, dtype=np.int64)
    if ts.ndim != 1:
        raise DimensionError("timestamps must be a 1-D sequence")
    if np.any(np.diff(ts) <= 0):
        raise ConfigError("timestamps must be strictly increasing")
    stride = int(stride)
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    n = profile.window_length
    if len(ts) < n:
        return []
    ok = np.diff(ts) == profile.interval_seconds
    # bad[i] = number of broken links among the first i links
    bad = np.concatenate([[0], np.cumsum(~ok)])
    starts = np.arange(0, len(ts) - n + 1, stride)
    good = bad[starts + n - 1] - bad[starts] == 0
    return [SequenceSample(int(s), profile.in_frames, profile.out_frames, int(ts[s])) for s in starts[good]]


def time_split(samples, profile):
    """Assign samples to train/val/test by the UTC year of their first input frame."""
    if profile.split_years is None:
        raise ConfigError(f"profile {profile.name!r} has no time-split rule")
    val_year, test_year = profile.split_years
    out = {"train": [], "val": [], "test": []}
    for s in samples:
        year = dt.datetime.fromtimestamp(s.start_timestamp, dt.timezone.utc).year
        if year < val_year:
            out["train"].append(s)
        elif year < test_year:
            out["val"].append(s)
        else:
            out["test"].append(s)
    return out


# file formats -------------------------------------------------------------

def sidecar_path(path):
    return os.path.splitext(os.fspath(path))[0] + ".json"


def parse_time(value):
    """ISO-8601 string (naive means UTC) or epoch seconds to epoch seconds."""
    if isinstance(value, (int, float)):
        return int(value)
    t = dt.datetime.fromisoformat(str(value).replace("Z", "+00:00"))
    if t.tzinfo is None:
        t = t.replace(tzinfo=dt.timezone.utc)
    return int(t.timestamp())


def format_time(ts):
    return dt.datetime.fromtimestamp(int(ts), dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def write_frame(path, grid):
    """Write ``grid`` as little-endian uint16 plus a JSON sidecar."""
    data = np.asarray(grid.data)
    if data.min(initial=0) < 0 or data.max(initial=0) > 65535:
        raise DomainError("frame values do not fit in uint16")
    atomic_write(path, np.rint(data).astype("<u2").tobytes())
    meta = {"timestamp": format_time(grid.timestamp), "shape": list(data.shape), "unit": grid.unit,
            "resolution_km": grid.resolution_km}
    atomic_write(sidecar_path(path), (json.dumps(meta, sort_keys=True) + "\n").encode())


def read_frame(path, source=""):
    """Read a uint16 frame and its sidecar into a :class:`RadarGrid`."""
    with open(sidecar_path(path)) as f:
        meta = json.load(f)
    shape = tuple(int(v) for v in meta["shape"])
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) != 2 * shape[0] * shape[1]:
        raise FormatError(f"{path}: {len(raw)} bytes does not match shape {shape}")
    data = np.frombuffer(raw, dtype="<u2").reshape(shape).astype(np.float32)
    return RadarGrid(parse_time(meta["timestamp"]), data, meta["unit"], float(meta.get("resolution_km", 1.0)),
                     source)


def write_index(path, samples):
    atomic_write(path, "".join(s.to_json() + "\n" for s in samples).encode())


def read_index(path):
    with open(path) as f:
        return [SequenceSample(**json.loads(line)) for line in f if line.strip()]


def write_pgm(path, img):
    """Binary 8-bit PGM (P5, maxval 255)."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise DimensionError(f"PGM image must be 2-D, got {img.shape}")
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    atomic_write(path, header + np.clip(img, 0, 255).astype(np.uint8).tobytes())


def read_pgm(path):
    """Read a binary P5 PGM with maxval <= 255 as a uint8 array."""
    with open(path, "rb") as f:
        buf = f.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(buf[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise FormatError(f"{path}: only 8-bit PGM supported")
    data = buf[pos:pos + w * h]
    if len(data) != w * h:
        raise FormatError(f"{path}: truncated PGM data")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w).copy()


def read_mask(path):
    """8-bit PGM mask; nonzero pixels are evaluated."""
    return read_pgm(path) != 0


# synthetic data -------------------------------------------------------------

def advected_blobs(n_frames, shape=(16, 16), n_blobs=3, seed=0, peak=1.0):
    """Gaussian rain cells drifting with constant velocity (periodic domain).

    Returns an (n_frames, h, w) float32 array with values in [0, peak].
    """
    rng = np.random.default_rng(seed)
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    centers = rng.uniform(0, 1, (n_blobs, 2)) * (h, w)
    vel = rng.uniform(-0.6, 0.6, (n_blobs, 2))
    sigma = rng.uniform(1.5, 3.0, n_blobs) * max(h, w) / 16
    amp = rng.uniform(0.4, 1.0, n_blobs)
    out = np.zeros((n_frames, h, w))
    for t in range(n_frames):
        for (cy, cx), (vy, vx), s, a in zip(centers, vel, sigma, amp):
            dy = (yy - cy - vy * t + h / 2) % h - h / 2
            dx = (xx - cx - vx * t + w / 2) % w - w / 2
            out[t] += a * np.exp(-(dy**2 + dx**2) / (2 * s * s))
    return (np.clip(out, 0, None) / max(out.max(), 1e-12) * peak).astype(np.float32)
