"""Forward-only 3-D shifted-window encoder/decoder for radar sequences.

The network is assembled from small pure functions:

* :func:`patch_embed` cuts the input into non-overlapping (M_t, M_h, M_w)
  patches and projects each to ``embed_dim`` channels.
* :func:`swin_block` is a pre-norm transformer block whose attention is
  restricted to local 3-D windows, optionally cyclically shifted.
* :func:`patch_merge` halves the spatial extent between encoder stages; the
  decoder uses the CDU block from :mod:`radarcast.upsample` instead.
* :func:`patch_expand` recovers full resolution with a transposed
  convolution and :func:`te_forward` maps decoder frames to forecast frames.

Weights live in a flat name -> array :class:`WeightStore` whose required
names and shapes are fully determined by :class:`ModelConfig`.
"""

import dataclasses
import hashlib
import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import container
from .errors import ConfigError, DimensionError, ValidationError
from .tensor import ACC, DTYPE, as_tensor5, conv3d, conv_transpose3d, gelu, layer_norm, linear, softmax
from .upsample import CduWeights, as_scale, cdu_forward, resize, trilinear_upsample, trunc_normal

INIT_STD = 0.02
PRELU_INIT = 0.25


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``depths`` lists encoder stage block counts; the decoder mirrors them.
    ``expand_stride`` is the kernel and stride of the final transposed
    convolution. ``decoder_temporal_len`` defaults to the number of frames
    the decoder naturally produces; when set to a different value the
    expanded volume is linearly resampled in time before the temporal
    extractor.
    """

    in_frames: int
    out_frames: int
    height: int
    width: int
    patch_size: tuple = (2, 4, 4)
    depths: tuple = (2, 6, 2)
    bottleneck_depth: int = 2
    embed_dim: int = 96
    num_heads: tuple = (3, 6, 12)
    window_size: tuple = (2, 4, 4)
    cdu_scale: tuple = (1, 2, 2)
    skip_mode: str = "add"
    expand_stride: tuple = None
    decoder_temporal_len: int = None
    in_chans: int = 1
    mlp_ratio: int = 4
    cdu_kernel: tuple = (3, 3, 3)
    te_kernel: tuple = (3, 3)
    name: str = "custom"

    def __post_init__(self):
        for key in ("patch_size", "depths", "num_heads", "window_size", "cdu_scale", "cdu_kernel", "te_kernel"):
            object.__setattr__(self, key, tuple(int(v) for v in getattr(self, key)))
        if self.expand_stride is None:
            object.__setattr__(self, "expand_stride", self.patch_size)
        else:
            object.__setattr__(self, "expand_stride", tuple(int(v) for v in self.expand_stride))
        if self.decoder_temporal_len is None:
            object.__setattr__(self, "decoder_temporal_len", self.natural_decoder_len)
        self.validate()

    # geometry -------------------------------------------------------------

    @property
    def num_stages(self):
        return len(self.depths)

    @property
    def padded_frames(self):
        mt = self.patch_size[0]
        return -(-self.in_frames // mt) * mt

    @property
    def token_grid(self):
        mt, mh, mw = self.patch_size
        return (self.padded_frames // mt, self.height // mh, self.width // mw)

    def stage_dim(self, i):
        return self.embed_dim * 2**i

    def encoder_extent(self, i):
        t, h, w = self.token_grid
        return (t, h // 2**i, w // 2**i)

    def decoder_extent(self, i):
        """Token extent inside decoder stage ``i`` (0 = shallowest)."""
        t, h, w = self.encoder_extent(i)
        st = self.cdu_scale[0]
        return (t * st ** (self.num_stages - 1 - i), h, w)

    @property
    def natural_decoder_len(self):
        return self.decoder_extent(0)[0] * self.expand_stride[0]

    def stage_window(self, extent):
        """Effective window and shift on a stage of the given extent.

        Windows larger than the extent are clamped to it, and no shift is
        applied along an axis covered by a single window.
        """
        win = tuple(min(w, n) for w, n in zip(self.window_size, extent))
        shift = tuple(0 if n <= w else w // 2 for w, n in zip(self.window_size, extent))
        return win, shift

    def validate(self):
        if self.skip_mode not in ("add", "concat"):
            raise ConfigError(f"skip_mode must be 'add' or 'concat', got {self.skip_mode!r}")
        if len(self.num_heads) != self.num_stages:
            raise ConfigError(f"num_heads {self.num_heads} must have one entry per stage {self.depths}")
        if min(self.depths) < 1 or self.bottleneck_depth < 0:
            raise ConfigError(f"invalid depths {self.depths} / bottleneck {self.bottleneck_depth}")
        as_scale(self.cdu_scale)
        if self.cdu_scale[1:] != (2, 2):
            raise ConfigError("cdu_scale must double the spatial axes to undo patch merging")
        mt, mh, mw = self.patch_size
        if self.height % mh or self.width % mw:
            raise ConfigError(f"input {self.height}x{self.width} not divisible by patch {self.patch_size}")
        _, h0, w0 = self.token_grid
        f = 2 ** (self.num_stages - 1)
        if h0 % f or w0 % f:
            raise ConfigError(f"token grid {h0}x{w0} cannot be merged {self.num_stages - 1} times")
        if self.expand_stride[1:] != (mh, mw):
            raise ConfigError(f"expand_stride {self.expand_stride} must restore patch {self.patch_size}")
        if self.decoder_temporal_len < self.out_frames:
            raise ConfigError(
                f"decoder_temporal_len {self.decoder_temporal_len} < out_frames {self.out_frames}"
            )
        for i in range(self.num_stages):
            c = self.stage_dim(i)
            if c % self.num_heads[i]:
                raise ConfigError(f"stage {i}: {self.num_heads[i]} heads do not divide {c} channels")
            if i > 0 and c % 2:
                raise ConfigError(f"stage {i}: CDU needs an even channel count, got {c}")
            for where, ext in (("encoder", self.encoder_extent(i)), ("decoder", self.decoder_extent(i))):
                win, _ = self.stage_window(ext)
                if any(n % w for n, w in zip(ext, win)):
                    raise ConfigError(f"{where} stage {i}: extent {ext} not divisible by window {win}")

    def to_json(self):
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_json(cls, d):
        return cls(**d)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


def preset(name, **overrides):
    """Named configurations.

    ``kma-1h``/``kma-6h``/``sevir``/``meteonet`` follow the dataset horizons;
    embed_dim, heads and window are reconstruction defaults. ``toy`` is a
    16x16, 4-frame configuration small enough for quick checks.
    """
    base = {
        "kma-1h": dict(in_frames=7, out_frames=6, height=256, width=256),
        "kma-6h": dict(
            in_frames=7, out_frames=36, height=256, width=256, cdu_scale=(2, 2, 2),
            skip_mode="concat", expand_stride=(1, 4, 4), decoder_temporal_len=60,
        ),
        "sevir": dict(in_frames=13, out_frames=12, height=384, width=384, window_size=(7, 4, 4)),
        "meteonet": dict(in_frames=12, out_frames=12, height=416, width=416, window_size=(2, 2, 2)),
        "toy": dict(
            in_frames=4, out_frames=4, height=16, width=16, patch_size=(1, 2, 2), depths=(1, 1),
            embed_dim=8, num_heads=(1, 2), window_size=(1, 2, 2),
        ),
    }
    if name not in base:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(base)}")
    kw = dict(base[name], name=name)
    kw.update(overrides)
    return ModelConfig(**kw)


PRESETS = ("kma-1h", "kma-6h", "sevir", "meteonet", "toy")


# parameter layout ---------------------------------------------------------

def _rel_table_size(win):
    wt, wh, ww = win
    return (2 * wt - 1) * (2 * wh - 1) * (2 * ww - 1)


def _block_shapes(prefix, c, heads, win, mlp_ratio):
    hid = c * mlp_ratio
    return {
        f"{prefix}.norm1.weight": (c,),
        f"{prefix}.norm1.bias": (c,),
        f"{prefix}.qkv.weight": (c, 3 * c),
        f"{prefix}.qkv.bias": (3 * c,),
        f"{prefix}.rel_pos_bias": (_rel_table_size(win), heads),
        f"{prefix}.proj.weight": (c, c),
        f"{prefix}.proj.bias": (c,),
        f"{prefix}.norm2.weight": (c,),
        f"{prefix}.norm2.bias": (c,),
        f"{prefix}.fc1.weight": (c, hid),
        f"{prefix}.fc1.bias": (hid,),
        f"{prefix}.fc2.weight": (hid, c),
        f"{prefix}.fc2.bias": (c,),
    }


def param_shapes(cfg):
    """Every weight name required by ``cfg`` mapped to its shape."""
    shapes = {}
    mt, mh, mw = cfg.patch_size
    c0 = cfg.embed_dim
    shapes["patch_embed.proj.weight"] = (mt * mh * mw * cfg.in_chans, c0)
    shapes["patch_embed.proj.bias"] = (c0,)
    shapes["patch_embed.norm.weight"] = (c0,)
    shapes["patch_embed.norm.bias"] = (c0,)
    n = cfg.num_stages
    for i in range(n):
        c = cfg.stage_dim(i)
        win, _ = cfg.stage_window(cfg.encoder_extent(i))
        for j in range(cfg.depths[i]):
            shapes.update(_block_shapes(f"enc.{i}.blocks.{j}", c, cfg.num_heads[i], win, cfg.mlp_ratio))
        if i < n - 1:
            shapes[f"enc.{i}.merge.norm.weight"] = (4 * c,)
            shapes[f"enc.{i}.merge.norm.bias"] = (4 * c,)
            shapes[f"enc.{i}.merge.reduction.weight"] = (4 * c, 2 * c)
    c = cfg.stage_dim(n - 1)
    win, _ = cfg.stage_window(cfg.encoder_extent(n - 1))
    for j in range(cfg.bottleneck_depth):
        shapes.update(_block_shapes(f"bottleneck.blocks.{j}", c, cfg.num_heads[n - 1], win, cfg.mlp_ratio))
    for i in reversed(range(n)):
        c = cfg.stage_dim(i)
        if cfg.skip_mode == "concat":
            shapes[f"dec.{i}.skip_proj.weight"] = (2 * c, c)
            shapes[f"dec.{i}.skip_proj.bias"] = (c,)
        win, _ = cfg.stage_window(cfg.decoder_extent(i))
        for j in range(cfg.depths[i]):
            shapes.update(_block_shapes(f"dec.{i}.blocks.{j}", c, cfg.num_heads[i], win, cfg.mlp_ratio))
        if i > 0:
            for k, s in CduWeights.shapes(c, cfg.cdu_scale, cfg.cdu_kernel).items():
                shapes[f"cdu.{i}.{k.replace('_bias', '.bias')}"] = s
    shapes["patch_expand.weight"] = (c0, cfg.in_chans) + cfg.expand_stride
    shapes["patch_expand.bias"] = (cfg.in_chans,)
    kh, kw = cfg.te_kernel
    shapes["te.weight"] = (cfg.out_frames, cfg.decoder_temporal_len, kh, kw, 1)
    shapes["te.bias"] = (cfg.out_frames,)
    return shapes


def count_params(cfg):
    """Exact number of scalar weights required by ``cfg``."""
    return int(sum(math.prod(s) for s in param_shapes(cfg).values()))


# weight store -------------------------------------------------------------

@dataclass
class WeightStore:
    """Flat mapping of weight name to float32 array."""

    tensors: dict
    provenance: str = "unknown"
    config: dict = field(default=None, repr=False)

    def __getitem__(self, name):
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def checksum(self):
        h = hashlib.sha256()
        for name in sorted(self.tensors):
            arr = np.ascontiguousarray(self.tensors[name], dtype="<f4")
            h.update(name.encode())
            h.update(repr(arr.shape).encode())
            h.update(arr.tobytes())
        return h.hexdigest()

    def diff(self, cfg):
        """Return ``(missing, extra, mismatched)`` against ``cfg``."""
        want = param_shapes(cfg)
        have = {k: tuple(np.shape(v)) for k, v in self.tensors.items()}
        missing = sorted(set(want) - set(have))
        extra = sorted(set(have) - set(want))
        mismatched = sorted(
            f"{k}: expected {want[k]}, got {have[k]}" for k in set(want) & set(have) if want[k] != have[k]
        )
        return missing, extra, mismatched

    def validate(self, cfg):
        missing, extra, mismatched = self.diff(cfg)
        if missing or extra or mismatched:
            lines = [f"weights do not match config {cfg.name!r}:"]
            lines += [f"  missing {m}" for m in missing]
            lines += [f"  extra {e}" for e in extra]
            lines += [f"  shape {m}" for m in mismatched]
            raise ValidationError("\n".join(lines), missing, extra, mismatched)
        return self


def _init_value(name, shape, rng):
    leaf = name.rsplit(".", 1)[-1]
    if "prelu" in name:
        return np.full(shape, PRELU_INIT, DTYPE)
    if leaf == "bias":
        return np.zeros(shape, DTYPE)
    if ".norm" in name and leaf == "weight":
        return np.ones(shape, DTYPE)
    return trunc_normal(rng, shape, INIT_STD)


def init_weights(cfg, seed=0):
    """Deterministic initialization.

    Each tensor draws from its own generator seeded by ``(seed, crc32(name))``,
    so configs sharing a parameter name and shape share its initial value.
    """
    tensors = {}
    for name, shape in sorted(param_shapes(cfg).items()):
        rng = np.random.default_rng([int(seed), zlib.crc32(name.encode())])
        tensors[name] = _init_value(name, shape, rng)
    return WeightStore(tensors, provenance=f"random(seed={seed})", config=cfg.to_json())


def save_weights(store, path, cfg=None):
    meta = {"config": cfg.to_json() if cfg is not None else store.config}
    container.save(path, store.tensors, meta)


def load_weights(path, cfg=None):
    """Load a store; when ``cfg`` is given, check config compatibility and shapes."""
    tensors, meta = container.load(path)
    store = WeightStore(tensors, provenance=f"file({path})", config=(meta or {}).get("config"))
    if cfg is not None:
        saved = store.config
        if saved is not None:
            a = {k: v for k, v in saved.items() if k != "name"}
            b = {k: v for k, v in cfg.to_json().items() if k != "name"}
            if a != b:
                keys = sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
                raise ValidationError(f"weight file config differs from {cfg.name!r} in: {', '.join(keys)}",
                                      mismatched=keys)
        store.validate(cfg)
    return store


# building blocks ----------------------------------------------------------

def pad_time(x, mt):
    """Right-pad the time axis by repeating the last frame up to a multiple of ``mt``."""
    t = x.shape[1]
    extra = -(-t // mt) * mt - t
    if extra:
        x = np.concatenate([x, np.repeat(x[:, -1:], extra, axis=1)], axis=1)
    return x


def patch_embed(x, patch_size, proj_w, proj_b, norm_w, norm_b):
    """Split into non-overlapping 3-D patches, project, and layer-normalize."""
    x = as_tensor5(x)
    mt, mh, mw = patch_size
    b, _, h, w, c = x.shape
    if h % mh or w % mw:
        raise DimensionError(f"patch_embed: spatial extent {(h, w)} not divisible by patch {(mh, mw)}")
    x = pad_time(x, mt)
    t = x.shape[1]
    p = x.reshape(b, t // mt, mt, h // mh, mh, w // mw, mw, c).transpose(0, 1, 3, 5, 2, 4, 6, 7)
    p = p.reshape(b, t // mt, h // mh, w // mw, mt * mh * mw * c)
    return layer_norm(linear(p, proj_w, proj_b), norm_w, norm_b)


def patch_merge(x, norm_w, norm_b, reduction_w):
    """Concatenate 2x2 spatial neighbours (4C channels), normalize, project to 2C."""
    x = as_tensor5(x)
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise DimensionError(f"patch_merge: odd spatial extent in shape {x.shape}")
    cat = np.concatenate(
        [x[:, :, 0::2, 0::2], x[:, :, 1::2, 0::2], x[:, :, 0::2, 1::2], x[:, :, 1::2, 1::2]], axis=-1
    )
    return linear(layer_norm(cat, norm_w, norm_b), reduction_w)


def patch_expand(x, weight, bias):
    """Transposed convolution with kernel == stride back to pixel resolution."""
    x = as_tensor5(x)
    weight = np.asarray(weight)
    if weight.ndim != 5 or weight.shape[0] != x.shape[-1]:
        raise DimensionError(f"patch_expand: input shape {x.shape} vs weight shape {weight.shape}")
    return conv_transpose3d(x, weight, bias, stride=weight.shape[2:])


def window_partition(x, win):
    """Tile (b, t, h, w, c) into windows of shape ``win``.

    Returns an array (b * n_windows, wt * wh * ww, c), windows ordered by
    (b, t, h, w) block index.
    """
    b, t, h, w, c = x.shape
    wt, wh, ww = win
    if t % wt or h % wh or w % ww:
        raise ConfigError(f"extent {(t, h, w)} not divisible by window {tuple(win)}")
    y = x.reshape(b, t // wt, wt, h // wh, wh, w // ww, ww, c).transpose(0, 1, 3, 5, 2, 4, 6, 7)
    return y.reshape(-1, wt * wh * ww, c)


def window_reverse(windows, win, shape):
    """Inverse of :func:`window_partition` for a target ``shape`` (b, t, h, w, c)."""
    b, t, h, w, c = shape
    wt, wh, ww = win
    y = windows.reshape(b, t // wt, h // wh, w // ww, wt, wh, ww, c).transpose(0, 1, 4, 2, 5, 3, 6, 7)
    return y.reshape(shape)


def relative_position_index(win):
    """(N, N) index into the relative-position bias table for a window."""
    wt, wh, ww = win
    coords = np.stack(np.meshgrid(np.arange(wt), np.arange(wh), np.arange(ww), indexing="ij")).reshape(3, -1)
    rel = coords[:, :, None] - coords[:, None, :]
    rel[0] += wt - 1
    rel[1] += wh - 1
    rel[2] += ww - 1
    return (rel[0] * (2 * wh - 1) + rel[1]) * (2 * ww - 1) + rel[2]


def window_mask(extent, win, shift):
    """Additive attention mask (n_windows, N, N) for a cyclically shifted grid.

    Tokens that were not neighbours before the roll get ``-inf``. With zero
    shift every entry is 0.
    """
    n_win = math.prod(n // w for n, w in zip(extent, win))
    n_tok = math.prod(win)
    if not any(shift):
        return np.zeros((n_win, n_tok, n_tok))
    label = np.zeros(extent, dtype=np.int64)
    region = 0
    axes_slices = []
    for n, w, s in zip(extent, win, shift):
        if s:
            axes_slices.append((slice(0, n - w), slice(n - w, n - s), slice(n - s, n)))
        else:
            axes_slices.append((slice(0, n),))
    for st in axes_slices[0]:
        for sh in axes_slices[1]:
            for sw in axes_slices[2]:
                label[st, sh, sw] = region
                region += 1
    lw = window_partition(label[None, ..., None], win)[..., 0]
    same = lw[:, :, None] == lw[:, None, :]
    return np.where(same, 0.0, -np.inf)


def wmsa_forward(x, heads, qkv_w, qkv_b, proj_w, proj_b, rel_bias, win, shift=(0, 0, 0), return_attn=False):
    """Windowed multi-head self-attention with optional cyclic shift.

    ``x`` is already normalized. ``rel_bias`` is the (table, heads) bias
    table. Scores are ``q k^T / sqrt(d) + bias + mask``.
    """
    x = as_tensor5(x)
    b, t, h, w, c = x.shape
    if c % heads:
        raise ConfigError(f"{heads} heads do not divide {c} channels")
    win = tuple(win)
    shift = tuple(shift)
    if any(s >= n for s, n in zip(shift, win)):
        raise ConfigError(f"shift {shift} must be smaller than window {win}")
    d = c // heads
    if any(shift):
        x = np.roll(x, tuple(-s for s in shift), axis=(1, 2, 3))
    tokens = window_partition(x, win)
    nw, n, _ = tokens.shape
    qkv = linear(tokens, qkv_w, qkv_b).astype(ACC).reshape(nw, n, 3, heads, d).transpose(2, 0, 3, 1, 4)
    q, k, v = qkv[0], qkv[1], qkv[2]
    scores = q @ k.transpose(0, 1, 3, 2) / math.sqrt(d)
    idx = relative_position_index(win)
    scores = scores + np.asarray(rel_bias, ACC)[idx].transpose(2, 0, 1)[None]
    mask = window_mask((t, h, w), win, shift)
    scores = (scores.reshape(b, -1, heads, n, n) + mask[None, :, None]).reshape(nw, heads, n, n)
    attn = softmax(scores, axis=-1)
    out = (attn @ v).transpose(0, 2, 1, 3).reshape(nw, n, c)
    out = linear(out, proj_w, proj_b)
    out = window_reverse(out, win, (b, t, h, w, c))
    if any(shift):
        out = np.roll(out, shift, axis=(1, 2, 3))
    if return_attn:
        return out, attn
    return out


def swin_block(x, store, prefix, heads, win, shift):
    """Pre-norm block: ``x + WMSA(LN(x))`` followed by ``+ MLP(LN(.))``."""
    p = lambda k: store[f"{prefix}.{k}"]  # noqa: E731
    y = layer_norm(x, p("norm1.weight"), p("norm1.bias"))
    y = wmsa_forward(y, heads, p("qkv.weight"), p("qkv.bias"), p("proj.weight"), p("proj.bias"),
                     p("rel_pos_bias"), win, shift)
    x = (x.astype(ACC) + y).astype(DTYPE)
    y = layer_norm(x, p("norm2.weight"), p("norm2.bias"))
    y = linear(gelu(linear(y, p("fc1.weight"), p("fc1.bias"))), p("fc2.weight"), p("fc2.bias"))
    return (x.astype(ACC) + y).astype(DTYPE)


def te_forward(z, weight, bias=None):
    """Temporal extractor: treat time as channels and convolve over (H, W, C).

    ``z`` is (B, T_dec, H, W, C); ``weight`` is (T*, T_dec, kh, kw, kc) and is
    applied with stride 1 and same padding, yielding (B, T*, H, W, C).
    """
    z = as_tensor5(z, "z_dec")
    weight = np.asarray(weight)
    if weight.ndim != 5 or weight.shape[1] != z.shape[1]:
        raise DimensionError(f"te_forward: decoder frames {z.shape[1]} vs kernel shape {weight.shape}")
    pad = tuple(k // 2 for k in weight.shape[2:])
    y = conv3d(z.transpose(0, 2, 3, 4, 1), weight, bias, stride=1, padding=pad)
    return np.ascontiguousarray(y.transpose(0, 4, 1, 2, 3))


# assembly -----------------------------------------------------------------

def _run_stage(x, store, prefix, depth, heads, cfg):
    win, shift = cfg.stage_window(x.shape[1:4])
    for j in range(depth):
        x = swin_block(x, store, f"{prefix}.blocks.{j}", heads, win, shift if j % 2 else (0, 0, 0))
    return x


class _stage:
    """Re-raise shape errors with the name of the stage being executed."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, typ, exc, tb):
        if exc is not None and isinstance(exc, (DimensionError, ConfigError)) and not str(exc).startswith("["):
            raise type(exc)(f"[{self.name}] {exc}") from exc
        return False


def encode(x, cfg, store):
    """Run patch embedding and the encoder; return per-stage outputs (pre-merge)."""
    x = as_tensor5(x)
    if x.shape[1:] != (cfg.in_frames, cfg.height, cfg.width, cfg.in_chans):
        raise DimensionError(
            f"[input] expected (B, {cfg.in_frames}, {cfg.height}, {cfg.width}, {cfg.in_chans}), got {x.shape}"
        )
    with _stage("patch_embed"):
        x = patch_embed(x, cfg.patch_size, store["patch_embed.proj.weight"], store["patch_embed.proj.bias"],
                        store["patch_embed.norm.weight"], store["patch_embed.norm.bias"])
    skips = []
    for i in range(cfg.num_stages):
        with _stage(f"enc.{i}"):
            x = _run_stage(x, store, f"enc.{i}", cfg.depths[i], cfg.num_heads[i], cfg)
            skips.append(x)
            if i < cfg.num_stages - 1:
                x = patch_merge(x, store[f"enc.{i}.merge.norm.weight"], store[f"enc.{i}.merge.norm.bias"],
                                store[f"enc.{i}.merge.reduction.weight"])
    return skips


def _combine_skip(x, skip, cfg, store, i):
    if skip.shape[1] != x.shape[1]:
        factor, rem = divmod(x.shape[1], skip.shape[1])
        if rem:
            raise DimensionError(f"skip frames {skip.shape[1]} do not divide decoder frames {x.shape[1]}")
        skip = trilinear_upsample(skip, (factor, 1, 1))
    if skip.shape != x.shape:
        raise DimensionError(f"skip shape {skip.shape} vs decoder shape {x.shape}")
    if cfg.skip_mode == "add":
        return (x.astype(ACC) + skip).astype(DTYPE)
    cat = np.concatenate([x, skip], axis=-1)
    return linear(cat, store[f"dec.{i}.skip_proj.weight"], store[f"dec.{i}.skip_proj.bias"])


def decode(skips, cfg, store):
    """Bottleneck, decoder stages with CDU upsampling, patch expand and TE."""
    n = cfg.num_stages
    x = skips[-1]
    with _stage("bottleneck"):
        x = _run_stage(x, store, "bottleneck", cfg.bottleneck_depth, cfg.num_heads[-1], cfg)
    for i in reversed(range(n)):
        with _stage(f"dec.{i}"):
            x = _combine_skip(x, skips[i], cfg, store, i)
            x = _run_stage(x, store, f"dec.{i}", cfg.depths[i], cfg.num_heads[i], cfg)
        if i > 0:
            with _stage(f"cdu.{i}"):
                x = cdu_forward(x, CduWeights.from_dict(store.tensors, f"cdu.{i}"), cfg.cdu_scale)
    with _stage("patch_expand"):
        x = patch_expand(x, store["patch_expand.weight"], store["patch_expand.bias"])
    if x.shape[1] != cfg.decoder_temporal_len:
        x = resize(x, (cfg.decoder_temporal_len,) + x.shape[2:4], "linear")
    with _stage("te"):
        return te_forward(x, store["te.weight"], store["te.bias"])


def model_forward(x, cfg, store):
    """Full forecast: (B, T_in, H, W, 1) -> (B, T*, H, W, 1)."""
    return decode(encode(x, cfg, store), cfg, store)


# cost accounting ----------------------------------------------------------

def estimate_flops(cfg, batch=1):
    """2 x multiply-accumulate count of all convs, linears and attention matmuls."""
    macs = 0
    t, h, w = cfg.token_grid
    mt, mh, mw = cfg.patch_size
    macs += t * h * w * (mt * mh * mw * cfg.in_chans) * cfg.embed_dim

    def block_macs(ext, c):
        n_tok = math.prod(ext)
        win, _ = cfg.stage_window(ext)
        n = math.prod(win)
        hid = c * cfg.mlp_ratio
        return n_tok * (3 * c * c + c * c + 2 * c * hid) + n_tok * n * c * 2

    n_st = cfg.num_stages
    for i in range(n_st):
        ext, c = cfg.encoder_extent(i), cfg.stage_dim(i)
        macs += cfg.depths[i] * block_macs(ext, c)
        if i < n_st - 1:
            macs += math.prod(ext) // 4 * 4 * c * 2 * c
    ext = cfg.encoder_extent(n_st - 1)
    macs += cfg.bottleneck_depth * block_macs(ext, cfg.stage_dim(n_st - 1))
    k3 = math.prod(cfg.cdu_kernel)
    for i in reversed(range(n_st)):
        ext, c = cfg.decoder_extent(i), cfg.stage_dim(i)
        vox = math.prod(ext)
        if cfg.skip_mode == "concat":
            macs += vox * 2 * c * c
        macs += cfg.depths[i] * block_macs(ext, c)
        if i > 0:
            up = vox * math.prod(cfg.cdu_scale)
            half = c // 2
            ps_c = half * math.prod(cfg.cdu_scale)
            macs += vox * k3 * (c * c + c * ps_c)
            macs += up * k3 * (c * half + half * half + c * half)
    vox0 = math.prod(cfg.decoder_extent(0))
    macs += vox0 * cfg.embed_dim * cfg.in_chans * math.prod(cfg.expand_stride)
    kh, kw = cfg.te_kernel
    macs += cfg.height * cfg.width * cfg.in_chans * cfg.decoder_temporal_len * cfg.out_frames * kh * kw
    return int(2 * macs * batch)
