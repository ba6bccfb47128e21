"""Stagewise decoder over a hierarchical feature pyramid.

The pyramid lists backbone features coarsest first: F_0 is the deepest map
and F_{n-1} the shallowest (largest). With patch grid H x W (a quarter of
the image per axis) and base channels C, the geometric default gives F_i
spatial extent H/2^{n-1-i} and channels 2^{n-1-i} * C.

Each stage runs one windowed skip-attention block where the backbone
feature F_i supplies the queries and the previous stage output (F_0 itself
at stage 0) supplies keys and values:

    z1 = F_i + attn(LN(F_i), LN(M_prev))          plain windows
    z2 = z1  + MLP(LN(z1))
    z3 = z2  + attn(LN(z2), LN(M_prev))           shifted windows, masked
    Fh = z3  + MLP(LN(z3))

All but the last stage then fuse Fh with F_i and upsample 2x (the default
path concatenates them, mixes with a 1x1 conv, and pixel-shuffles); the
last stage fuses without upsampling. A 1x1 classifier plus two bilinear
doublings turn the final map into per-pixel class logits at image
resolution.

Parameters live in one flat dict name -> array so they can be enumerated,
serialized, and gradient-checked uniformly. The forward pass accepts plain
arrays or tape Vars (see autodiff) through the same code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import attention
from .autodiff import ops, value_of
from .errors import ConfigError, ShapeError
from .rng import Rng

VARIANTS = ("muster", "light")
UPSAMPLERS = ("fuse", "bilinear", "transconv", "selfconcat")


@dataclass(frozen=True)
class DecoderConfig:
    base_channels: int
    window: int = 12
    heads: tuple = (32, 16, 8, 4)
    variant: str = "muster"
    upsampler: str = "fuse"
    num_classes: int = 150
    seed: int = 0
    # backbone channels per stage, coarsest first; None = geometric series
    stage_channels: tuple = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "heads", tuple(int(h) for h in self.heads))
        if self.stage_channels is not None:
            object.__setattr__(
                self, "stage_channels", tuple(int(c) for c in self.stage_channels)
            )
        self.validate()

    @property
    def num_stages(self) -> int:
        return len(self.heads)

    @property
    def pyramid_channels(self) -> tuple:
        if self.stage_channels is not None:
            return self.stage_channels
        n = self.num_stages
        return tuple(2 ** (n - 1 - i) * self.base_channels for i in range(n))

    @property
    def output_channels(self) -> tuple:
        """Channels of each stage's fused output; the geometric default
        gives the [4C, 2C, C, 2C] series."""
        pyr = self.pyramid_channels
        outs = [pyr[i + 1] for i in range(self.num_stages - 1)]
        outs.append(2 * pyr[-1])
        return tuple(outs)

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.upsampler not in UPSAMPLERS:
            raise ConfigError(
                f"upsampler must be one of {UPSAMPLERS}, got {self.upsampler!r}"
            )
        if self.num_stages < 1:
            raise ConfigError("need at least one stage")
        if self.base_channels < 1:
            raise ConfigError(f"base_channels must be positive, got {self.base_channels}")
        if self.num_classes < 1:
            raise ConfigError(f"num_classes must be positive, got {self.num_classes}")
        m = self.window
        if m < 2 or m % 2 != 0:
            raise ConfigError(f"window size must be even and >= 2, got {m}")
        if self.variant == "light" and m % 4 != 0:
            raise ConfigError(f"light variant needs window divisible by 4, got {m}")
        if self.stage_channels is not None and len(self.stage_channels) != self.num_stages:
            raise ConfigError(
                f"stage_channels has {len(self.stage_channels)} entries for "
                f"{self.num_stages} stages"
            )
        for i, (c, h) in enumerate(zip(self.pyramid_channels, self.heads)):
            if c < 1 or h < 1:
                raise ConfigError(f"stage {i}: channels and heads must be positive")
            if c % h != 0:
                raise ConfigError(f"stage {i}: {h} heads do not divide {c} channels")
        for i in range(self.num_stages - 1):
            if self.pyramid_channels[i + 1] % 1 != 0:
                raise ConfigError("internal: non-integer channels")


# ---------------------------------------------------------------------------
# synthetic backbone


def synth_backbone(h_img: int, w_img: int, cfg: DecoderConfig, dtype=np.float32):
    """Seeded random feature pyramid standing in for a real encoder.

    Image extents must be divisible by 4 * 2^(stages-1) so every stage's
    map has integer extent (the patch grid is a quarter of the image).
    """
    n = cfg.num_stages
    need = 4 * 2 ** (n - 1)
    if h_img % need != 0 or w_img % need != 0:
        raise ConfigError(
            f"image extents ({h_img}, {w_img}) must be divisible by {need} "
            f"for {n} stages"
        )
    hp, wp = h_img // 4, w_img // 4
    rng = Rng(cfg.seed)
    feats = []
    for i, c in enumerate(cfg.pyramid_channels):
        scale = 2 ** (n - 1 - i)
        shape = (hp // scale, wp // scale, c)
        feats.append(rng.spawn(f"backbone.F{i}").normal(shape, std=1.0, dtype=dtype))
    return feats


def validate_pyramid(feats, cfg: DecoderConfig) -> None:
    """Check stage count, channel series, and spatial doubling before compute."""
    n = cfg.num_stages
    if len(feats) != n:
        raise ShapeError(f"pyramid has {len(feats)} maps, config expects {n}")
    pyr = cfg.pyramid_channels
    prev = None
    for i, f in enumerate(feats):
        v = value_of(f)
        if v.ndim != 3:
            raise ShapeError(f"pyramid map {i} must be rank 3, got rank {v.ndim}")
        h, w, c = v.shape
        if c != pyr[i]:
            raise ShapeError(f"pyramid map {i} has {c} channels, config expects {pyr[i]}")
        if prev is not None and (h != 2 * prev[0] or w != 2 * prev[1]):
            raise ShapeError(
                f"pyramid map {i} spatial {h}x{w} does not double map {i - 1}'s "
                f"{prev[0]}x{prev[1]}"
            )
        prev = (h, w)


# ---------------------------------------------------------------------------
# parameters


def scoped(params: dict, prefix: str) -> dict:
    """View of a flat param dict with one name level stripped."""
    pre = prefix + "."
    out = {k[len(pre):]: v for k, v in params.items() if k.startswith(pre)}
    if not out:
        raise ConfigError(f"no parameters under {prefix!r}")
    return out


def init_params(cfg: DecoderConfig, dtype=np.float32) -> dict:
    """Flat name -> array dict; weights seeded normal (sigma 0.02), vector
    biases zero, layer-norm scales one. Each array gets its own named
    stream, so values do not depend on construction order."""
    root = Rng(cfg.seed)
    pyr = cfg.pyramid_channels
    m = cfg.window
    n = cfg.num_stages
    p = {}

    def norm(name, shape):
        p[name] = root.spawn(name).normal(shape, std=0.02, dtype=dtype)

    for i in range(n):
        c = pyr[i]
        pre = f"stage{i}."
        for ln in ("ln1_q", "ln1_kv", "ln2", "ln3_q", "ln3_kv", "ln4"):
            p[pre + ln + ".gamma"] = np.ones(c, dtype=dtype)
            p[pre + ln + ".beta"] = np.zeros(c, dtype=dtype)
        for attn_name in ("attn_w", "attn_sw"):
            sub_rng = root.spawn(pre + attn_name)
            if cfg.variant == "muster":
                sub = attention.init_mska_params(sub_rng, c, m, cfg.heads[i], dtype=dtype)
            else:
                sub = attention.init_light_params(sub_rng, c, m, cfg.heads[i], dtype=dtype)
            for k, v in sub.items():
                p[pre + attn_name + "." + k] = v
        for mlp in ("mlp1", "mlp2"):
            norm(pre + mlp + ".w1", (c, 4 * c))
            p[pre + mlp + ".b1"] = np.zeros(4 * c, dtype=dtype)
            norm(pre + mlp + ".w2", (4 * c, c))
            p[pre + mlp + ".b2"] = np.zeros(c, dtype=dtype)
        if i < n - 1:
            c_next = pyr[i + 1]
            if cfg.upsampler in ("fuse", "selfconcat"):
                norm(pre + "up.w", (2 * c, 4 * c_next))
                p[pre + "up.b"] = np.zeros(4 * c_next, dtype=dtype)
            elif cfg.upsampler == "bilinear":
                norm(pre + "up.w", (c, c_next))
                p[pre + "up.b"] = np.zeros(c_next, dtype=dtype)
            else:  # transconv
                norm(pre + "up.w", (2, 2, c, c_next))
                p[pre + "up.b"] = np.zeros(c_next, dtype=dtype)
        else:
            norm(pre + "fuse.w", (2 * c, 2 * c))
            p[pre + "fuse.b"] = np.zeros(2 * c, dtype=dtype)
    norm("head.w", (2 * pyr[-1], cfg.num_classes))
    p["head.b"] = np.zeros(cfg.num_classes, dtype=dtype)
    return p


# ---------------------------------------------------------------------------
# forward pass


def _ln(x, params, prefix):
    return ops.layer_norm(x, params[prefix + ".gamma"], params[prefix + ".beta"])


def _mlp(x, params, prefix):
    h = ops.add(ops.matmul(x, params[prefix + ".w1"]), params[prefix + ".b1"])
    h = ops.gelu(h)
    return ops.add(ops.matmul(h, params[prefix + ".w2"]), params[prefix + ".b2"])


def skip_swin_block(f, m_prev, params, cfg: DecoderConfig, stage: int):
    """One attention block: plain-window pass, MLP, shifted pass, MLP, all
    residual on the query path. Keys/values come from m_prev throughout."""
    if value_of(f).shape != value_of(m_prev).shape:
        raise ShapeError(
            f"stage {stage}: operand shapes differ: "
            f"{value_of(f).shape} vs {value_of(m_prev).shape}"
        )
    m, heads = cfg.window, cfg.heads[stage]
    pre = f"stage{stage}."

    if cfg.variant == "muster":
        def attn(q_map, kv_map, sub, shifted):
            return attention.w_mska_map(q_map, kv_map, sub, m, heads, shifted)
    else:
        def attn(q_map, kv_map, sub, shifted):
            return attention.light_attention_map(q_map, kv_map, sub, m, heads, shifted)

    a1 = attn(
        _ln(f, params, pre + "ln1_q"),
        _ln(m_prev, params, pre + "ln1_kv"),
        scoped(params, pre + "attn_w"),
        False,
    )
    z1 = ops.add(f, a1)
    z2 = ops.add(z1, _mlp(_ln(z1, params, pre + "ln2"), params, pre + "mlp1"))
    a2 = attn(
        _ln(z2, params, pre + "ln3_q"),
        _ln(m_prev, params, pre + "ln3_kv"),
        scoped(params, pre + "attn_sw"),
        True,
    )
    z3 = ops.add(z2, a2)
    return ops.add(z3, _mlp(_ln(z3, params, pre + "ln4"), params, pre + "mlp2"))


def fuse_upsample(fhat, f, params, cfg: DecoderConfig, stage: int):
    """Stage output at doubled resolution; path depends on cfg.upsampler."""
    pre = f"stage{stage}.up"
    w, b = params[pre + ".w"], params[pre + ".b"]
    if cfg.upsampler in ("fuse", "selfconcat"):
        other = f if cfg.upsampler == "fuse" else fhat
        x = ops.concat_channels(fhat, other)
        x = ops.conv1x1(x, w, b)
        return ops.pixel_shuffle(x, 2)
    if cfg.upsampler == "bilinear":
        return ops.conv1x1(ops.upsample_bilinear2x(fhat), w, b)
    return ops.transposed_conv2x2(fhat, w, b)


def fuse_block(fhat, f, params, cfg: DecoderConfig, stage: int):
    """Last-stage fusion: concat and mix, resolution unchanged."""
    pre = f"stage{stage}.fuse"
    x = ops.concat_channels(fhat, f)
    return ops.conv1x1(x, params[pre + ".w"], params[pre + ".b"])


def decoder_forward(feats, cfg: DecoderConfig, params, collect_stages: bool = False):
    """Full decoder: per-pixel class logits at 4x the patch grid (image
    resolution). With collect_stages, also returns {name: stage output}."""
    validate_pyramid(feats, cfg)
    n = cfg.num_stages
    stages = {}
    m_prev = None
    fused = None
    for i in range(n):
        f = feats[i]
        kv = f if i == 0 else m_prev
        fhat = skip_swin_block(f, kv, params, cfg, i)
        if i < n - 1:
            m_prev = fuse_upsample(fhat, f, params, cfg, i)
            out_i = m_prev
        else:
            fused = fuse_block(fhat, f, params, cfg, i)
            out_i = fused
        if collect_stages:
            stages[f"stage{i}"] = out_i
    logits = ops.conv1x1(fused, params["head.w"], params["head.b"])
    logits = ops.upsample_bilinear2x(ops.upsample_bilinear2x(logits))
    if collect_stages:
        return logits, stages
    return logits


def forward_loss(feats, cfg: DecoderConfig, params):
    """Scalar mean of squared logits; used by gradient verification."""
    logits = decoder_forward(feats, cfg, params)
    return ops.mean_all(ops.mul(logits, logits))
