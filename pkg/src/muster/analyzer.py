"""Analytic cost model: exact MAC and parameter counts per operation.

Counting convention:

* 1 MAC = 2 FLOPs. Only matmul/convolution work is counted in MACs; the
  numbers mirror the instrumented kernel counter exactly (asserted in
  tests on shapes where padding is a no-op).
* Elementwise work (softmax, layer norm, GELU, bilinear resampling,
  residual adds, attention bias adds) is tallied separately with the
  documented per-element constants below; the attention-logit constant
  folds in the scale/mask adds.
* Counts are idealized to padding-free geometry: a stage map of h_i x w_i
  tokens contributes h_i * w_i * M^2 * c score MACs regardless of whether
  h_i is divisible by the window (real runs pad up; the ideal is what the
  linear-in-area law is about). Every term is proportional to the token
  count, so totals are exactly affine in h * w.

Patch-grid convention: ``h`` and ``w`` are the finest stage's extents
(a quarter of the image per axis), and stage i runs at h / 2^(n-1-i).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decoder import DecoderConfig
from .errors import ConfigError

SOFTMAX_FLOPS_PER_LOGIT = 4  # scale/mask/exp plus amortized row normalize
LN_FLOPS_PER_ELEM = 8
GELU_FLOPS_PER_ELEM = 10
BILINEAR_FLOPS_PER_OUT = 8
ADD_FLOPS_PER_ELEM = 1


@dataclass(frozen=True)
class FlopEntry:
    op: str
    stage: int  # -1 for model-level ops
    macs: int
    params: int


@dataclass
class FlopReport:
    entries: list
    elementwise: dict  # op name -> flop count
    h: int
    w: int
    variant: str

    @property
    def total_macs(self) -> int:
        return sum(e.macs for e in self.entries)

    @property
    def total_params(self) -> int:
        return sum(e.params for e in self.entries)

    @property
    def elementwise_flops(self) -> int:
        return sum(self.elementwise.values())

    @property
    def total_flops(self) -> int:
        return 2 * self.total_macs + self.elementwise_flops

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "patch_grid": [self.h, self.w],
            "entries": [
                {"op": e.op, "stage": e.stage, "macs": e.macs, "params": e.params}
                for e in self.entries
            ],
            "elementwise_flops": dict(self.elementwise),
            "totals": {
                "macs": self.total_macs,
                "params": self.total_params,
                "elementwise_flops": self.elementwise_flops,
                "flops": self.total_flops,
            },
        }

    def render(self) -> str:
        lines = [
            f"{self.variant} decoder, patch grid {self.h}x{self.w}",
            f"{'op':<28s} {'stage':>5s} {'MACs':>16s} {'params':>12s}",
        ]
        for e in self.entries:
            stage = str(e.stage) if e.stage >= 0 else "-"
            lines.append(f"{e.op:<28s} {stage:>5s} {e.macs:>16,d} {e.params:>12,d}")
        lines.append(
            f"{'totals':<28s} {'':>5s} {self.total_macs:>16,d} {self.total_params:>12,d}"
        )
        lines.append(
            f"elementwise flops: {self.elementwise_flops:,d}   "
            f"total flops (2*MAC + elementwise): {self.total_flops:,d}"
        )
        return "\n".join(lines)


def score_macs_per_window(c: int, m: int, variant: str) -> int:
    """Attention-score MACs for one window: queries x keys x head dim,
    summed over heads. Keys number M^2 normally and (M/2)^2 in the light
    variant, a factor of exactly 4."""
    tq = m * m
    tk = tq if variant == "muster" else (m // 2) ** 2
    return tq * tk * c


def count_model(cfg: DecoderConfig, h: int, w: int) -> FlopReport:
    """Exact idealized counts for one decoder forward at patch grid h x w."""
    n = cfg.num_stages
    need = 2 ** (n - 1)
    if h % need != 0 or w % need != 0:
        raise ConfigError(
            f"patch grid ({h}, {w}) must be divisible by {need} for {n} stages"
        )
    m = cfg.window
    t_attn = m * m
    t_kv = t_attn if cfg.variant == "muster" else (m // 2) ** 2
    pyr = cfg.pyramid_channels
    entries = []
    elwise = {
        "softmax": 0,
        "layer_norm": 0,
        "gelu": 0,
        "bilinear": 0,
        "residual_add": 0,
        "attn_bias_add": 0,
    }

    for i in range(n):
        c = pyr[i]
        hi, wi = h // 2 ** (n - 1 - i), w // 2 ** (n - 1 - i)
        t = hi * wi
        bias_rows = (2 * m - 1) ** 2
        for name in ("attn_w", "attn_sw"):
            tag = f"stage{i}.{name}"
            if cfg.variant == "muster":
                entries.append(FlopEntry(tag + ".proj", i, 4 * t * c * c, 4 * c * c))
                entries.append(
                    FlopEntry(tag + ".bias_table", i, 0, bias_rows * cfg.heads[i])
                )
            else:
                entries.append(FlopEntry(tag + ".proj", i, t * c * c, c * c))
                entries.append(FlopEntry(tag + ".depthwise", i, t * c, 4 * c + c))
                entries.append(
                    FlopEntry(
                        tag + ".biases", i, 0, 2 * cfg.heads[i] * t_attn * t_kv
                    )
                )
                elwise["attn_bias_add"] += 2 * t * t_kv * ADD_FLOPS_PER_ELEM
            entries.append(FlopEntry(tag + ".scores", i, t * t_kv * c, 0))
            entries.append(FlopEntry(tag + ".attn_v", i, t * t_kv * c, 0))
            elwise["softmax"] += t * t_kv * SOFTMAX_FLOPS_PER_LOGIT
        for name in ("mlp1", "mlp2"):
            entries.append(
                FlopEntry(
                    f"stage{i}.{name}", i, 8 * t * c * c, 8 * c * c + 4 * c + c
                )
            )
            elwise["gelu"] += t * 4 * c * GELU_FLOPS_PER_ELEM
        entries.append(FlopEntry(f"stage{i}.layer_norms", i, 0, 12 * c))
        elwise["layer_norm"] += 6 * t * c * LN_FLOPS_PER_ELEM
        elwise["residual_add"] += 4 * t * c * ADD_FLOPS_PER_ELEM

        if i < n - 1:
            c_next = pyr[i + 1]
            if cfg.upsampler in ("fuse", "selfconcat"):
                macs = t * 2 * c * 4 * c_next
                params = 2 * c * 4 * c_next + 4 * c_next
            elif cfg.upsampler == "bilinear":
                macs = 4 * t * c * c_next
                params = c * c_next + c_next
                elwise["bilinear"] += 4 * t * c * BILINEAR_FLOPS_PER_OUT
            else:  # transconv
                macs = 4 * t * c * c_next
                params = 4 * c * c_next + c_next
            entries.append(FlopEntry(f"stage{i}.up", i, macs, params))
        else:
            macs = t * 2 * c * 2 * c
            entries.append(FlopEntry(f"stage{i}.fuse", i, macs, 4 * c * c + 2 * c))

    c_last = pyr[-1]
    t_last = h * w
    entries.append(
        FlopEntry(
            "head",
            -1,
            t_last * 2 * c_last * cfg.num_classes,
            2 * c_last * cfg.num_classes + cfg.num_classes,
        )
    )
    elwise["bilinear"] += (
        (4 * t_last + 16 * t_last) * cfg.num_classes * BILINEAR_FLOPS_PER_OUT
    )
    return FlopReport(entries=entries, elementwise=elwise, h=h, w=w, variant=cfg.variant)


@dataclass
class FitReport:
    slope: float
    intercept: float
    rel_residual: float
    points: list  # (h, w, flops)

    def __str__(self):
        return (
            f"flops ~= {self.slope:.6g} * (h*w) + {self.intercept:.6g}, "
            f"max relative residual {self.rel_residual:.3e} over {len(self.points)} sizes"
        )


def verify_complexity_law(cfg: DecoderConfig, sizes) -> FitReport:
    """Least-squares fit of total FLOPs to a*(h*w) + c over >= 3 grid sizes.

    The counts are exactly affine in the token area, so the residual is
    limited only by float64 rounding.
    """
    sizes = list(sizes)
    if len(sizes) < 3:
        raise ConfigError(f"need at least 3 sizes to fit, got {len(sizes)}")
    areas = np.array([float(h * w) for h, w in sizes])
    if np.unique(areas).size < 2:
        raise ConfigError("degenerate size list: all areas equal")
    flops = np.array([float(count_model(cfg, h, w).total_flops) for h, w in sizes])
    design = np.stack([areas, np.ones_like(areas)], axis=1)
    coef, *_ = np.linalg.lstsq(design, flops, rcond=None)
    pred = design @ coef
    rel = float(np.max(np.abs(pred - flops)) / np.max(np.abs(flops)))
    points = [(h, w, int(f)) for (h, w), f in zip(sizes, flops)]
    return FitReport(slope=float(coef[0]), intercept=float(coef[1]), rel_residual=rel, points=points)


def compare_variants(cfg: DecoderConfig, h: int, w: int):
    """Reports for the standard and light decoders at the same config, plus
    the light variant's fractional FLOP reduction."""
    base = {
        "base_channels": cfg.base_channels,
        "window": cfg.window,
        "heads": cfg.heads,
        "upsampler": cfg.upsampler,
        "num_classes": cfg.num_classes,
        "seed": cfg.seed,
        "stage_channels": cfg.stage_channels,
    }
    full = count_model(DecoderConfig(variant="muster", **base), h, w)
    light = count_model(DecoderConfig(variant="light", **base), h, w)
    reduction = 1.0 - light.total_flops / full.total_flops
    return full, light, reduction
