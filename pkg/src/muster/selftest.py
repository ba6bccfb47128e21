"""Built-in oracle suites, runnable without pytest via the CLI.

Each suite rebuilds a claim from first principles (brute-force loops,
independent constructions) and checks the fast implementation against it:
mask families, pixel-shuffle bijection, degeneration of skip attention to
plain self-attention, and the analytic MAC model against the instrumented
kernels during a real forward pass.
"""

from __future__ import annotations

import numpy as np

from . import analyzer, attention, kernels, reference, windowing
from .decoder import DecoderConfig, decoder_forward, init_params, synth_backbone
from .rng import Rng


def _check_masks() -> str:
    for m in (4, 8):
        for nh, nw in ((1, 1), (2, 2), (2, 3)):
            h, w = nh * m, nw * m
            got = windowing.build_sw_mask(h, w, m)
            want = reference.sw_mask_oracle(h, w, m)
            if not np.array_equal(got, want):
                raise AssertionError(f"standard mask mismatch at m={m}, grid {nh}x{nw}")
            slices = reference.sw_mask_swin_slices(h, w, m)
            if not np.array_equal(got, slices.astype(got.dtype)):
                raise AssertionError(f"slice-construction mismatch at m={m}, grid {nh}x{nw}")
            got_l = windowing.build_light_sw_mask(h, w, m)
            want_l = reference.light_sw_mask_oracle(h, w, m)
            if not np.array_equal(got_l, want_l):
                raise AssertionError(f"light mask mismatch at m={m}, grid {nh}x{nw}")
    return "standard and light masks equal brute-force oracles (m in {4,8})"


def _check_pixel_shuffle() -> str:
    rng = Rng(11)
    x = rng.normal((6, 6, 8), std=1.0, dtype=np.float32)
    y = kernels.pixel_shuffle(x, 2)
    if y.shape != (12, 12, 2):
        raise AssertionError(f"shuffle shape {y.shape}")
    if not np.array_equal(kernels.pixel_unshuffle(y, 2), x):
        raise AssertionError("round trip not bit-exact")
    if not np.array_equal(y.astype(np.float64), reference.pixel_shuffle_ref(x, 2)):
        raise AssertionError("index map differs from direct formula")
    return "shuffle/unshuffle round trip bit-exact, index map verified"


def _check_mska_degenerates_to_msa() -> str:
    m, c, heads = 4, 8, 2
    rng = Rng(5)
    p = attention.init_mska_params(rng, c, m, heads, dtype=np.float64)
    p["bias_table"] = np.zeros_like(p["bias_table"])
    x = rng.spawn("tokens").normal((m * m, c), std=1.0, dtype=np.float64)
    ours = attention.w_mska(x, x, p, m, heads)
    ref = reference.msa_ref(x, p["w_q"], p["w_k"], p["w_v"], p["w_o"], heads)
    worst = float(np.max(np.abs(ours - ref)))
    if worst >= 1e-6:
        raise AssertionError(f"max |w_mska - msa| = {worst:.3e}")
    return f"skip attention on (x, x) equals plain MSA, max diff {worst:.2e}"


def _check_flop_instrumentation() -> str:
    results = []
    for variant in ("muster", "light"):
        cfg = DecoderConfig(
            base_channels=16,
            window=4,
            heads=(4, 4, 4, 4),
            variant=variant,
            num_classes=3,
            seed=9,
        )
        feats = synth_backbone(128, 128, cfg)  # patch grid 32x32, all stages divisible
        params = init_params(cfg)
        with kernels.count_macs() as counter:
            decoder_forward(feats, cfg, params)
        want = analyzer.count_model(cfg, 32, 32).total_macs
        if counter.total != want:
            raise AssertionError(
                f"{variant}: instrumented {counter.total} != analytic {want}"
            )
        results.append(f"{variant}={counter.total:,d}")
    return "analytic MACs equal instrumented kernel counts (" + ", ".join(results) + ")"


SUITES = (
    ("masks", _check_masks),
    ("pixel-shuffle", _check_pixel_shuffle),
    ("mska-vs-msa", _check_mska_degenerates_to_msa),
    ("flop-instrumentation", _check_flop_instrumentation),
)


def run_selftest():
    """Run every suite; returns a list of (name, passed, detail)."""
    out = []
    for name, fn in SUITES:
        try:
            out.append((name, True, fn()))
        except AssertionError as e:
            out.append((name, False, str(e)))
    return out
