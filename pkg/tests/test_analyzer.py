import numpy as np
import pytest

from muster import analyzer, decoder
from muster.analyzer import (
    compare_variants,
    count_model,
    score_macs_per_window,
    verify_complexity_law,
)
from muster.decoder import DecoderConfig, decoder_forward, init_params, synth_backbone
from muster.errors import ConfigError
from muster.kernels import count_macs


def toy_cfg(**kw):
    base = dict(base_channels=16, window=4, heads=(4, 4, 4, 4), num_classes=3, seed=9)
    base.update(kw)
    return DecoderConfig(**base)


# ---------------------------------------------------------------------------
# instrumentation equality


@pytest.mark.parametrize("variant", decoder.VARIANTS)
def test_counts_match_instrumented_forward(variant):
    """On window-divisible stage maps (padding is a no-op) the analytic MAC
    total equals the kernels' instrumented counter exactly."""
    cfg = toy_cfg(variant=variant)
    feats = synth_backbone(128, 128, cfg)  # patch grid 32x32, coarsest map 4x4
    params = init_params(cfg)
    with count_macs() as counter:
        decoder_forward(feats, cfg, params)
    assert counter.total == count_model(cfg, 32, 32).total_macs


@pytest.mark.parametrize("upsampler", decoder.UPSAMPLERS)
def test_counts_match_instrumented_forward_per_upsampler(upsampler):
    # all stage maps divisible by the window so no padding enters the count
    cfg = toy_cfg(upsampler=upsampler)
    feats = synth_backbone(128, 128, cfg)
    with count_macs() as counter:
        decoder_forward(feats, cfg, init_params(cfg))
    assert counter.total == count_model(cfg, 32, 32).total_macs


@pytest.mark.parametrize("variant", decoder.VARIANTS)
@pytest.mark.parametrize("upsampler", decoder.UPSAMPLERS)
def test_param_counts_match_init_exactly(variant, upsampler):
    cfg = toy_cfg(variant=variant, upsampler=upsampler)
    total = sum(v.size for v in init_params(cfg).values())
    assert count_model(cfg, 16, 16).total_params == total


# ---------------------------------------------------------------------------
# affinity in token area


def test_total_flops_affine_in_area():
    cfg = toy_cfg()
    fit = verify_complexity_law(cfg, [(24, 24), (48, 24), (48, 48)])
    assert fit.rel_residual < 1e-9
    assert fit.slope > 0


def test_flops_scale_exactly_with_area():
    cfg = toy_cfg(variant="light")
    base = count_model(cfg, 16, 16)
    double = count_model(cfg, 32, 16)
    quad = count_model(cfg, 32, 32)
    # doubling the area doubles area-proportional terms; every term here is
    # area-proportional, so totals double exactly
    assert double.total_macs == 2 * base.total_macs
    assert quad.total_flops == 4 * base.total_flops
    assert double.elementwise_flops == 2 * base.elementwise_flops


def test_per_stage_attention_terms_scale():
    cfg = toy_cfg()
    a = {e.op: e.macs for e in count_model(cfg, 16, 16).entries}
    b = {e.op: e.macs for e in count_model(cfg, 32, 16).entries}
    for op, macs in a.items():
        assert b[op] == 2 * macs, op


def test_fit_rejects_bad_size_lists():
    cfg = toy_cfg()
    with pytest.raises(ConfigError):
        verify_complexity_law(cfg, [(16, 16), (32, 32)])
    with pytest.raises(ConfigError):
        verify_complexity_law(cfg, [(16, 16), (8, 32), (16, 16)])


def test_count_model_rejects_indivisible_grid():
    with pytest.raises(ConfigError):
        count_model(toy_cfg(), 20, 16)  # 20 % 8 != 0


# ---------------------------------------------------------------------------
# variant comparison


def test_score_macs_per_window_ratio_exactly_four():
    for c in (16, 64, 128):
        for m in (4, 8, 12):
            full = score_macs_per_window(c, m, "muster")
            light = score_macs_per_window(c, m, "light")
            assert full == m**4 * c
            assert full == 4 * light


def test_score_macs_identity_against_stage_totals():
    # per-window scores times window count equals the stage score entry
    cfg = toy_cfg()
    h = w = 16
    rep = count_model(cfg, h, w)
    n = cfg.num_stages
    m = cfg.window
    for e in rep.entries:
        if e.op.endswith(".scores"):
            i = e.stage
            hi = h // 2 ** (n - 1 - i)
            wi = w // 2 ** (n - 1 - i)
            windows = (hi * wi) / (m * m)
            per_win = score_macs_per_window(cfg.pyramid_channels[i], m, cfg.variant)
            assert e.macs == per_win * windows


def test_light_variant_cheaper_at_reference_scale():
    cfg = DecoderConfig(base_channels=128)  # window 12, heads (32,16,8,4)
    full, light, reduction = compare_variants(cfg, 128, 128)
    assert light.total_flops < full.total_flops
    assert 0.0 < reduction < 1.0
    # projection count drops 4x and score work 4x; the bias tables add
    # parameters but no MACs, so the MAC total must drop too
    assert light.total_macs < full.total_macs


def test_compare_variants_preserves_other_settings():
    cfg = toy_cfg(upsampler="bilinear", num_classes=7)
    full, light, _ = compare_variants(cfg, 16, 16)
    assert full.variant == "muster" and light.variant == "light"
    full_ops = {e.op for e in full.entries}
    assert any(".up" in op for op in full_ops)
    head_full = [e for e in full.entries if e.op == "head"][0]
    head_light = [e for e in light.entries if e.op == "head"][0]
    assert head_full.macs == head_light.macs  # head unaffected by variant


# ---------------------------------------------------------------------------
# report plumbing


def test_report_to_dict_totals_consistent():
    rep = count_model(toy_cfg(), 16, 16)
    d = rep.to_dict()
    assert d["totals"]["macs"] == sum(e["macs"] for e in d["entries"])
    assert d["totals"]["params"] == sum(e["params"] for e in d["entries"])
    assert d["totals"]["flops"] == 2 * d["totals"]["macs"] + d["totals"]["elementwise_flops"]
    assert d["totals"]["elementwise_flops"] == sum(d["elementwise_flops"].values())
    assert d["patch_grid"] == [16, 16]


def test_report_render_mentions_totals():
    rep = count_model(toy_cfg(variant="light"), 16, 16)
    text = rep.render()
    assert "light decoder" in text
    assert f"{rep.total_macs:,d}" in text
    assert "total flops" in text


def test_fit_report_str():
    fit = verify_complexity_law(toy_cfg(), [(16, 16), (32, 16), (32, 32)])
    s = str(fit)
    assert "relative residual" in s and "3 sizes" in s


def test_elementwise_constants_are_documented_values():
    assert analyzer.SOFTMAX_FLOPS_PER_LOGIT == 4
    assert analyzer.LN_FLOPS_PER_ELEM == 8
    assert analyzer.GELU_FLOPS_PER_ELEM == 10
    assert analyzer.BILINEAR_FLOPS_PER_OUT == 8
    assert analyzer.ADD_FLOPS_PER_ELEM == 1
