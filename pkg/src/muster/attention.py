"""Windowed skip attention, in two flavors.

Both take queries from a backbone (skip) feature and keys/values from the
running decoder state, window by window:

* ``w_mska``: per head, softmax(Q K^T / sqrt(d) + B + mask) V with a learned
  relative-position bias table, heads concatenated through an output
  projection. ``B[h] = table[rel_index]`` exactly as in shifted-window
  self-attention.
* ``light_attention``: queries get the only projection; the key/value
  tensor is shared and comes in at quarter token count (2x2 depthwise
  downsampling at the map level). Per head, A = softmax(Q K^T + B_i + mask)
  and the output is (A + B_o) V. No logit scaling, no K/V/output
  projections; the inner and outer biases are full learnable matrices over
  (query token, key token) pairs.

Map-level wrappers handle padding, the cyclic shift, mask selection, and
window partition/reverse around the per-window cores. All entry points
accept plain arrays or tape Vars.
"""

from __future__ import annotations

import math

import numpy as np

from . import windowing
from .autodiff import Var, ops, value_of
from .errors import ConfigError, ShapeError
from .rng import Rng

MASK_FILL = -1e9


def rel_position_index(m: int) -> np.ndarray:
    """[M^2, M^2] map from (query, key) token pair to bias-table row.

    Row = (dr + M - 1) * (2M - 1) + (dc + M - 1) with (dr, dc) the query
    minus key in-window coordinates.
    """
    coords = np.stack(np.meshgrid(np.arange(m), np.arange(m), indexing="ij"), axis=0)
    flat = coords.reshape(2, -1)
    rel = flat[:, :, None] - flat[:, None, :]
    return ((rel[0] + m - 1) * (2 * m - 1) + (rel[1] + m - 1)).astype(np.int64)


def _any_var(*xs) -> bool:
    return any(isinstance(x, Var) for x in xs)


def _as_windows(x):
    """Normalize [T, C] to [1, T, C]; report whether a dim was added."""
    if value_of(x).ndim == 2:
        t, c = value_of(x).shape
        return ops.reshape(x, (1, t, c)), True
    return x, False


def _split_heads(x, heads: int):
    """[nW, T, C] -> [nW, heads, T, C/heads]."""
    nw, t, c = value_of(x).shape
    x = ops.reshape(x, (nw, t, heads, c // heads))
    return ops.transpose(x, (0, 2, 1, 3))


def _merge_heads(x):
    """[nW, heads, T, d] -> [nW, T, heads*d]."""
    nw, heads, t, d = value_of(x).shape
    x = ops.transpose(x, (0, 2, 1, 3))
    return ops.reshape(x, (nw, t, heads * d))


def _prep_mask(mask, nw: int, tq: int, tk: int, differentiable: bool) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim == 2:
        mask = mask[None]
    if mask.shape != (nw, tq, tk) and mask.shape != (1, tq, tk):
        raise ShapeError(
            f"attention mask shape {mask.shape} does not cover {nw} windows of ({tq}, {tk})"
        )
    if differentiable:
        mask = windowing.finite_mask(mask)
    return mask[:, None, :, :]  # broadcast over heads


def w_mska(f_win, m_win, p, m: int, heads: int, mask=None):
    """Windowed multi-head skip attention on [nW, M^2, C] (or single-window
    [M^2, C]) operands; queries from f_win, keys/values from m_win."""
    fv, mv = value_of(f_win), value_of(m_win)
    if fv.shape != mv.shape:
        raise ShapeError(f"skip/state window shapes differ: {fv.shape} vs {mv.shape}")
    c = fv.shape[-1]
    if c % heads != 0:
        raise ConfigError(f"channels {c} not divisible by {heads} heads")
    t = fv.shape[-2]
    if t != m * m:
        raise ShapeError(f"token count {t} != M^2 = {m * m}")

    f3, squeeze = _as_windows(f_win)
    m3, _ = _as_windows(m_win)
    nw = value_of(f3).shape[0]
    d = c // heads

    q = _split_heads(ops.matmul(f3, p["w_q"]), heads)
    k = _split_heads(ops.matmul(m3, p["w_k"]), heads)
    v = _split_heads(ops.matmul(m3, p["w_v"]), heads)

    scores = ops.scale(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(d))
    bias = ops.gather_rows(p["bias_table"], rel_position_index(m))  # [T, T, heads]
    scores = ops.add(scores, ops.transpose(bias, (2, 0, 1)))
    if mask is not None:
        diff = _any_var(f_win, m_win, *p.values())
        scores = ops.add(scores, _prep_mask(mask, nw, t, t, diff))

    out = ops.matmul(ops.softmax_rows(scores), v)
    out = ops.matmul(_merge_heads(out), p["w_o"])
    if squeeze:
        out = ops.reshape(out, (t, c))
    return out


def light_attention(x_skip_win, kv_win, p, heads: int, mask=None):
    """Dual-resolution attention: [nW, Tq, C] queries vs [nW, Tk, C] shared
    key/value windows, Tk = Tq/4 after downsampling."""
    xv, kv = value_of(x_skip_win), value_of(kv_win)
    c = xv.shape[-1]
    if kv.shape[-1] != c:
        raise ShapeError(f"query/key channels differ: {c} vs {kv.shape[-1]}")
    if c % heads != 0:
        raise ConfigError(f"channels {c} not divisible by {heads} heads")
    tq, tk = xv.shape[-2], kv.shape[-2]
    b_i, b_o = value_of(p["bias_in"]), value_of(p["bias_out"])
    if b_i.shape != (heads, tq, tk) or b_o.shape != (heads, tq, tk):
        raise ShapeError(
            f"bias shapes {b_i.shape}/{b_o.shape} do not match "
            f"(heads, Tq, Tk) = ({heads}, {tq}, {tk})"
        )

    x3, squeeze = _as_windows(x_skip_win)
    kv3, _ = _as_windows(kv_win)
    nw = value_of(x3).shape[0]

    q = _split_heads(ops.matmul(x3, p["w_q"]), heads)
    kvh = _split_heads(kv3, heads)

    scores = ops.matmul(q, ops.transpose(kvh, (0, 1, 3, 2)))
    scores = ops.add(scores, p["bias_in"])
    if mask is not None:
        diff = _any_var(x_skip_win, kv_win, *p.values())
        scores = ops.add(scores, _prep_mask(mask, nw, tq, tk, diff))

    attn = ops.add(ops.softmax_rows(scores), p["bias_out"])
    out = _merge_heads(ops.matmul(attn, kvh))
    if squeeze:
        out = ops.reshape(out, (tq, c))
    return out


# ---------------------------------------------------------------------------
# map-level wrappers: pad -> (shift) -> partition -> attend -> undo


def w_mska_map(f_map, m_map, p, m: int, heads: int, shifted: bool):
    """Apply ``w_mska`` over a whole [H, W, C] map pair."""
    h, w, _ = value_of(f_map).shape
    if value_of(m_map).shape != value_of(f_map).shape:
        raise ShapeError(
            f"map shapes differ: {value_of(f_map).shape} vs {value_of(m_map).shape}"
        )
    hp, wp = windowing.padded_extent(h, m), windowing.padded_extent(w, m)
    f = ops.pad_hw(f_map, hp - h, wp - w)
    g = ops.pad_hw(m_map, hp - h, wp - w)
    mask = None
    if shifted:
        s = m // 2
        f = ops.roll_hw(f, s, s)
        g = ops.roll_hw(g, s, s)
        mask = windowing.build_sw_mask(hp, wp, m)
    f_w = windowing.window_partition(f, m)
    g_w = windowing.window_partition(g, m)
    y = w_mska(f_w, g_w, p, m, heads, mask=mask)
    y = windowing.window_reverse(y, m, hp, wp)
    if shifted:
        s = m // 2
        y = ops.roll_hw(y, -s, -s)
    return ops.crop_hw(y, h, w)


def light_attention_map(f_map, m_map, p, m: int, heads: int, shifted: bool):
    """Apply ``light_attention`` over a whole [H, W, C] map pair.

    The decoder-state map is depthwise-downsampled once per call, then
    shifted by M/4 and partitioned with window M/2 so each key window sits
    under the matching full-resolution query window.
    """
    h, w, _ = value_of(f_map).shape
    if value_of(m_map).shape != value_of(f_map).shape:
        raise ShapeError(
            f"map shapes differ: {value_of(f_map).shape} vs {value_of(m_map).shape}"
        )
    if m % 4 != 0:
        raise ConfigError(f"dual-resolution attention needs M divisible by 4, got {m}")
    hp, wp = windowing.padded_extent(h, m), windowing.padded_extent(w, m)
    f = ops.pad_hw(f_map, hp - h, wp - w)
    g = ops.pad_hw(m_map, hp - h, wp - w)
    kv = ops.depthwise_conv_down2(g, p["dw_w"], p["dw_b"])
    mask = None
    if shifted:
        s = m // 2
        f = ops.roll_hw(f, s, s)
        kv = ops.roll_hw(kv, s // 2, s // 2)
        mask = windowing.build_light_sw_mask(hp, wp, m)
    f_w = windowing.window_partition(f, m)
    kv_w = windowing.window_partition(kv, m // 2)
    y = light_attention(f_w, kv_w, p, heads, mask=mask)
    y = windowing.window_reverse(y, m, hp, wp)
    if shifted:
        s = m // 2
        y = ops.roll_hw(y, -s, -s)
    return ops.crop_hw(y, h, w)


# ---------------------------------------------------------------------------
# parameter construction


def init_mska_params(rng: Rng, c: int, m: int, heads: int, dtype=np.float32) -> dict:
    """Projection weights and bias table, seeded normal sigma = 0.02."""
    if c % heads != 0:
        raise ConfigError(f"channels {c} not divisible by {heads} heads")
    p = {}
    for name in ("w_q", "w_k", "w_v", "w_o"):
        p[name] = rng.spawn(name).normal((c, c), std=0.02, dtype=dtype)
    p["bias_table"] = rng.spawn("bias_table").normal(
        ((2 * m - 1) ** 2, heads), std=0.02, dtype=dtype
    )
    return p


def init_light_params(rng: Rng, c: int, m: int, heads: int, dtype=np.float32) -> dict:
    """Query projection, shared depthwise K=V path, inner/outer bias matrices."""
    if c % heads != 0:
        raise ConfigError(f"channels {c} not divisible by {heads} heads")
    if m % 4 != 0:
        raise ConfigError(f"dual-resolution attention needs M divisible by 4, got {m}")
    tq, tk = m * m, (m // 2) ** 2
    p = {
        "w_q": rng.spawn("w_q").normal((c, c), std=0.02, dtype=dtype),
        "dw_w": rng.spawn("dw_w").normal((2, 2, c), std=0.02, dtype=dtype),
        "dw_b": np.zeros(c, dtype=dtype),
        "bias_in": rng.spawn("bias_in").normal((heads, tq, tk), std=0.02, dtype=dtype),
        "bias_out": rng.spawn("bias_out").normal((heads, tq, tk), std=0.02, dtype=dtype),
    }
    return p
