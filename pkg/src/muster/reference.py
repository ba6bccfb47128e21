"""Independent reference implementations used only by tests and selftest.

Everything here is written the slow, obvious way: explicit loops, scalar
arithmetic, direct evaluation of definitions. None of it shares code with
the vectorized implementations it checks. Keep it that way; these are the
oracles, and an oracle that calls the code under test proves nothing.

All functions compute in float64 regardless of input dtype.
"""

from __future__ import annotations

import math

import numpy as np

NEG_INF = float("-inf")


# ---------------------------------------------------------------------------
# kernel oracles


def matmul_loops(a, b) -> np.ndarray:
    """Triple-loop 2D matrix product."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def softmax_rows_ref(x) -> np.ndarray:
    """Row-by-row softmax evaluated with python floats."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(-1, x.shape[-1])
    out = np.zeros_like(flat)
    for r in range(flat.shape[0]):
        row = flat[r]
        hi = max(float(v) for v in row)
        exps = [math.exp(float(v) - hi) if v != NEG_INF else 0.0 for v in row]
        z = sum(exps)
        out[r] = [e / z for e in exps]
    return out.reshape(x.shape)


def layer_norm_ref(x, gamma, beta, eps: float = 1e-5) -> np.ndarray:
    """Two-pass per-token normalization."""
    x = np.asarray(x, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    flat = x.reshape(-1, x.shape[-1])
    out = np.zeros_like(flat)
    c = flat.shape[1]
    for t in range(flat.shape[0]):
        mu = sum(float(v) for v in flat[t]) / c
        var = sum((float(v) - mu) ** 2 for v in flat[t]) / c
        inv = 1.0 / math.sqrt(var + eps)
        for j in range(c):
            out[t, j] = (flat[t, j] - mu) * inv * gamma[j] + beta[j]
    return out.reshape(x.shape)


def gelu_ref(x) -> np.ndarray:
    """Elementwise tanh-form GELU via python floats."""
    x = np.asarray(x, dtype=np.float64)
    c = math.sqrt(2.0 / math.pi)
    flat = x.reshape(-1)
    out = np.array(
        [0.5 * v * (1.0 + math.tanh(c * (v + 0.044715 * v**3))) for v in flat]
    )
    return out.reshape(x.shape)


def conv1x1_ref(x, w, b) -> np.ndarray:
    """Per-pixel vector-matrix product, nested loops."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    h, wd, cin = x.shape
    cout = w.shape[1]
    out = np.zeros((h, wd, cout))
    for i in range(h):
        for j in range(wd):
            for o in range(cout):
                acc = b[o]
                for c in range(cin):
                    acc += x[i, j, c] * w[c, o]
                out[i, j, o] = acc
    return out


def depthwise_down2_ref(x, w, b) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    h, wd, c = x.shape
    out = np.zeros((h // 2, wd // 2, c))
    for i in range(h // 2):
        for j in range(wd // 2):
            for ch in range(c):
                acc = b[ch]
                for di in range(2):
                    for dj in range(2):
                        acc += x[2 * i + di, 2 * j + dj, ch] * w[di, dj, ch]
                out[i, j, ch] = acc
    return out


def transposed_conv2x2_ref(x, w, b) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    h, wd, cin = x.shape
    cout = w.shape[3]
    out = np.zeros((2 * h, 2 * wd, cout))
    for i in range(h):
        for j in range(wd):
            for di in range(2):
                for dj in range(2):
                    for o in range(cout):
                        acc = 0.0
                        for c in range(cin):
                            acc += x[i, j, c] * w[di, dj, c, o]
                        out[2 * i + di, 2 * j + dj, o] = acc
    return out + b


def upsample_bilinear2x_ref(x) -> np.ndarray:
    """Per-output-pixel bilinear sampling, half-pixel convention."""
    x = np.asarray(x, dtype=np.float64)
    h, w, c = x.shape
    out = np.zeros((2 * h, 2 * w, c))

    def sample(axis_len, i):
        src = (i + 0.5) / 2.0 - 0.5
        lo = math.floor(src)
        frac = src - lo
        lo0 = min(max(lo, 0), axis_len - 1)
        lo1 = min(max(lo + 1, 0), axis_len - 1)
        return lo0, lo1, 1.0 - frac, frac

    for i in range(2 * h):
        r0, r1, wr0, wr1 = sample(h, i)
        for j in range(2 * w):
            c0, c1, wc0, wc1 = sample(w, j)
            for ch in range(c):
                out[i, j, ch] = (
                    wr0 * wc0 * x[r0, c0, ch]
                    + wr0 * wc1 * x[r0, c1, ch]
                    + wr1 * wc0 * x[r1, c0, ch]
                    + wr1 * wc1 * x[r1, c1, ch]
                )
    return out


def pixel_shuffle_ref(x, r: int) -> np.ndarray:
    """Direct evaluation of the sub-pixel index map."""
    x = np.asarray(x, dtype=np.float64)
    h, w, c = x.shape
    cout = c // (r * r)
    out = np.zeros((r * h, r * w, cout))
    for i in range(h):
        for j in range(w):
            for co in range(cout):
                for di in range(r):
                    for dj in range(r):
                        out[r * i + di, r * j + dj, co] = x[i, j, co * r * r + di * r + dj]
    return out


# ---------------------------------------------------------------------------
# mask oracles


def _region_id(v: int, n: int, s: int) -> int:
    return 0 if v < n - s else 1


def sw_mask_oracle(h: int, w: int, m: int) -> np.ndarray:
    """Brute-force per-window masks [nH*nW, M^2, M^2] from source coordinates.

    For every token of every window of the rolled grid, recover the pre-roll
    source coordinate, classify it per axis by the threshold rule, and allow
    a pair iff both axes agree. No canonical-mask shortcut is taken.
    """
    assert h % m == 0 and w % m == 0 and m % 2 == 0
    s = m // 2
    nh, nw = h // m, w // m
    out = np.zeros((nh * nw, m * m, m * m), dtype=np.float64)
    for wi in range(nh):
        for wj in range(nw):
            ids = []
            for p in range(m):
                for q in range(m):
                    src_r = (wi * m + p + s) % h
                    src_c = (wj * m + q + s) % w
                    ids.append((_region_id(src_r, h, s), _region_id(src_c, w, s)))
            widx = wi * nw + wj
            for a in range(m * m):
                for b in range(m * m):
                    out[widx, a, b] = 0.0 if ids[a] == ids[b] else NEG_INF
    return out


def sw_mask_swin_slices(h: int, w: int, m: int) -> np.ndarray:
    """Second, independent construction: label the unrolled grid with the
    classic three slices per axis (9 zones), partition, and block pairs with
    different labels. Produces the same masks as the source-coordinate rule.
    """
    assert h % m == 0 and w % m == 0 and m % 2 == 0
    s = m // 2
    img = np.zeros((h, w))
    cnt = 0
    for hs in (slice(0, h - m), slice(h - m, h - s), slice(h - s, h)):
        for ws in (slice(0, w - m), slice(w - m, w - s), slice(w - s, w)):
            img[hs, ws] = cnt
            cnt += 1
    nh, nw = h // m, w // m
    wins = img.reshape(nh, m, nw, m).transpose(0, 2, 1, 3).reshape(nh * nw, m * m)
    diff = wins[:, :, None] - wins[:, None, :]
    return np.where(diff == 0, 0.0, NEG_INF)


def light_sw_mask_oracle(h: int, w: int, m: int) -> np.ndarray:
    """Brute-force dual-resolution masks [nH*nW, M^2, (M/2)^2].

    Queries live on the full rolled grid (roll M/2, window M); keys on the
    half-resolution grid (roll M/4, window M/2), each key covering a 2x2
    block of source pixels. All four pixels of a block must share a region;
    violation means the geometry premise (M % 4 == 0) was broken.
    """
    assert h % m == 0 and w % m == 0 and m % 4 == 0
    s = m // 2
    h2, w2, m2, s2 = h // 2, w // 2, m // 2, m // 4
    nh, nw = h // m, w // m
    tq, tk = m * m, m2 * m2
    out = np.zeros((nh * nw, tq, tk), dtype=np.float64)
    for wi in range(nh):
        for wj in range(nw):
            q_ids = []
            for p in range(m):
                for q in range(m):
                    src_r = (wi * m + p + s) % h
                    src_c = (wj * m + q + s) % w
                    q_ids.append((_region_id(src_r, h, s), _region_id(src_c, w, s)))
            k_ids = []
            for u in range(m2):
                for v in range(m2):
                    half_r = (wi * m2 + u + s2) % h2
                    half_c = (wj * m2 + v + s2) % w2
                    block = [
                        (_region_id(2 * half_r + dr, h, s), _region_id(2 * half_c + dc, w, s))
                        for dr in (0, 1)
                        for dc in (0, 1)
                    ]
                    assert len(set(block)) == 1, "key block straddles regions"
                    k_ids.append(block[0])
            widx = wi * nw + wj
            for a in range(tq):
                for b in range(tk):
                    out[widx, a, b] = 0.0 if q_ids[a] == k_ids[b] else NEG_INF
    return out


# ---------------------------------------------------------------------------
# attention oracles


def _split_heads_ref(x, heads: int):
    t, c = x.shape
    d = c // heads
    return [x[:, h * d : (h + 1) * d] for h in range(heads)]


def msa_ref(x, w_q, w_k, w_v, w_o, heads: int) -> np.ndarray:
    """Plain multi-head self-attention over [T, C] tokens, no bias, no mask."""
    x = np.asarray(x, dtype=np.float64)
    q = matmul_loops(x, w_q)
    k = matmul_loops(x, w_k)
    v = matmul_loops(x, w_v)
    d = x.shape[1] // heads
    outs = []
    for qh, kh, vh in zip(
        _split_heads_ref(q, heads), _split_heads_ref(k, heads), _split_heads_ref(v, heads)
    ):
        logits = matmul_loops(qh, kh.T) / math.sqrt(d)
        a = softmax_rows_ref(logits)
        outs.append(matmul_loops(a, vh))
    return matmul_loops(np.concatenate(outs, axis=1), w_o)


def rel_bias_matrix_ref(table, m: int, heads: int) -> np.ndarray:
    """[heads, M^2, M^2] bias from a [(2M-1)^2, heads] table, computed from
    explicit (query, key) coordinate deltas."""
    table = np.asarray(table, dtype=np.float64)
    t = m * m
    out = np.zeros((heads, t, t))
    for qi in range(t):
        for ki in range(t):
            dr = qi // m - ki // m
            dc = qi % m - ki % m
            row = (dr + m - 1) * (2 * m - 1) + (dc + m - 1)
            for h in range(heads):
                out[h, qi, ki] = table[row, h]
    return out


def w_mska_oracle(f_win, m_win, w_q, w_k, w_v, w_o, table, m: int, heads: int, mask=None):
    """Scalar-loop windowed skip attention.

    Queries from the skip feature window, keys/values from the decoder state
    window; scaled logits plus relative position bias plus optional additive
    mask; per-head softmax; concatenated head outputs through the output
    projection.
    """
    f_win = np.asarray(f_win, dtype=np.float64)
    m_win = np.asarray(m_win, dtype=np.float64)
    t, c = f_win.shape
    d = c // heads
    q = matmul_loops(f_win, w_q)
    k = matmul_loops(m_win, w_k)
    v = matmul_loops(m_win, w_v)
    bias = rel_bias_matrix_ref(table, m, heads)
    outs = []
    for h, (qh, kh, vh) in enumerate(
        zip(_split_heads_ref(q, heads), _split_heads_ref(k, heads), _split_heads_ref(v, heads))
    ):
        logits = np.zeros((t, t))
        for a in range(t):
            for b in range(t):
                acc = 0.0
                for e in range(d):
                    acc += qh[a, e] * kh[b, e]
                logits[a, b] = acc / math.sqrt(d) + bias[h, a, b]
                if mask is not None:
                    logits[a, b] += mask[a, b]
        attn = softmax_rows_ref(logits)
        outs.append(matmul_loops(attn, vh))
    return matmul_loops(np.concatenate(outs, axis=1), w_o)


def light_attention_oracle(x_skip_win, kv_win, w_q, b_i, b_o, heads: int, mask=None):
    """Scalar-loop dual-resolution attention.

    Queries are a single projection of the skip window; keys and values are
    one shared (already downsampled) tensor split by head. Logits get the
    inner bias, attention weights get the outer bias before multiplying V.
    No logit scaling, no output projection.
    """
    x_skip_win = np.asarray(x_skip_win, dtype=np.float64)
    kv_win = np.asarray(kv_win, dtype=np.float64)
    b_i = np.asarray(b_i, dtype=np.float64)
    b_o = np.asarray(b_o, dtype=np.float64)
    tq, c = x_skip_win.shape
    tk = kv_win.shape[0]
    q = matmul_loops(x_skip_win, w_q)
    outs = []
    for h, (qh, kvh) in enumerate(
        zip(_split_heads_ref(q, heads), _split_heads_ref(kv_win, heads))
    ):
        logits = np.zeros((tq, tk))
        for a in range(tq):
            for b in range(tk):
                acc = 0.0
                for e in range(qh.shape[1]):
                    acc += qh[a, e] * kvh[b, e]
                logits[a, b] = acc + b_i[h, a, b]
                if mask is not None:
                    logits[a, b] += mask[a, b]
        attn = softmax_rows_ref(logits)
        outs.append(matmul_loops(attn + b_o[h], kvh))
    return np.concatenate(outs, axis=1)
