"""Dense numerical kernels shared by every other module.

Values are numpy arrays: feature maps in row-major ``[H, W, C]`` layout,
windowed token blocks in ``[tokens, channels]``, rank at most 5. float32 is
the forward/serialization precision, float64 the verification precision;
kernels preserve the input dtype. Every kernel is a pure function of its
inputs, so identical inputs give bit-identical outputs.

Two optional instrumentation hooks exist:

* ``debug_checks(True)`` makes kernels raise if finite inputs ever produce
  a non-finite output.
* ``count_macs()`` is a context manager that tallies the multiply-accumulate
  count of every matmul/conv-family kernel executed inside it, used to
  cross-check the analytic complexity model against a real forward pass.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

from .errors import ConfigError, FullyMaskedRowError, ShapeError

MAX_RANK = 5

_debug_checks = False
_mac_counter = None


def debug_checks(enable: bool) -> None:
    """Toggle the finite-output assertion in every kernel."""
    global _debug_checks
    _debug_checks = bool(enable)


class MacCounter:
    """Accumulates multiply-accumulate counts from instrumented kernels."""

    def __init__(self):
        self.total = 0

    def add(self, n: int) -> None:
        self.total += int(n)


@contextmanager
def count_macs():
    """Count MACs of matmul/conv kernels executed in this context."""
    global _mac_counter
    prev = _mac_counter
    counter = MacCounter()
    _mac_counter = counter
    try:
        yield counter
    finally:
        _mac_counter = prev


def _record_macs(n: int) -> None:
    if _mac_counter is not None:
        _mac_counter.add(n)


def _check(x, name: str) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim > MAX_RANK:
        raise ShapeError(f"{name}: rank {x.ndim} exceeds the maximum of {MAX_RANK}")
    return x


def _guard_finite(out: np.ndarray, *inputs) -> np.ndarray:
    if _debug_checks:
        if all(np.all(np.isfinite(np.asarray(v))) for v in inputs) and not np.all(
            np.isfinite(out)
        ):
            raise FloatingPointError("kernel produced non-finite output from finite input")
    return out


# ---------------------------------------------------------------------------
# core linear algebra


def matmul(a, b) -> np.ndarray:
    """Stacked matrix product ``(..., m, k) @ (..., k, n)``.

    Leading dimensions broadcast; the MAC count recorded is
    ``prod(batch) * m * k * n`` for the broadcast batch shape.
    """
    a = _check(a, "matmul")
    b = _check(b, "matmul")
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul: operands must have rank >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul: inner extents differ: left has k={a.shape[-1]}, "
            f"right has k={b.shape[-2]}"
        )
    out = a @ b
    m, k = a.shape[-2], a.shape[-1]
    n = b.shape[-1]
    batch = int(np.prod(out.shape[:-2], dtype=np.int64)) if out.ndim > 2 else 1
    _record_macs(batch * m * k * n)
    return _guard_finite(out, a, b)


def softmax_rows(x) -> np.ndarray:
    """Softmax over the last axis with max-subtraction stabilization.

    Entries of -inf are mapped to exactly 0 weight. A row whose entries are
    all -inf has no valid key and raises FullyMaskedRowError.
    """
    x = _check(x, "softmax_rows")
    m = np.max(x, axis=-1, keepdims=True)
    if np.any(np.isneginf(m)):
        raise FullyMaskedRowError("softmax_rows: fully masked row (all entries are -inf)")
    e = np.exp(x - m)
    out = e / np.sum(e, axis=-1, keepdims=True)
    return _guard_finite(out, x)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> np.ndarray:
    """Normalize each token (last axis) to zero mean / unit variance, then affine."""
    x = _check(x, "layer_norm")
    gamma = np.asarray(gamma)
    beta = np.asarray(beta)
    if eps <= 0:
        raise ConfigError(f"layer_norm: eps must be positive, got {eps}")
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"layer_norm: gamma/beta must have shape ({c},), got {gamma.shape} and {beta.shape}"
        )
    mu = np.mean(x, axis=-1, keepdims=True)
    var = np.mean((x - mu) ** 2, axis=-1, keepdims=True)
    xhat = (x - mu) / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    return _guard_finite(xhat * gamma + beta, x, gamma, beta)


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def gelu(x) -> np.ndarray:
    """GELU nonlinearity, tanh form: 0.5*x*(1 + tanh(c*(x + a*x^3)))."""
    x = _check(x, "gelu")
    inner = np.tanh(_GELU_C * (x + _GELU_A * x**3))
    return _guard_finite(0.5 * x * (1.0 + inner), x)


def gelu_grad(x) -> np.ndarray:
    """Derivative of ``gelu`` with respect to its input."""
    x = np.asarray(x)
    u = _GELU_C * (x + _GELU_A * x**3)
    t = np.tanh(u)
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x**2)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * du


# ---------------------------------------------------------------------------
# space/channel rearrangement


def pixel_shuffle(x, r: int) -> np.ndarray:
    """Sub-pixel rearrangement [H, W, C] -> [r*H, r*W, C/r^2].

    out[r*i+di, r*j+dj, c] = in[i, j, c*r*r + di*r + dj]; a pure index
    permutation, so the output holds exactly the input's values.
    """
    x = _check(x, "pixel_shuffle")
    h, w, c = x.shape
    if c % (r * r) != 0:
        raise ShapeError(f"pixel_shuffle: channels {c} not divisible by r^2={r * r}")
    cout = c // (r * r)
    out = x.reshape(h, w, cout, r, r).transpose(0, 3, 1, 4, 2).reshape(h * r, w * r, cout)
    return np.ascontiguousarray(out)


def pixel_unshuffle(x, r: int) -> np.ndarray:
    """Exact inverse of ``pixel_shuffle``."""
    x = _check(x, "pixel_unshuffle")
    h, w, c = x.shape
    if h % r != 0 or w % r != 0:
        raise ShapeError(f"pixel_unshuffle: spatial dims ({h}, {w}) not divisible by r={r}")
    out = (
        x.reshape(h // r, r, w // r, r, c)
        .transpose(0, 2, 4, 1, 3)
        .reshape(h // r, w // r, c * r * r)
    )
    return np.ascontiguousarray(out)


def concat_channels(a, b) -> np.ndarray:
    """Concatenate two [H, W, C] maps along channels, first operand first."""
    a = _check(a, "concat_channels")
    b = _check(b, "concat_channels")
    if a.shape[:-1] != b.shape[:-1]:
        raise ShapeError(
            f"concat_channels: spatial extents differ: {a.shape[:-1]} vs {b.shape[:-1]}"
        )
    return np.concatenate([a, b], axis=-1)


# ---------------------------------------------------------------------------
# convolutions


def conv1x1(x, w, b) -> np.ndarray:
    """Pointwise linear map per pixel: [H, W, Cin] x [Cin, Cout] + [Cout]."""
    x = _check(x, "conv1x1")
    w = np.asarray(w)
    b = np.asarray(b)
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(
            f"conv1x1: input channels {x.shape[-1]} do not match weight rows {w.shape[0]}"
        )
    if b.shape != (w.shape[1],):
        raise ShapeError(f"conv1x1: bias shape {b.shape} does not match Cout={w.shape[1]}")
    return _guard_finite(matmul(x, w) + b, x, w, b)


def depthwise_conv_down2(x, w, b) -> np.ndarray:
    """2x2 stride-2 depthwise convolution; channels never mix.

    out[i, j, c] = b[c] + sum_{di,dj in {0,1}} x[2i+di, 2j+dj, c] * w[di, dj, c]
    """
    x = _check(x, "depthwise_conv_down2")
    w = np.asarray(w)
    b = np.asarray(b)
    h, wd, c = x.shape
    if h % 2 != 0 or wd % 2 != 0:
        raise ShapeError(
            f"depthwise_conv_down2: spatial dims ({h}, {wd}) must both be even"
        )
    if w.shape != (2, 2, c):
        raise ShapeError(f"depthwise_conv_down2: kernel shape {w.shape} != (2, 2, {c})")
    if b.shape != (c,):
        raise ShapeError(f"depthwise_conv_down2: bias shape {b.shape} != ({c},)")
    blocks = x.reshape(h // 2, 2, wd // 2, 2, c)
    out = np.einsum("hiwjc,ijc->hwc", blocks, w) + b
    _record_macs((h // 2) * (wd // 2) * 4 * c)
    return _guard_finite(out, x, w, b)


def transposed_conv2x2(x, w, b) -> np.ndarray:
    """Transposed convolution, kernel 2x2 stride 2: [H, W, Cin] -> [2H, 2W, Cout].

    Non-overlapping: out[2i+di, 2j+dj, o] = b[o] + sum_c x[i, j, c] * w[di, dj, c, o].
    """
    x = _check(x, "transposed_conv2x2")
    w = np.asarray(w)
    b = np.asarray(b)
    h, wd, cin = x.shape
    if w.ndim != 4 or w.shape[:3] != (2, 2, cin):
        raise ShapeError(f"transposed_conv2x2: kernel shape {w.shape} != (2, 2, {cin}, Cout)")
    cout = w.shape[3]
    if b.shape != (cout,):
        raise ShapeError(f"transposed_conv2x2: bias shape {b.shape} != ({cout},)")
    out = np.einsum("hwc,ijco->hiwjo", x, w).reshape(2 * h, 2 * wd, cout) + b
    _record_macs(4 * h * wd * cin * cout)
    return _guard_finite(out, x, w, b)


# ---------------------------------------------------------------------------
# interpolation


def _bilinear_axis_weights(n: int, dtype):
    """Source indices and weights for 2x upsampling along one axis.

    Half-pixel convention: output i samples input at (i + 0.5)/2 - 0.5,
    clamped to the valid range.
    """
    src = (np.arange(2 * n, dtype=np.float64) + 0.5) / 2.0 - 0.5
    i0 = np.floor(src).astype(np.int64)
    frac = src - i0
    i1 = np.clip(i0 + 1, 0, n - 1)
    i0 = np.clip(i0, 0, n - 1)
    w1 = frac.astype(dtype)
    w0 = (1.0 - frac).astype(dtype)
    return i0, i1, w0, w1


def upsample_bilinear2x(x) -> np.ndarray:
    """Bilinear 2x upsampling of [H, W, C] with the half-pixel convention."""
    x = _check(x, "upsample_bilinear2x")
    h, w, _ = x.shape
    i0, i1, w0, w1 = _bilinear_axis_weights(h, x.dtype)
    rows = x[i0] * w0[:, None, None] + x[i1] * w1[:, None, None]
    j0, j1, v0, v1 = _bilinear_axis_weights(w, x.dtype)
    out = rows[:, j0] * v0[None, :, None] + rows[:, j1] * v1[None, :, None]
    return _guard_finite(out, x)


def upsample_bilinear2x_adjoint(g, h: int, w: int) -> np.ndarray:
    """Transpose of ``upsample_bilinear2x`` as a linear map (for backprop)."""
    g = np.asarray(g)
    j0, j1, v0, v1 = _bilinear_axis_weights(w, g.dtype)
    rows = np.zeros((2 * h, w, g.shape[-1]), dtype=g.dtype)
    np.add.at(rows, (slice(None), j0), g * v0[None, :, None])
    np.add.at(rows, (slice(None), j1), g * v1[None, :, None])
    i0, i1, w0, w1 = _bilinear_axis_weights(h, g.dtype)
    out = np.zeros((h, w, g.shape[-1]), dtype=g.dtype)
    np.add.at(out, i0, rows * w0[:, None, None])
    np.add.at(out, i1, rows * w1[:, None, None])
    return out


# ---------------------------------------------------------------------------
# padding / cropping / cyclic shift (token-grid helpers)


def pad_hw(x, ph: int, pw: int) -> np.ndarray:
    """Zero-pad a [H, W, C] map on the bottom/right by (ph, pw)."""
    x = _check(x, "pad_hw")
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, ph), (0, pw), (0, 0)))


def crop_hw(x, h: int, w: int) -> np.ndarray:
    """Crop a [H, W, C] map to its top-left (h, w) corner."""
    x = _check(x, "crop_hw")
    return x[:h, :w, :]


def roll_hw(x, sh: int, sw: int) -> np.ndarray:
    """Cyclic roll: out[i, j] = x[(i + sh) mod H, (j + sw) mod W]."""
    x = _check(x, "roll_hw")
    return np.roll(x, shift=(-sh, -sw), axis=(0, 1))
