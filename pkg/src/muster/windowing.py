"""Window partitioning, cyclic shifts, and shifted-window attention masks.

A feature map [H, W, C] is cut into non-overlapping M x M windows after
zero-padding H and W up to multiples of M on the bottom/right. The shifted
variant first rolls the map by half a window; tokens that wrap around the
border must not attend across the seam, which the additive masks below
encode with 0 (allowed) and -inf (blocked).

Region rule: along one axis of the padded, rolled grid, a position whose
pre-roll source coordinate v satisfies ``v < H - s`` is in region 0,
otherwise region 1 (s is the roll distance). A query/key pair is allowed
iff the two tokens agree in region on both axes. Working this out per
window shows there are only four distinct masks for a given window size:
interior windows are unmasked, and the last window row/column/corner get
the three nontrivial patterns. Assembly for any grid just assigns one of
the four to each window by whether it is in the last row and/or column.

The dual-resolution mask family serves attention where queries live on the
full grid (window M, roll M/2) but keys live on a half-resolution grid
(window M/2, roll M/4). Each key covers a 2x2 block of source pixels; M
divisible by 4 makes the region threshold H - s even, so a block never
straddles regions and the key's region is well defined.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .autodiff import ops, value_of
from .errors import MaskError, ShapeError

NEG_INF = float("-inf")

INTERIOR = "interior"
RIGHT_EDGE = "right_edge"
BOTTOM_EDGE = "bottom_edge"
CORNER = "corner"
MASK_NAMES = (INTERIOR, RIGHT_EDGE, BOTTOM_EDGE, CORNER)


def padded_extent(n: int, m: int) -> int:
    """Smallest multiple of m that is >= n."""
    return ((n + m - 1) // m) * m


@dataclass(frozen=True)
class WindowGrid:
    """Geometry of one partitioned map: true size, padded size, window counts."""

    h: int
    w: int
    m: int
    h_pad: int
    w_pad: int
    nh: int
    nw: int

    @classmethod
    def for_map(cls, h: int, w: int, m: int) -> "WindowGrid":
        if m < 2:
            raise MaskError(f"window size must be at least 2, got {m}")
        hp, wp = padded_extent(h, m), padded_extent(w, m)
        return cls(h=h, w=w, m=m, h_pad=hp, w_pad=wp, nh=hp // m, nw=wp // m)

    @property
    def num_windows(self) -> int:
        return self.nh * self.nw


def window_partition(x, m: int):
    """[H, W, C] -> [nH*nW, M*M, C]. H and W must be multiples of M.

    Accepts plain arrays or tape Vars (the rearrangement is differentiable).
    """
    h, w, c = value_of(x).shape
    if h % m != 0 or w % m != 0:
        raise ShapeError(f"window_partition: map ({h}, {w}) not divisible by window {m}")
    x = ops.reshape(x, (h // m, m, w // m, m, c))
    x = ops.transpose(x, (0, 2, 1, 3, 4))
    return ops.reshape(x, ((h // m) * (w // m), m * m, c))


def window_reverse(wins, m: int, h: int, w: int):
    """Inverse of ``window_partition`` back to [H, W, C]."""
    nwin, t, c = value_of(wins).shape
    if t != m * m:
        raise ShapeError(f"window_reverse: token count {t} != M*M = {m * m}")
    if nwin != (h // m) * (w // m):
        raise ShapeError(
            f"window_reverse: {nwin} windows cannot tile a ({h}, {w}) map with M={m}"
        )
    x = ops.reshape(wins, (h // m, w // m, m, m, c))
    x = ops.transpose(x, (0, 2, 1, 3, 4))
    return ops.reshape(x, (h, w, c))


# ---------------------------------------------------------------------------
# canonical masks


def _axis_regions(m: int, s: int, edge: bool) -> np.ndarray:
    """Region id per in-window offset along one axis of the rolled grid.

    Interior windows never touch wrapped content: all offsets are region 0.
    In the last window of an axis the first m - s offsets hold content from
    just before the border (region 1) and the final s offsets hold the
    wrapped-around rows (region 0).
    """
    if not edge:
        return np.zeros(m, dtype=np.int64)
    r = np.zeros(m, dtype=np.int64)
    r[: m - s] = 1
    return r


def _pair_mask(q_rows, q_cols, k_rows, k_cols) -> np.ndarray:
    """Additive mask from per-axis region vectors of queries and keys."""
    qid = (q_rows[:, None] * 2 + q_cols[None, :]).reshape(-1)
    kid = (k_rows[:, None] * 2 + k_cols[None, :]).reshape(-1)
    mask = np.where(qid[:, None] == kid[None, :], 0.0, NEG_INF)
    return mask.astype(np.float32)


@lru_cache(maxsize=None)
def canonical_masks(m: int):
    """The four additive masks [M^2, M^2] for window size M (even)."""
    if m % 2 != 0:
        raise MaskError(f"shifted windows need an even window size, got {m}")
    s = m // 2
    out = {}
    for name, (er, ec) in _EDGE_FLAGS.items():
        rows = _axis_regions(m, s, er)
        cols = _axis_regions(m, s, ec)
        out[name] = _pair_mask(rows, cols, rows, cols)
    _sanity(out, m * m)
    return out


@lru_cache(maxsize=None)
def canonical_light_masks(m: int):
    """The four dual-resolution masks [M^2, (M/2)^2] for window size M.

    Query tokens use the full grid (window M, roll M/2); key tokens use the
    half grid (window M/2, roll M/4). Requires M divisible by 4.
    """
    if m % 4 != 0:
        raise MaskError(f"dual-resolution masks need M divisible by 4, got {m}")
    s = m // 2
    m2, s2 = m // 2, m // 4
    out = {}
    for name, (er, ec) in _EDGE_FLAGS.items():
        q_rows = _axis_regions(m, s, er)
        q_cols = _axis_regions(m, s, ec)
        k_rows = _axis_regions(m2, s2, er)
        k_cols = _axis_regions(m2, s2, ec)
        out[name] = _pair_mask(q_rows, q_cols, k_rows, k_cols)
    _sanity(out, m * m)
    return out


_EDGE_FLAGS = {
    INTERIOR: (False, False),
    RIGHT_EDGE: (False, True),
    BOTTOM_EDGE: (True, False),
    CORNER: (True, True),
}


def _sanity(masks: dict, tq: int) -> None:
    if np.any(masks[INTERIOR] != 0.0):
        raise MaskError("internal: interior mask must be all zeros")
    for name, mask in masks.items():
        if mask.shape[0] != tq:
            raise MaskError(f"internal: {name} mask has wrong query count")
        if np.any(np.all(np.isneginf(mask), axis=1)):
            raise MaskError(f"internal: {name} mask has a fully blocked query row")


def mask_assignment(nh: int, nw: int):
    """Mask name per window, row-major over the window grid."""
    names = []
    for wi in range(nh):
        for wj in range(nw):
            er, ec = wi == nh - 1, wj == nw - 1
            for name, flags in _EDGE_FLAGS.items():
                if flags == (er, ec):
                    names.append(name)
                    break
    return names


def _assemble(h: int, w: int, m: int, family) -> np.ndarray:
    if h % m != 0 or w % m != 0:
        raise MaskError(f"mask assembly needs padded dims, got ({h}, {w}) with M={m}")
    masks = family(m)
    names = mask_assignment(h // m, w // m)
    return np.stack([masks[n] for n in names], axis=0)


def build_sw_mask(h: int, w: int, m: int) -> np.ndarray:
    """Per-window additive masks [nH*nW, M^2, M^2] for a padded H x W map."""
    return _assemble(h, w, m, canonical_masks)


def build_light_sw_mask(h: int, w: int, m: int) -> np.ndarray:
    """Per-window dual-resolution masks [nH*nW, M^2, (M/2)^2]."""
    return _assemble(h, w, m, canonical_light_masks)


def finite_mask(mask: np.ndarray, fill: float = -1e9) -> np.ndarray:
    """Replace -inf with a large negative finite value.

    exp(fill - rowmax) underflows to exactly 0 in both float32 and float64,
    so softmax weights and their gradients match the -inf mask bit for bit
    while keeping every tape value finite.
    """
    return np.where(np.isneginf(mask), np.asarray(fill, dtype=mask.dtype), mask)


def render_mask(mask: np.ndarray) -> str:
    """ASCII picture of one additive mask: '.' allowed, '#' blocked."""
    rows = []
    for r in np.asarray(mask):
        rows.append("".join("#" if np.isneginf(v) or v <= -1e8 else "." for v in r))
    return "\n".join(rows)
