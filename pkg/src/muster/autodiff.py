"""Minimal reverse-mode automatic differentiation over numpy arrays.

A ``Tape`` records operations on ``Var`` handles; ``Tape.backward`` replays
the recorded pullback closures in reverse to accumulate gradients. The
``ops`` namespace in this module mirrors the forward kernels and dispatches
on its inputs: with plain ndarrays it just calls the kernel, with Vars it
also records the vector-Jacobian product. Model code therefore has exactly
one implementation of the forward pass, usable both for plain inference and
for gradient computation.

Gradient verification runs in float64; forward inference in float32. The
kernels preserve dtype, so the caller chooses precision by the arrays it
feeds in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import GraphError
from .rng import Rng


class Var:
    """Handle to one node of a tape. Holds the forward value."""

    __slots__ = ("value", "tape", "index")

    def __init__(self, value, tape, index):
        self.value = value
        self.tape = tape
        self.index = index

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def __repr__(self):
        return f"Var(shape={self.value.shape}, node={self.index})"


class Tape:
    """Linear record of operations, one entry per produced Var."""

    def __init__(self):
        # per node: tuple of (parent_index, pullback) pairs; leaves have ()
        self._edges = []

    def var(self, value) -> Var:
        """Register a leaf (input or parameter) and return its handle."""
        return self._emit(np.asarray(value), ())

    def _emit(self, value, edges) -> Var:
        self._edges.append(edges)
        return Var(value, self, len(self._edges) - 1)

    def backward(self, loss: Var):
        """Accumulate d(loss)/d(node) for every node; returns the list.

        ``loss`` must be a scalar node of this tape. The returned list is
        indexed by node id; query a Var's gradient with ``grads[v.index]``.
        Unreached nodes hold None.
        """
        if loss.tape is not self:
            raise GraphError("backward: loss Var belongs to a different tape")
        if np.asarray(loss.value).size != 1:
            raise GraphError(
                f"backward: loss must be scalar, got shape {np.shape(loss.value)}"
            )
        grads = [None] * len(self._edges)
        grads[loss.index] = np.ones_like(loss.value)
        for i in range(loss.index, -1, -1):
            g = grads[i]
            if g is None:
                continue
            for parent, pull in self._edges[i]:
                contrib = pull(g)
                if grads[parent] is None:
                    grads[parent] = contrib
                else:
                    grads[parent] = grads[parent] + contrib
        return grads


def value_of(x):
    """Forward value of a Var, or the input itself when already an array."""
    return x.value if isinstance(x, Var) else np.asarray(x)


def _tape_of(*xs):
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise GraphError("operands come from different tapes")
    return tape


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to the operand's shape."""
    shape = tuple(shape)
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class _Ops:
    """Forward kernels with dispatch on Var vs ndarray operands."""

    # -- elementwise ---------------------------------------------------

    def add(self, a, b):
        tape = _tape_of(a, b)
        av, bv = value_of(a), value_of(b)
        out = av + bv
        if tape is None:
            return out
        edges = []
        if isinstance(a, Var):
            edges.append((a.index, lambda g: _unbroadcast(g, av.shape)))
        if isinstance(b, Var):
            edges.append((b.index, lambda g: _unbroadcast(g, bv.shape)))
        return tape._emit(out, tuple(edges))

    def sub(self, a, b):
        tape = _tape_of(a, b)
        av, bv = value_of(a), value_of(b)
        out = av - bv
        if tape is None:
            return out
        edges = []
        if isinstance(a, Var):
            edges.append((a.index, lambda g: _unbroadcast(g, av.shape)))
        if isinstance(b, Var):
            edges.append((b.index, lambda g: _unbroadcast(-g, bv.shape)))
        return tape._emit(out, tuple(edges))

    def mul(self, a, b):
        tape = _tape_of(a, b)
        av, bv = value_of(a), value_of(b)
        out = av * bv
        if tape is None:
            return out
        edges = []
        if isinstance(a, Var):
            edges.append((a.index, lambda g: _unbroadcast(g * bv, av.shape)))
        if isinstance(b, Var):
            edges.append((b.index, lambda g: _unbroadcast(g * av, bv.shape)))
        return tape._emit(out, tuple(edges))

    def scale(self, x, c: float):
        """Multiply by a python scalar constant."""
        tape = _tape_of(x)
        xv = value_of(x)
        out = xv * xv.dtype.type(c)
        if tape is None:
            return out
        return tape._emit(out, ((x.index, lambda g: g * xv.dtype.type(c)),))

    # -- linear algebra ------------------------------------------------

    def matmul(self, a, b):
        tape = _tape_of(a, b)
        av, bv = value_of(a), value_of(b)
        out = kernels.matmul(av, bv)
        if tape is None:
            return out
        edges = []
        if isinstance(a, Var):
            bt = np.swapaxes(bv, -1, -2)
            edges.append((a.index, lambda g: _unbroadcast(g @ bt, av.shape)))
        if isinstance(b, Var):
            at = np.swapaxes(av, -1, -2)
            edges.append((b.index, lambda g: _unbroadcast(at @ g, bv.shape)))
        return tape._emit(out, tuple(edges))

    def softmax_rows(self, x):
        tape = _tape_of(x)
        out = kernels.softmax_rows(value_of(x))
        if tape is None:
            return out

        def pull(g, y=out):
            return y * (g - np.sum(g * y, axis=-1, keepdims=True))

        return tape._emit(out, ((x.index, pull),))

    def layer_norm(self, x, gamma, beta, eps: float = 1e-5):
        tape = _tape_of(x, gamma, beta)
        xv, gv, bv = value_of(x), value_of(gamma), value_of(beta)
        out = kernels.layer_norm(xv, gv, bv, eps)
        if tape is None:
            return out
        mu = np.mean(xv, axis=-1, keepdims=True)
        var = np.mean((xv - mu) ** 2, axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=xv.dtype))
        xhat = (xv - mu) * inv
        edges = []
        if isinstance(x, Var):

            def pull_x(g):
                dxhat = g * gv
                m1 = np.mean(dxhat, axis=-1, keepdims=True)
                m2 = np.mean(dxhat * xhat, axis=-1, keepdims=True)
                return inv * (dxhat - m1 - xhat * m2)

            edges.append((x.index, pull_x))
        if isinstance(gamma, Var):
            edges.append(
                (gamma.index, lambda g: (g * xhat).reshape(-1, xv.shape[-1]).sum(axis=0))
            )
        if isinstance(beta, Var):
            edges.append((beta.index, lambda g: g.reshape(-1, xv.shape[-1]).sum(axis=0)))
        return tape._emit(out, tuple(edges))

    def gelu(self, x):
        tape = _tape_of(x)
        xv = value_of(x)
        out = kernels.gelu(xv)
        if tape is None:
            return out
        return tape._emit(out, ((x.index, lambda g: g * kernels.gelu_grad(xv)),))

    def log(self, x):
        tape = _tape_of(x)
        xv = value_of(x)
        out = np.log(xv)
        if tape is None:
            return out
        return tape._emit(out, ((x.index, lambda g: g / xv),))

    # -- structure -----------------------------------------------------

    def reshape(self, x, shape):
        tape = _tape_of(x)
        xv = value_of(x)
        out = xv.reshape(shape)
        if tape is None:
            return out
        return tape._emit(out, ((x.index, lambda g: g.reshape(xv.shape)),))

    def transpose(self, x, axes):
        tape = _tape_of(x)
        xv = value_of(x)
        out = np.ascontiguousarray(xv.transpose(axes))
        if tape is None:
            return out
        inv = tuple(np.argsort(axes))
        return tape._emit(out, ((x.index, lambda g: g.transpose(inv)),))

    def concat_channels(self, a, b):
        tape = _tape_of(a, b)
        av, bv = value_of(a), value_of(b)
        out = kernels.concat_channels(av, bv)
        if tape is None:
            return out
        ca = av.shape[-1]
        edges = []
        if isinstance(a, Var):
            edges.append((a.index, lambda g: g[..., :ca]))
        if isinstance(b, Var):
            edges.append((b.index, lambda g: g[..., ca:]))
        return tape._emit(out, tuple(edges))

    def pixel_shuffle(self, x, r: int):
        tape = _tape_of(x)
        out = kernels.pixel_shuffle(value_of(x), r)
        if tape is None:
            return out
        # index permutation: the pullback is the inverse rearrangement
        return tape._emit(out, ((x.index, lambda g: kernels.pixel_unshuffle(g, r)),))

    def pad_hw(self, x, ph: int, pw: int):
        tape = _tape_of(x)
        xv = value_of(x)
        out = kernels.pad_hw(xv, ph, pw)
        if tape is None:
            return out
        h, w = xv.shape[0], xv.shape[1]
        return tape._emit(out, ((x.index, lambda g: g[:h, :w, :]),))

    def crop_hw(self, x, h: int, w: int):
        tape = _tape_of(x)
        xv = value_of(x)
        out = kernels.crop_hw(xv, h, w)
        if tape is None:
            return out
        ph, pw = xv.shape[0] - h, xv.shape[1] - w
        return tape._emit(
            out, ((x.index, lambda g: np.pad(g, ((0, ph), (0, pw), (0, 0)))),)
        )

    def roll_hw(self, x, sh: int, sw: int):
        tape = _tape_of(x)
        out = kernels.roll_hw(value_of(x), sh, sw)
        if tape is None:
            return out
        return tape._emit(out, ((x.index, lambda g: kernels.roll_hw(g, -sh, -sw)),))

    def gather_rows(self, table, index):
        """table[index]: rows of a 2D table selected by an integer array."""
        tape = _tape_of(table)
        tv = value_of(table)
        idx = np.asarray(index)
        out = tv[idx]
        if tape is None:
            return out

        def pull(g):
            acc = np.zeros_like(tv)
            np.add.at(acc, idx.reshape(-1), g.reshape(-1, tv.shape[-1]))
            return acc

        return tape._emit(out, ((table.index, pull),))

    # -- convolutions / resampling --------------------------------------

    def conv1x1(self, x, w, b):
        tape = _tape_of(x, w, b)
        xv, wv, bv = value_of(x), value_of(w), value_of(b)
        out = kernels.conv1x1(xv, wv, bv)
        if tape is None:
            return out
        edges = []
        if isinstance(x, Var):
            edges.append((x.index, lambda g: g @ wv.T))
        if isinstance(w, Var):
            edges.append(
                (w.index, lambda g: xv.reshape(-1, xv.shape[-1]).T @ g.reshape(-1, wv.shape[1]))
            )
        if isinstance(b, Var):
            edges.append((b.index, lambda g: g.reshape(-1, bv.shape[0]).sum(axis=0)))
        return tape._emit(out, tuple(edges))

    def depthwise_conv_down2(self, x, w, b):
        tape = _tape_of(x, w, b)
        xv, wv, bv = value_of(x), value_of(w), value_of(b)
        out = kernels.depthwise_conv_down2(xv, wv, bv)
        if tape is None:
            return out
        h, wd, c = xv.shape
        blocks = xv.reshape(h // 2, 2, wd // 2, 2, c)
        edges = []
        if isinstance(x, Var):

            def pull_x(g):
                dblocks = np.einsum("hwc,ijc->hiwjc", g, wv)
                return dblocks.reshape(h, wd, c)

            edges.append((x.index, pull_x))
        if isinstance(w, Var):
            edges.append((w.index, lambda g: np.einsum("hiwjc,hwc->ijc", blocks, g)))
        if isinstance(b, Var):
            edges.append((b.index, lambda g: g.reshape(-1, c).sum(axis=0)))
        return tape._emit(out, tuple(edges))

    def transposed_conv2x2(self, x, w, b):
        tape = _tape_of(x, w, b)
        xv, wv, bv = value_of(x), value_of(w), value_of(b)
        out = kernels.transposed_conv2x2(xv, wv, bv)
        if tape is None:
            return out
        h, wd, cin = xv.shape
        cout = wv.shape[3]
        edges = []
        if isinstance(x, Var):

            def pull_x(g):
                gb = g.reshape(h, 2, wd, 2, cout)
                return np.einsum("hiwjo,ijco->hwc", gb, wv)

            edges.append((x.index, pull_x))
        if isinstance(w, Var):

            def pull_w(g):
                gb = g.reshape(h, 2, wd, 2, cout)
                return np.einsum("hwc,hiwjo->ijco", xv, gb)

            edges.append((w.index, pull_w))
        if isinstance(b, Var):
            edges.append((b.index, lambda g: g.reshape(-1, cout).sum(axis=0)))
        return tape._emit(out, tuple(edges))

    def upsample_bilinear2x(self, x):
        tape = _tape_of(x)
        xv = value_of(x)
        out = kernels.upsample_bilinear2x(xv)
        if tape is None:
            return out
        h, w = xv.shape[0], xv.shape[1]
        return tape._emit(
            out, ((x.index, lambda g: kernels.upsample_bilinear2x_adjoint(g, h, w)),)
        )

    # -- reductions ------------------------------------------------------

    def mean_all(self, x):
        tape = _tape_of(x)
        xv = value_of(x)
        out = np.asarray(np.mean(xv))
        if tape is None:
            return out
        n = xv.size
        return tape._emit(
            out, ((x.index, lambda g: np.full(xv.shape, g / n, dtype=xv.dtype)),)
        )

    def sum_all(self, x):
        tape = _tape_of(x)
        xv = value_of(x)
        out = np.asarray(np.sum(xv))
        if tape is None:
            return out
        return tape._emit(
            out, ((x.index, lambda g: np.full(xv.shape, g, dtype=xv.dtype)),)
        )


ops = _Ops()


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class GradCheckReport:
    """Outcome of comparing tape gradients against central differences."""

    per_param: dict  # name -> (max_abs_diff, max_rel_err, n_checked)
    max_rel_err: float
    eps: float

    def passed(self, tol: float) -> bool:
        return self.max_rel_err < tol

    def __str__(self):
        lines = [f"gradient check (eps={self.eps:g})"]
        for name, (abs_d, rel_e, n) in sorted(self.per_param.items()):
            lines.append(
                f"  {name:<40s} n={n:<6d} max_abs={abs_d:.3e} max_rel={rel_e:.3e}"
            )
        lines.append(f"  overall max relative error: {self.max_rel_err:.3e}")
        return "\n".join(lines)


def finite_difference_check(fn, params, eps: float = 1e-4, max_coords=None, seed: int = 0):
    """Compare reverse-mode gradients of ``fn`` against central differences.

    ``fn`` maps a dict of arrays (or Vars) to a scalar; it must run the same
    computation for both input kinds. ``params`` is a dict name -> ndarray;
    values are promoted to float64 before differencing. When ``max_coords``
    is given, parameters with more elements are probed at that many
    deterministically sampled coordinates instead of all of them.

    The relative error of a coordinate is |ad - fd| / max(1, |fd|); the
    report carries the per-parameter and overall maxima.
    """
    params64 = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    tape = Tape()
    vars64 = {k: tape.var(v) for k, v in params64.items()}
    loss = fn(vars64)
    if not isinstance(loss, Var):
        raise GraphError("finite_difference_check: fn did not build on the tape")
    grads = tape.backward(loss)

    rng = Rng(seed).spawn("fd-coords")
    per_param = {}
    overall = 0.0
    for name in sorted(params64):
        base = params64[name]
        g = grads[vars64[name].index]
        if g is None:
            g = np.zeros_like(base)
        flat = base.reshape(-1)
        n = flat.size
        if max_coords is not None and n > max_coords:
            coords = rng.sample_indices(n, max_coords)
        else:
            coords = np.arange(n)
        gflat = np.asarray(g, dtype=np.float64).reshape(-1)
        max_abs = 0.0
        max_rel = 0.0
        work = {k: v.copy() for k, v in params64.items()}
        wflat = work[name].reshape(-1)
        for i in coords:
            orig = wflat[i]
            wflat[i] = orig + eps
            f_plus = float(value_of(fn(work)))
            wflat[i] = orig - eps
            f_minus = float(value_of(fn(work)))
            wflat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * eps)
            ad = float(gflat[i])
            diff = abs(ad - fd)
            max_abs = max(max_abs, diff)
            max_rel = max(max_rel, diff / max(1.0, abs(fd)))
        per_param[name] = (max_abs, max_rel, len(coords))
        overall = max(overall, max_rel)
    return GradCheckReport(per_param=per_param, max_rel_err=overall, eps=eps)
