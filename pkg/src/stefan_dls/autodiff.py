"""Minimal reverse-mode tape with array-valued nodes.

Every node carries a float64 numpy array (scalars are 0-d arrays).  A single
reverse sweep from any recorded scalar-or-array output yields the gradient
with respect to the flat parameter vector held by a :class:`ParamStore`.
Parameters enter the tape as leaf views; everything else is either a
constant or the result of one of the supported op kinds.

The op set is deliberately small: elementwise arithmetic, tanh/exp/log/sqrt,
a smoothed absolute value, clamps against constants, reductions, affine
layers, and a few fused time-axis ops (exclusive cumulative product,
stopped-value accumulation) that keep the training tape compact.
"""

from __future__ import annotations

import numpy as np


class AutodiffError(ValueError):
    """Raised on non-finite values or malformed tape usage."""


class ParamStore:
    """Flat float64 parameter vector with named, shaped views."""

    def __init__(self, layout):
        # layout: sequence of (name, shape) pairs; order fixes the flat layout
        self.layout = [(name, tuple(shape)) for name, shape in layout]
        self.slices = {}
        offset = 0
        for name, shape in self.layout:
            size = int(np.prod(shape)) if shape else 1
            self.slices[name] = (offset, offset + size, shape)
            offset += size
        self.size = offset
        self.flat = np.zeros(self.size, dtype=np.float64)

    def get(self, name):
        lo, hi, shape = self.slices[name]
        return self.flat[lo:hi].reshape(shape)

    def set(self, name, value):
        lo, hi, shape = self.slices[name]
        value = np.asarray(value, dtype=np.float64)
        if value.shape != shape:
            raise AutodiffError(f"shape mismatch for parameter {name!r}: "
                                f"{value.shape} != {shape}")
        self.flat[lo:hi] = value.ravel()

    def copy(self):
        other = ParamStore(self.layout)
        other.flat[:] = self.flat
        return other


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class TapeValue:
    """Handle to one tape node."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape, idx):
        self.tape = tape
        self.idx = idx

    @property
    def value(self):
        return self.tape._values[self.idx]

    @property
    def shape(self):
        return self.tape._values[self.idx].shape


class Tape:
    """Wengert list of array ops over a ParamStore."""

    def __init__(self, params: ParamStore):
        self.params = params
        self.clear()

    def clear(self):
        self._kinds = []
        self._values = []
        self._parents = []
        self._extras = []

    def __len__(self):
        return len(self._kinds)

    # ---- node constructors -------------------------------------------------

    def _push(self, kind, value, parents, extras=None):
        value = np.asarray(value, dtype=np.float64)
        self._kinds.append(kind)
        self._values.append(value)
        self._parents.append(parents)
        self._extras.append(extras)
        return TapeValue(self, len(self._kinds) - 1)

    def const(self, value):
        return self._push("const", value, ())

    def param(self, name):
        if name not in self.params.slices:
            raise AutodiffError(f"unknown parameter {name!r}")
        return self._push("param", self.params.get(name), (), name)

    def record(self, kind, inputs, **extras):
        """Generic entry point: record one op of the given kind."""
        method = getattr(self, kind, None)
        if method is None or kind.startswith("_"):
            raise AutodiffError(f"unsupported op kind {kind!r}")
        return method(*inputs, **extras)

    # ---- elementwise binary ops ---------------------------------------------

    def add(self, a, b):
        return self._push("add", a.value + b.value, (a.idx, b.idx))

    def sub(self, a, b):
        return self._push("sub", a.value - b.value, (a.idx, b.idx))

    def mul(self, a, b):
        return self._push("mul", a.value * b.value, (a.idx, b.idx))

    def div(self, a, b):
        out = a.value / np.where(b.value == 0.0, np.nan, b.value) \
            if np.any(b.value == 0.0) else a.value / b.value
        if not np.all(np.isfinite(out)):
            raise AutodiffError("non-finite value in div node "
                                f"(node {len(self._kinds)})")
        return self._push("div", out, (a.idx, b.idx))

    # ---- elementwise unary ops ------------------------------------------------

    def neg(self, a):
        return self._push("neg", -a.value, (a.idx,))

    def tanh(self, a):
        return self._push("tanh", np.tanh(a.value), (a.idx,))

    def exp(self, a):
        return self._push("exp", np.exp(a.value), (a.idx,))

    def log(self, a):
        v = a.value
        if np.any(v <= 0.0):
            raise AutodiffError("non-finite value in log node "
                                f"(node {len(self._kinds)})")
        return self._push("log", np.log(v), (a.idx,))

    def sqrt(self, a):
        v = a.value
        if np.any(v < 0.0):
            raise AutodiffError("non-finite value in sqrt node "
                                f"(node {len(self._kinds)})")
        return self._push("sqrt", np.sqrt(v), (a.idx,))

    def abs_smooth(self, a, kappa=1e-12):
        return self._push("abs_smooth", np.sqrt(a.value * a.value + kappa * kappa),
                          (a.idx,), kappa)

    def max_const(self, a, c):
        return self._push("max_const", np.maximum(a.value, c), (a.idx,), c)

    def min_const(self, a, c):
        return self._push("min_const", np.minimum(a.value, c), (a.idx,), c)

    # ---- reductions / contractions ---------------------------------------------

    def sum(self, a, axis=None):
        return self._push("sum", np.sum(a.value, axis=axis), (a.idx,), axis)

    def dot(self, a, b):
        return self._push("dot", np.dot(a.value.ravel(), b.value.ravel()),
                          (a.idx, b.idx))

    def affine(self, x, w, b=None):
        """x @ w.T (+ b): x is (P, din), w is (dout, din), b is (dout,)."""
        out = x.value @ w.value.T
        parents = (x.idx, w.idx)
        if b is not None:
            out = out + b.value
            parents = (x.idx, w.idx, b.idx)
        return self._push("affine", out, parents)

    def matmul(self, a, b):
        return self._push("matmul", a.value @ b.value, (a.idx, b.idx))

    # ---- structural ops -----------------------------------------------------

    def reshape(self, a, shape):
        return self._push("reshape", a.value.reshape(shape), (a.idx,), a.value.shape)

    def slice_cols(self, a, start, stop):
        return self._push("slice_cols", a.value[:, start:stop], (a.idx,),
                          (start, stop))

    # ---- fused time-axis ops --------------------------------------------------

    def exclusive_cumprod(self, a):
        """out[..., n] = prod_{l < n} a[..., l]  (out[..., 0] = 1)."""
        v = a.value
        out = np.ones_like(v)
        np.cumprod(v[..., :-1], axis=-1, out=out[..., 1:])
        return self._push("exclusive_cumprod", out, (a.idx,))

    def time_diff(self, a):
        """Forward differences along the last axis."""
        return self._push("time_diff", np.diff(a.value, axis=-1), (a.idx,))

    def stopped_values(self, q, psi):
        """Cumulative stopped-value accumulation.

        q: node (J, N+1) of per-step stopping masses; psi: constant array
        (J, N+1, K).  Output (N+1, K): out[n, k] = sum_{l<=n} sum_j q[j,l]*psi[j,l,k].
        """
        psi = np.asarray(psi, dtype=np.float64)
        per_step = np.einsum("jl,jlk->lk", q.value, psi)
        out = np.cumsum(per_step, axis=0)
        return self._push("stopped_values", out, (q.idx,), psi)

    def project(self, q, b):
        """out[n, k] = sum_j q[j, n] * b[j, k] with constant b."""
        b = np.asarray(b, dtype=np.float64)
        return self._push("project", np.einsum("jn,jk->nk", q.value, b),
                          (q.idx,), b)

    # ---- reverse sweep --------------------------------------------

    def backward(self, output: TapeValue, check_finite=True):
        """Gradient of sum(output) w.r.t. the flat parameter vector."""
        if output.tape is not self:
            raise AutodiffError("output belongs to a different tape")
        n = len(self._kinds)
        adjoints = [None] * n
        adjoints[output.idx] = np.ones_like(self._values[output.idx])
        grad = np.zeros(self.params.size, dtype=np.float64)

        def acc(idx, g):
            g = _unbroadcast(np.asarray(g, dtype=np.float64),
                             self._values[idx].shape)
            if adjoints[idx] is None:
                adjoints[idx] = g
            else:
                adjoints[idx] = adjoints[idx] + g

        for i in range(output.idx, -1, -1):
            g = adjoints[i]
            if g is None:
                continue
            if check_finite and not np.all(np.isfinite(g)):
                raise AutodiffError(f"non-finite adjoint at node {i} "
                                    f"(kind {self._kinds[i]!r})")
            kind = self._kinds[i]
            par = self._parents[i]
            ex = self._extras[i]
            val = self._values[i]
            if kind == "const":
                continue
            if kind == "param":
                lo, hi, _ = self.params.slices[ex]
                grad[lo:hi] += g.ravel()
            elif kind == "add":
                acc(par[0], g)
                acc(par[1], g)
            elif kind == "sub":
                acc(par[0], g)
                acc(par[1], -g)
            elif kind == "mul":
                acc(par[0], g * self._values[par[1]])
                acc(par[1], g * self._values[par[0]])
            elif kind == "div":
                b = self._values[par[1]]
                acc(par[0], g / b)
                acc(par[1], -g * val / b)
            elif kind == "neg":
                acc(par[0], -g)
            elif kind == "tanh":
                acc(par[0], g * (1.0 - val * val))
            elif kind == "exp":
                acc(par[0], g * val)
            elif kind == "log":
                acc(par[0], g / self._values[par[0]])
            elif kind == "sqrt":
                acc(par[0], g * 0.5 / val)
            elif kind == "abs_smooth":
                acc(par[0], g * self._values[par[0]] / val)
            elif kind == "max_const":
                acc(par[0], g * (self._values[par[0]] > ex))
            elif kind == "min_const":
                acc(par[0], g * (self._values[par[0]] < ex))
            elif kind == "sum":
                src = self._values[par[0]]
                if ex is None:
                    acc(par[0], np.broadcast_to(g, src.shape))
                else:
                    acc(par[0], np.broadcast_to(np.expand_dims(g, ex), src.shape))
            elif kind == "dot":
                a, b = self._values[par[0]], self._values[par[1]]
                acc(par[0], (g * b.ravel()).reshape(a.shape))
                acc(par[1], (g * a.ravel()).reshape(b.shape))
            elif kind == "affine":
                x, w = self._values[par[0]], self._values[par[1]]
                acc(par[0], g @ w)
                acc(par[1], g.T @ x)
                if len(par) == 3:
                    acc(par[2], g.sum(axis=0))
            elif kind == "matmul":
                a, b = self._values[par[0]], self._values[par[1]]
                acc(par[0], g @ b.T)
                acc(par[1], a.T @ g)
            elif kind == "reshape":
                acc(par[0], g.reshape(ex))
            elif kind == "slice_cols":
                src = self._values[par[0]]
                full = np.zeros_like(src)
                full[:, ex[0]:ex[1]] = g
                acc(par[0], full)
            elif kind == "exclusive_cumprod":
                # dL/dx_l = P_l * T_l with T_l = g_{l+1} + x_{l+1} T_{l+1}
                x = self._values[par[0]]
                t = np.zeros_like(x)
                nline = x.shape[-1]
                for l in range(nline - 2, -1, -1):
                    t[..., l] = g[..., l + 1] + x[..., l + 1] * t[..., l + 1]
                acc(par[0], val * t)
            elif kind == "time_diff":
                src = self._values[par[0]]
                full = np.zeros_like(src)
                full[..., 1:] += g
                full[..., :-1] -= g
                acc(par[0], full)
            elif kind == "stopped_values":
                rev = np.cumsum(g[::-1], axis=0)[::-1]
                acc(par[0], np.einsum("jlk,lk->jl", ex, rev))
            elif kind == "project":
                acc(par[0], np.einsum("nk,jk->jn", g, ex))
            else:  # pragma: no cover
                raise AutodiffError(f"no backward rule for kind {kind!r}")
            adjoints[i] = None  # free memory as we go
        if check_finite and not np.all(np.isfinite(grad)):
            raise AutodiffError("non-finite parameter gradient")
        return grad
