"""Minimal reverse-mode autodiff over numpy arrays.

Backward rules are themselves written with tape ops, so gradients can be
differentiated again (`create_graph=True`); the discriminator gradient
penalty needs that second derivative. Scope is exactly what the losses in
this package use: dense layers, pointwise nonlinearities, reductions,
clipping and slicing. Everything is float64.
"""

from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = [True]


@contextlib.contextmanager
def no_grad():
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


def _recording() -> bool:
    return _GRAD_ENABLED[-1]


class Tensor:
    __slots__ = ("data", "requires_grad", "parents", "backward_fn")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- operators ---------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return take(self, idx)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn) -> Tensor:
    req = _recording() and any(p.requires_grad for p in parents)
    if req:
        return Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn)
    return Tensor(data)


def _sum_to(g: Tensor, shape) -> Tensor:
    """Reduce a broadcast gradient back to the parent shape."""
    if g.data.shape == tuple(shape):
        return g
    gdata_ndim = len(g.data.shape)
    extra = gdata_ndim - len(shape)
    out = g
    for _ in range(extra):
        out = tsum(out, axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and out.data.shape[ax] != 1:
            out = tsum(out, axis=ax, keepdims=True)
    return reshape(out, shape)


# -- primitive ops ---------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def bw(g):
        return _sum_to(g, a.data.shape), _sum_to(g, b.data.shape)

    return _make(out, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def bw(g):
        return _sum_to(g, a.data.shape), _sum_to(mul(g, Tensor(-1.0)), b.data.shape)

    return _make(out, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def bw(g):
        return _sum_to(mul(g, b), a.data.shape), _sum_to(mul(g, a), b.data.shape)

    return _make(out, (a, b), bw)


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.data / b.data

    def bw(g):
        ga = div(g, b)
        gb = mul(mul(g, Tensor(-1.0)), div(a, mul(b, b)))
        return _sum_to(ga, a.data.shape), _sum_to(gb, b.data.shape)

    return _make(out, (a, b), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data @ b.data

    def bw(g):
        return matmul(g, transpose(b)), matmul(transpose(a), g)

    return _make(out, (a, b), bw)


def transpose(a: Tensor) -> Tensor:
    out = a.data.T

    def bw(g):
        return (transpose(g),)

    return _make(out, (a,), bw)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = a.data.reshape(shape)
    orig = a.data.shape

    def bw(g):
        return (reshape(g, orig),)

    return _make(out, (a,), bw)


def power(a: Tensor, p: float) -> Tensor:
    out = a.data**p

    def bw(g):
        return (mul(g, mul(Tensor(p), power(a, p - 1.0))),)

    return _make(out, (a,), bw)


def texp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    res = _make(out, (a,), None)
    if res.requires_grad:

        def bw(g):
            return (mul(g, res),)

        res.backward_fn = bw
    return res


def tlog(a: Tensor) -> Tensor:
    out = np.log(a.data)

    def bw(g):
        return (div(g, a),)

    return _make(out, (a,), bw)


def tsqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    res = _make(out, (a,), None)
    if res.requires_grad:

        def bw(g):
            return (div(g, mul(Tensor(2.0), res)),)

        res.backward_fn = bw
    return res


def relu(a: Tensor) -> Tensor:
    mask = (a.data > 0.0).astype(np.float64)
    out = a.data * mask

    def bw(g):
        return (mul(g, Tensor(mask)),)

    return _make(out, (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    res = _make(out, (a,), None)
    if res.requires_grad:

        def bw(g):
            return (mul(g, mul(res, sub(Tensor(1.0), res))),)

        res.backward_fn = bw
    return res


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    mask = ((a.data >= lo) & (a.data <= hi)).astype(np.float64)
    out = np.clip(a.data, lo, hi)

    def bw(g):
        return (mul(g, Tensor(mask)),)

    return _make(out, (a,), bw)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    amask = (a.data <= b.data).astype(np.float64)
    out = np.minimum(a.data, b.data)

    def bw(g):
        return (
            _sum_to(mul(g, Tensor(amask)), a.data.shape),
            _sum_to(mul(g, Tensor(1.0 - amask)), b.data.shape),
        )

    return _make(out, (a, b), bw)


def maximum(a: Tensor, b: Tensor) -> Tensor:
    amask = (a.data >= b.data).astype(np.float64)
    out = np.maximum(a.data, b.data)

    def bw(g):
        return (
            _sum_to(mul(g, Tensor(amask)), a.data.shape),
            _sum_to(mul(g, Tensor(1.0 - amask)), b.data.shape),
        )

    return _make(out, (a, b), bw)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.data.shape

    def bw(g):
        gd = g
        if axis is not None and not keepdims:
            target = list(shape)
            target[axis] = 1
            gd = reshape(g, target)
        return (broadcast_to(gd, shape),)

    return _make(out, (a,), bw)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        denom = a.data.size
    else:
        denom = a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), Tensor(1.0 / denom))


def broadcast_to(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = np.broadcast_to(a.data, shape).copy()
    orig = a.data.shape

    def bw(g):
        return (_sum_to(g, orig),)

    return _make(out, (a,), bw)


def take(a: Tensor, idx) -> Tensor:
    out = a.data[idx]
    shape = a.data.shape

    def bw(g):
        buf = np.zeros(shape)

        def scatter(gr):
            b = buf.copy()
            b[idx] = gr.data
            return b

        return (_make(scatter(g), (g,), lambda gg: (take(gg, idx),)),)

    return _make(out, (a,), bw)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def bw(g):
        grads = []
        start = 0
        for s in sizes:
            sl = [slice(None)] * g.data.ndim
            sl[axis] = slice(start, start + s)
            grads.append(take(g, tuple(sl)))
            start += s
        return tuple(grads)

    return _make(out, tuple(tensors), bw)


# -- gradient driver -------------------------------------------------


def grad_of(
    output: Tensor,
    inputs: list[Tensor],
    create_graph: bool = False,
    grad_output: Tensor | None = None,
) -> list[Tensor]:
    """Gradients of a scalar (or seeded) output w.r.t. `inputs`.

    With `create_graph=True` the returned gradients are themselves
    differentiable tensors.
    """
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(output, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, Tensor] = {}
    if grad_output is None:
        grad_output = Tensor(np.ones_like(output.data))
    grads[id(output)] = grad_output

    ctx = contextlib.nullcontext() if create_graph else no_grad()
    with ctx:
        for node in reversed(topo):
            g = grads.get(id(node))
            if g is None or node.backward_fn is None:
                continue
            parent_grads = node.backward_fn(g)
            for p, pg in zip(node.parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                if id(p) in grads:
                    grads[id(p)] = add(grads[id(p)], pg)
                else:
                    grads[id(p)] = pg

    out = []
    for t in inputs:
        g = grads.get(id(t))
        if g is None:
            g = Tensor(np.zeros_like(t.data))
        out.append(g)
    return out


def np_grads(output: Tensor, inputs: list[Tensor]) -> list[np.ndarray]:
    return [g.data for g in grad_of(output, inputs)]


def finite_difference_grad(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function; the independent
    oracle for every analytic gradient in this package."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_hi = f(x)
        flat[i] = orig - eps
        f_lo = f(x)
        flat[i] = orig
        gflat[i] = (f_hi - f_lo) / (2.0 * eps)
    return g
