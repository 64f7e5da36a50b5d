"""Dense tensors with reverse-mode differentiation.

Small by design: exactly the operations the grouped head and the tiny
transformer need. All reductions run in ascending index order through the
active backend, so a run is bit-reproducible and `matmul` agrees bit-for-bit
with a naive triple loop in the same precision.

Gradients accumulate into ``.grad`` across backward calls until
:func:`zero_grads` resets them. ``backward`` frees the graph as it walks it;
a second backward through the same loss raises :class:`ContractError`.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import ContractError, IndexRangeError, NumericError, ShapeError
from . import runtime

_finite_checks = False


def set_finite_checks(enabled: bool) -> None:
    """Verify every op output is finite (slow; meant for tests)."""
    global _finite_checks
    _finite_checks = enabled


def _notify_alloc(arr: np.ndarray) -> None:
    hook = runtime.alloc_hook()
    if hook is not None and arr.base is None:
        hook(arr)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "_consumed", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=runtime.active_dtype())
        if arr.base is not None or not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None
        self._consumed = False
        _notify_alloc(arr)

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def _wrap(data: np.ndarray, parents: tuple, vjp, op: str) -> "Tensor":
        if not isinstance(data, np.ndarray):
            data = np.asarray(data)  # ufuncs collapse 0-d arrays to scalars
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out._consumed = False
        if runtime.grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._vjp = vjp
        else:
            out.requires_grad = False
            out._parents = ()
            out._vjp = None
        _notify_alloc(data)
        if _finite_checks and not np.all(np.isfinite(data)):
            raise NumericError(f"non-finite values produced by {op}")
        return out

    # -- conveniences ----------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        t = Tensor.__new__(Tensor)
        t.data = self.data
        t.grad = None
        t.requires_grad = False
        t._parents = ()
        t._vjp = None
        t._consumed = False
        return t

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=runtime.active_dtype()), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape, dtype=runtime.active_dtype()), requires_grad=requires_grad)


def zero_grads(params) -> None:
    """Explicit gradient reset; gradients otherwise accumulate."""
    for p in params:
        p.grad = None


# -- core ops -----------------------------------------------------------------


def _check_same_dtype(ad: np.ndarray, bd: np.ndarray, op: str) -> None:
    if ad.dtype != bd.dtype:
        raise ContractError(
            f"{op}: mixed precisions {ad.dtype}/{bd.dtype}; precision is a run-level switch"
        )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors or two stacked 3-D tensors."""
    ad, bd = a.data, b.data
    _check_same_dtype(ad, bd, "matmul")
    if ad.ndim == 2 and bd.ndim == 2:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeError(f"matmul inner extents differ: {ad.shape} x {bd.shape}")
        mm, mm_tn = runtime.backend.matmul2, runtime.backend.matmul2_tn
    elif ad.ndim == 3 and bd.ndim == 3:
        if ad.shape[0] != bd.shape[0] or ad.shape[2] != bd.shape[1]:
            raise ShapeError(f"matmul batch shapes differ: {ad.shape} x {bd.shape}")
        mm, mm_tn = runtime.backend.matmul3, runtime.backend.matmul3_tn
    else:
        raise ShapeError(f"matmul needs 2d x 2d or 3d x 3d, got {ad.shape} x {bd.shape}")
    out = mm(ad, bd)
    need_a, need_b = a.requires_grad, b.requires_grad

    def vjp(g):
        swap = (0, 2, 1) if g.ndim == 3 else (1, 0)
        ga = mm(g, np.ascontiguousarray(bd.transpose(swap))) if need_a else None
        gb = mm_tn(ad, g) if need_b else None
        return ga, gb

    return Tensor._wrap(out, (a, b), vjp, "matmul")


def _binary_shapes(ad: np.ndarray, bd: np.ndarray, op: str):
    """Equal shapes, or the smaller operand repeated over leading dims."""
    _check_same_dtype(ad, bd, op)
    if ad.shape == bd.shape:
        return None  # no broadcast
    if bd.ndim < ad.ndim and ad.shape[ad.ndim - bd.ndim :] == bd.shape:
        return "b"
    if ad.ndim < bd.ndim and bd.shape[bd.ndim - ad.ndim :] == ad.shape:
        return "a"
    raise ShapeError(f"{op}: shapes {ad.shape} and {bd.shape} are not leading-broadcastable")


def _reduce_leading(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g over its leading axes (ascending) down to `shape`."""
    size = int(np.prod(shape, dtype=np.int64)) if shape else 1
    flat = np.ascontiguousarray(g.reshape(-1, size))
    return runtime.backend.colsum(flat).reshape(shape)


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = a.data.dtype.type(b)
        out = a.data + c

        def vjp_s(g):
            return (g,)

        return Tensor._wrap(out, (a,), vjp_s, "add")
    bc = _binary_shapes(a.data, b.data, "add")
    out = a.data + b.data
    need_a, need_b = a.requires_grad, b.requires_grad
    a_shape, b_shape = a.data.shape, b.data.shape

    def vjp(g):
        ga = gb = None
        if need_a:
            ga = _reduce_leading(g, a_shape) if bc == "a" else g
        if need_b:
            gb = _reduce_leading(g, b_shape) if bc == "b" else g
        return ga, gb

    return Tensor._wrap(out, (a, b), vjp, "add")


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = a.data.dtype.type(b)
        out = a.data * c

        def vjp_s(g):
            return (g * c,)

        return Tensor._wrap(out, (a,), vjp_s, "mul")
    bc = _binary_shapes(a.data, b.data, "mul")
    out = a.data * b.data
    ad, bd = a.data, b.data
    need_a, need_b = a.requires_grad, b.requires_grad

    def vjp(g):
        ga = gb = None
        if need_a:
            ga = _reduce_leading(g * bd, ad.shape) if bc == "a" else g * bd
        if need_b:
            gb = _reduce_leading(g * ad, bd.shape) if bc == "b" else g * ad
        return ga, gb

    return Tensor._wrap(out, (a, b), vjp, "mul")


def concat(parts, axis: int = -1) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat of zero parts")
    shapes = [p.data.shape for p in parts]
    ref = list(shapes[0])
    ax = axis if axis >= 0 else len(ref) + axis
    for s in shapes[1:]:
        if len(s) != len(ref) or any(s[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError(f"concat parts disagree off-axis: {shapes}")
    out = np.concatenate([p.data for p in parts], axis=ax)
    widths = [s[ax] for s in shapes]
    needs = [p.requires_grad for p in parts]

    def vjp(g):
        grads, off = [], 0
        index = [slice(None)] * g.ndim
        for w, need in zip(widths, needs):
            index[ax] = slice(off, off + w)
            grads.append(np.ascontiguousarray(g[tuple(index)]) if need else None)
            off += w
        return tuple(grads)

    return Tensor._wrap(out, tuple(parts), vjp, "concat")


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    ax = axis if axis >= 0 else x.data.ndim + axis
    if start < 0 or start + length > x.data.shape[ax]:
        raise ShapeError(f"narrow [{start}:{start + length}] exceeds extent {x.data.shape[ax]}")
    index = [slice(None)] * x.data.ndim
    index[ax] = slice(start, start + length)
    out = np.ascontiguousarray(x.data[tuple(index)])
    shape = x.data.shape

    def vjp(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[tuple(index)] = g
        return (full,)

    return Tensor._wrap(out, (x,), vjp, "narrow")


def reshape(x: Tensor, shape) -> Tensor:
    orig = x.data.shape
    out = x.data.reshape(shape)

    def vjp(g):
        return (g.reshape(orig),)

    return Tensor._wrap(out, (x,), vjp, "reshape")


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    out = np.ascontiguousarray(x.data.transpose(axes))
    inverse = tuple(np.argsort(axes))

    def vjp(g):
        return (np.ascontiguousarray(g.transpose(inverse)),)

    return Tensor._wrap(out, (x,), vjp, "transpose")


def gather_rows(table: Tensor, idx) -> Tensor:
    """table[v, d] indexed by an integer array -> [*idx.shape, d].

    Backward scatter-adds into the table rows in ascending flat order of
    `idx`, so duplicate indices accumulate deterministically.
    """
    idx = np.asarray(idx, dtype=np.int64)
    v = table.data.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= v):
        bad = idx.flat[int(np.argmax((idx < 0) | (idx >= v)))]
        raise IndexRangeError(f"row index {bad} outside [0, {v})")
    out = table.data[idx.reshape(-1)]
    d = table.data.shape[1]
    tshape = table.data.shape

    def vjp(g):
        gt = np.zeros(tshape, dtype=g.dtype)
        runtime.backend.scatter_add_rows(gt, idx.reshape(-1), g.reshape(-1, d))
        return (gt,)

    return Tensor._wrap(out.reshape(idx.shape + (d,)), (table,), vjp, "gather_rows")


def _rows(x: np.ndarray) -> np.ndarray:
    return x.reshape(-1, x.shape[-1])


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Stable softmax along `axis` (max-subtracted, ascending-order sums)."""
    ax = axis if axis >= 0 else x.data.ndim + axis
    if ax >= x.data.ndim or x.data.shape[ax] == 0:
        raise ShapeError(f"softmax axis {axis} is empty or invalid for shape {x.data.shape}")
    moved = ax != x.data.ndim - 1
    xd = np.ascontiguousarray(np.moveaxis(x.data, ax, -1)) if moved else x.data
    x2 = _rows(xd)
    m = x2.max(axis=1, keepdims=True)
    e = np.subtract(x2, m)
    np.exp(e, out=e)
    e /= runtime.backend.rowsum(e)[:, None]
    y2 = e
    y = y2.reshape(xd.shape)
    out = np.ascontiguousarray(np.moveaxis(y, -1, ax)) if moved else y

    def vjp(g):
        g2 = _rows(np.ascontiguousarray(np.moveaxis(g, ax, -1)) if moved else g)
        prod = g2 * y2
        s = runtime.backend.rowsum(prod)[:, None]
        dx = np.subtract(g2, s, out=prod)
        dx *= y2
        dx = dx.reshape(xd.shape)
        return (np.ascontiguousarray(np.moveaxis(dx, -1, ax)) if moved else dx,)

    return Tensor._wrap(out, (x,), vjp, "softmax")


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-softmax of `targets` over rows of `logits[r, n]`."""
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy expects [rows, classes], got {logits.data.shape}")
    t = np.asarray(targets, dtype=np.int64).reshape(-1)
    r, n = logits.data.shape
    if t.shape[0] != r:
        raise ShapeError(f"{t.shape[0]} targets for {r} rows")
    bad = (t < 0) | (t >= n)
    if bad.any():
        row = int(np.argmax(bad))
        raise IndexRangeError(f"target {t[row]} out of range [0, {n}) at row {row}")
    x2 = logits.data
    m = x2.max(axis=1, keepdims=True)
    p = np.subtract(x2, m)
    np.exp(p, out=p)
    denom = runtime.backend.rowsum(p)
    p /= denom[:, None]
    rows = np.arange(r)
    losses = np.log(denom) - (x2[rows, t] - m[:, 0])
    total = runtime.backend.vecsum(np.ascontiguousarray(losses))
    out = np.asarray(total / x2.dtype.type(r), dtype=x2.dtype)

    def vjp(g):
        # p is private to this node and backward runs once, so reuse it
        scale = np.asarray(g, dtype=p.dtype).reshape(()) / p.dtype.type(r)
        np.multiply(p, scale, out=p)
        p[rows, t] -= scale
        return (p,)

    return Tensor._wrap(out, (logits,), vjp, "cross_entropy")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale and shift."""
    n = x.data.shape[-1]
    if gain.data.shape != (n,) or bias.data.shape != (n,):
        raise ShapeError(f"layer_norm gain/bias must be [{n}]")
    x2 = _rows(x.data)
    dt = x2.dtype.type
    mu = (runtime.backend.rowsum(x2) / dt(n))[:, None]
    xc = x2 - mu
    var = (runtime.backend.rowsum(np.ascontiguousarray(xc * xc)) / dt(n))[:, None]
    inv = 1.0 / np.sqrt(var + dt(eps))
    xhat = xc * inv
    out = (xhat * gain.data + bias.data).reshape(x.data.shape)
    need = (x.requires_grad, gain.requires_grad, bias.requires_grad)
    gd = gain.data

    def vjp(g):
        g2 = _rows(g)
        dx = dgain = dbias = None
        if need[0]:
            dxhat = g2 * gd
            m1 = (runtime.backend.rowsum(np.ascontiguousarray(dxhat)) / dt(n))[:, None]
            m2 = (runtime.backend.rowsum(np.ascontiguousarray(dxhat * xhat)) / dt(n))[:, None]
            dx = (inv * (dxhat - m1 - xhat * m2)).reshape(g.shape)
        if need[1]:
            dgain = runtime.backend.colsum(np.ascontiguousarray(g2 * xhat))
        if need[2]:
            dbias = runtime.backend.colsum(g2)
        return dx, dgain, dbias

    return Tensor._wrap(out, (x, gain, bias), vjp, "layer_norm")


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    xd = x.data
    dt = xd.dtype.type
    c0, c1 = dt(_GELU_C), dt(0.044715)
    u = xd * xd
    u *= c1
    u *= xd
    u += xd
    u *= c0
    t = np.tanh(u, out=u)
    out = t + dt(1.0)
    out *= xd
    out *= dt(0.5)

    def vjp(g):
        du = xd * xd
        du *= dt(3.0) * c1
        du += dt(1.0)
        du *= c0  # d tanh-arg / dx
        dy = t * t
        np.subtract(dt(1.0), dy, out=dy)
        dy *= du
        dy *= xd
        dy += t
        dy += dt(1.0)
        dy *= dt(0.5)
        dy *= g
        return (dy,)

    return Tensor._wrap(out, (x,), vjp, "gelu")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = np.where(mask, x.data, x.data.dtype.type(0))

    def vjp(g):
        return (np.where(mask, g, g.dtype.type(0)),)

    return Tensor._wrap(out, (x,), vjp, "relu")


def sum_all(x: Tensor) -> Tensor:
    flat = np.ascontiguousarray(x.data.reshape(-1))
    out = np.asarray(runtime.backend.vecsum(flat), dtype=x.data.dtype)
    shape = x.data.shape

    def vjp(g):
        return (np.full(shape, np.asarray(g).reshape(()), dtype=x.data.dtype),)

    return Tensor._wrap(out, (x,), vjp, "sum_all")


# -- reverse pass ---------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every tracked tensor the loss depends on.

    Frees intermediate buffers as it goes, so each graph supports exactly
    one backward pass. Leaf gradients accumulate across calls.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if loss._consumed:
        raise ContractError("backward was already called through this graph")
    if not loss.requires_grad:
        raise ContractError("loss is not connected to any tracked tensor")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    loss.grad = np.ones(loss.data.shape, dtype=loss.data.dtype)
    for node in reversed(topo):
        if node._vjp is None:
            continue
        grads = node._vjp(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            parent.grad = g if parent.grad is None else parent.grad + g
        # free this intermediate: saved activations and its grad buffer
        node._vjp = None
        node._parents = ()
        node.grad = None
    loss._consumed = True
