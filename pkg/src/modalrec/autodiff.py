"""Reverse-mode automatic differentiation over dense numpy arrays.

A Tensor wraps a row-major float array together with the backward rule of the
operation that produced it. Calling ``backward()`` on a scalar output walks the
graph in reverse topological order and accumulates gradients into every node
with ``requires_grad``. Parameters are leaf tensors with a ``trainable`` flag;
frozen parameters keep a zero gradient no matter what flows through them.

Float32 is the default precision; gradient checks run the same graph in
float64. Everything is deterministic given values and explicit seeds.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

NEG_INF = -1e9  # additive mask value; keeps arrays finite, kills softmax mass
_LN_EPS = 1e-5  # layer-norm variance floor


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple = (), backward=None):
        if isinstance(data, np.generic):
            # 0-d arithmetic yields numpy scalars; keep their float dtype
            data = np.asarray(data)
        elif not isinstance(data, np.ndarray):
            data = np.asarray(data, dtype=np.float32)
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Backpropagate from this scalar through the whole graph."""
        if self.data.ndim != 0:
            raise ValueError("backward() requires a scalar output")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            if node._parents:
                # non-leaf gradients are transient
                node.grad = None

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, neg(other))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


class Parameter(Tensor):
    """Leaf tensor with a trainable flag; frozen parameters never accumulate gradient."""

    __slots__ = ("trainable", "name")

    def __init__(self, data: np.ndarray, trainable: bool = True, name: str = ""):
        super().__init__(np.asarray(data), requires_grad=trainable)
        self.grad = np.zeros_like(self.data)
        self.trainable = trainable
        self.name = name

    def set_trainable(self, flag: bool) -> None:
        self.trainable = flag
        self.requires_grad = flag

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)


def constant(data, dtype=None) -> Tensor:
    arr = np.asarray(data, dtype=dtype if dtype is not None else None)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    return Tensor(arr)


def _check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {what}")
    return arr


def _node(data, parents, backward):
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, parents=tuple(parents) if req else (),
                  backward=backward if req else None)


def _unbroadcast_row(g: np.ndarray, target_shape) -> np.ndarray:
    # reduce a (n, d) gradient onto a (d,) or scalar operand
    if g.shape == tuple(target_shape):
        return g
    if target_shape == ():
        return np.asarray(g.sum(), dtype=g.dtype)
    return g.reshape(-1, target_shape[-1]).sum(axis=0)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; the second operand may be a row vector or a scalar tensor."""
    _check_add_compat(a, b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast_row(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast_row(g, b.shape))

    return _node(out_data, (a, b), backward)


def _check_add_compat(a: Tensor, b: Tensor) -> None:
    sa, sb = a.shape, b.shape
    if sa == sb or sa == () or sb == ():
        return
    # row-wise broadcast: (n, d) with (d,)
    if len(sa) == 2 and sb == (sa[1],):
        return
    if len(sb) == 2 and sa == (sb[1],):
        return
    raise ValueError(f"shape mismatch: {sa} vs {sb}")


def neg(a: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a._accumulate(-g)

    return _node(-a.data, (a,), backward)


def mul(a: Tensor, b) -> Tensor:
    """Elementwise multiply; the second operand may be a row vector, a scalar tensor, or a python number."""
    if not isinstance(b, Tensor):
        scale = float(b)

        def backward_s(g):
            if a.requires_grad:
                a._accumulate(g * scale)

        return _node(a.data * scale, (a,), backward_s)

    _check_add_compat(a, b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast_row(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast_row(g * a.data, b.shape))

    return _node(out_data, (a, b), backward)


def div(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        return mul(a, 1.0 / float(b))
    _check_add_compat(a, b)
    out_data = _check_finite(a.data / b.data, "div")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast_row(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast_row(-g * a.data / (b.data * b.data), b.shape))

    return _node(out_data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _node(out_data, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a._accumulate(g.T)

    return _node(a.data.T.copy(), (a,), backward)


def exp(a: Tensor) -> Tensor:
    out_data = _check_finite(np.exp(a.data), "exp")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out_data)

    return _node(out_data, (a,), backward)


def log(a: Tensor) -> Tensor:
    out_data = _check_finite(np.log(a.data), "log")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return _node(out_data, (a,), backward)


def gelu(a: Tensor) -> Tensor:
    """Exact Gaussian-CDF gelu: x * Phi(x)."""
    x = a.data
    phi = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    out_data = (x * phi).astype(x.dtype)

    def backward(g):
        if a.requires_grad:
            pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
            a._accumulate(g * (phi + x * pdf).astype(x.dtype))

    return _node(out_data, (a,), backward)


def row_softmax(a: Tensor) -> Tensor:
    """Softmax along the last axis."""
    if a.data.ndim == 0 or a.shape[-1] == 0:
        raise ValueError("softmax over empty axis")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        if a.requires_grad:
            dot = (g * out_data).sum(axis=-1, keepdims=True)
            a._accumulate(out_data * (g - dot))

    return _node(out_data, (a,), backward)


def logsumexp_rows(a: Tensor) -> Tensor:
    """log(sum(exp(row))) for each row of a 2-D tensor; returns shape (n,)."""
    if a.data.ndim != 2 or a.shape[1] == 0:
        raise ValueError("logsumexp_rows expects a non-empty 2-D tensor")
    m = a.data.max(axis=1, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=1, keepdims=True)
    out_data = (m + np.log(s)).reshape(-1)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g[:, None] * (e / s))

    return _node(out_data, (a,), backward)


def layer_norm(a: Tensor, eps: float = _LN_EPS) -> Tensor:
    """Normalize the last axis to zero mean / unit variance (no affine)."""
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    out_data = xhat.astype(x.dtype)

    def backward(g):
        if a.requires_grad:
            gm = g.mean(axis=-1, keepdims=True)
            gx = (g * xhat).mean(axis=-1, keepdims=True)
            a._accumulate((inv * (g - gm - xhat * gx)).astype(x.dtype))

    return _node(out_data, (a,), backward)


def dropout(a: Tensor, rate: float, seed: int) -> Tensor:
    """Inverted-scaling dropout with an explicit seed; rate 0 is the identity."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return a
    rng = np.random.default_rng(seed)
    mask = (rng.random(a.shape) >= rate).astype(a.dtype) / (1.0 - rate)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * mask)

    return _node(a.data * mask, (a,), backward)


def gather_rows(table: Tensor, ids) -> Tensor:
    """Row lookup by integer index; backward scatter-adds into the table."""
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("gather_rows expects a 1-D index array")
    if table.data.ndim != 2:
        raise ValueError("gather_rows expects a 2-D table")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError("gather index out of range")
    out_data = table.data[idx]

    def backward(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, idx, g)
            table._accumulate(gt)

    return _node(out_data, (table,), backward)


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    if axis not in (0, 1):
        raise ValueError("concat supports axis 0 or 1")
    if not parts:
        raise ValueError("concat of nothing")
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p._accumulate(g[lo:hi] if axis == 0 else g[:, lo:hi])

    return _node(out_data, tuple(parts), backward)


def slice_cols(a: Tensor, lo: int, hi: int) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError("slice_cols expects a 2-D tensor")
    out_data = a.data[:, lo:hi].copy()

    def backward(g):
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            ga[:, lo:hi] = g
            a._accumulate(ga)

    return _node(out_data, (a,), backward)


def slice_rows(a: Tensor, lo: int, hi: int) -> Tensor:
    out_data = a.data[lo:hi].copy()

    def backward(g):
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            ga[lo:hi] = g
            a._accumulate(ga)

    return _node(out_data, (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a._accumulate(np.full_like(a.data, g))

    return _node(np.asarray(a.data.sum(), dtype=a.dtype), (a,), backward)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.full_like(a.data, g / n))

    return _node(np.asarray(a.data.mean(), dtype=a.dtype), (a,), backward)


def sum_axis(a: Tensor, axis: int) -> Tensor:
    if a.data.ndim != 2 or axis not in (0, 1):
        raise ValueError("sum_axis expects a 2-D tensor and axis 0 or 1")
    out_data = a.data.sum(axis=axis)

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.broadcast_to(g if axis == 0 else g[:, None], a.shape).astype(a.dtype))

    return _node(out_data, (a,), backward)


def mean_axis(a: Tensor, axis: int) -> Tensor:
    n = a.shape[axis]
    return mul(sum_axis(a, axis), 1.0 / n)


def diag_part(a: Tensor) -> Tensor:
    if a.data.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("diag_part expects a square matrix")
    out_data = np.diag(a.data).copy()

    def backward(g):
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            np.fill_diagonal(ga, g)
            a._accumulate(ga)

    return _node(out_data, (a,), backward)


def stack_rows(rows: list[Tensor]) -> Tensor:
    """Stack (d,) vectors into an (n, d) matrix."""
    out_data = np.stack([r.data for r in rows], axis=0)

    def backward(g):
        for i, r in enumerate(rows):
            if r.requires_grad:
                r._accumulate(g[i])

    return _node(out_data, tuple(rows), backward)


def pick_row(a: Tensor, i: int) -> Tensor:
    out_data = a.data[i].copy()

    def backward(g):
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            ga[i] = g
            a._accumulate(ga)

    return _node(out_data, (a,), backward)


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two vectors; returns a 0-d tensor."""
    if a.shape != b.shape or a.data.ndim != 1:
        raise ValueError(f"dot expects equal-length vectors, got {a.shape} and {b.shape}")
    return sum_all(mul(a, b))


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor,
                         mask: np.ndarray | None = None) -> tuple[Tensor, np.ndarray]:
    """Softmax(q kᵀ / sqrt(d_head)) v; mask is an additive numpy array.

    Returns the output together with the forward attention weights (plain
    numpy, outside the graph) for inspection.
    """
    if q.shape[1] != k.shape[1] or k.shape[0] != v.shape[0]:
        raise ValueError("attention shape mismatch")
    logits = mul(matmul(q, transpose(k)), 1.0 / np.sqrt(q.shape[1]))
    if mask is not None:
        logits = add(logits, constant(mask.astype(logits.dtype)))
    weights = row_softmax(logits)
    return matmul(weights, v), weights.data.copy()


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^x), computed stably."""
    x = a.data
    out_data = (np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))).astype(x.dtype)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g / (1.0 + np.exp(-x)))

    return _node(out_data, (a,), backward)
