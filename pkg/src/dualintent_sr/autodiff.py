"""Minimal reverse-mode automatic differentiation on numpy arrays.

The engine builds a dynamic computation graph: every operation returns a new
`Tensor` holding float64 results plus a closure that maps the output gradient
to gradients of the operation's inputs.  `backward` walks the graph once in
reverse topological order and accumulates gradients into every tensor that
requires them.

Design constraints honored here:

- all forward math runs in float64 (inputs are coerced on construction);
- gradients accumulate additively when a tensor feeds several consumers;
- tensors that do not require gradients carry no graph edges, so inference
  builds no backward state;
- constant sparse matrices (`SparseMap`) give fixed gather/scatter and
  neighborhood-averaging patterns an O(nnz) backward path.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .errors import NumericError

__all__ = [
    "Tensor",
    "SparseMap",
    "as_tensor",
    "concat",
    "gather_rows",
    "matmul",
    "no_grad",
    "softmax_masked",
    "spmm",
]

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph construction inside the block (inference-only forward)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """Node of the computation graph: float64 data plus optional grad."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _from_op(data: np.ndarray, parents: tuple["Tensor", ...], backward_fn) -> "Tensor":
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward_fn
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag}, requires_grad={self.requires_grad})"

    # -- graph traversal -------------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into `.grad` of every reachable tensor.

        Only scalar (size-1) tensors may seed a backward pass.
        """
        if self.data.size != 1:
            raise NumericError(
                f"backward() requires a scalar loss, got shape {self.data.shape}"
            )
        if not np.isfinite(self.data).all():
            raise NumericError(f"backward() on non-finite loss value {self.data!r}")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        if self.grad is None:
            self.grad = np.ones_like(self.data)
        else:
            self.grad = self.grad + np.ones_like(self.data)

        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, piece in zip(node._parents, grads):
                if parent.requires_grad and piece is not None:
                    if parent.grad is None:
                        # First contribution: adopt by reference. Pieces may be
                        # views into a consumer's grad, so later contributions
                        # add out-of-place rather than mutating.
                        parent.grad = piece
                    else:
                        parent.grad = parent.grad + piece

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """Copy of this tensor's value cut off from the graph."""
        return Tensor(self.data.copy())

    # -- arithmetic ------------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        data = self.data + other.data
        a_shape, b_shape = self.data.shape, other.data.shape

        def backward_fn(g):
            return (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape))

        return Tensor._from_op(data, (self, other), backward_fn)

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        other = as_tensor(other)
        data = self.data - other.data
        a_shape, b_shape = self.data.shape, other.data.shape

        def backward_fn(g):
            return (_unbroadcast(g, a_shape), _unbroadcast(-g, b_shape))

        return Tensor._from_op(data, (self, other), backward_fn)

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) - self

    def __neg__(self) -> "Tensor":
        def backward_fn(g):
            return (-g,)

        return Tensor._from_op(-self.data, (self,), backward_fn)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        data = self.data * other.data
        a, b = self, other

        def backward_fn(g):
            ga = _unbroadcast(g * b.data, a.data.shape) if a.requires_grad else None
            gb = _unbroadcast(g * a.data, b.data.shape) if b.requires_grad else None
            return (ga, gb)

        return Tensor._from_op(data, (self, other), backward_fn)

    __rmul__ = __mul__

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, as_tensor(other))

    # -- reductions ------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        data = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.data.shape

        def backward_fn(g):
            if axis is None:
                return (np.broadcast_to(g, shape).copy(),)
            if not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._from_op(data, (self,), backward_fn)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        data = self.data.mean(axis=axis, keepdims=keepdims)
        shape = self.data.shape
        count = self.data.size if axis is None else shape[axis]

        def backward_fn(g):
            if axis is None:
                return (np.broadcast_to(g / count, shape).copy(),)
            if not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g / count, shape).copy(),)

        return Tensor._from_op(data, (self,), backward_fn)

    # -- elementwise -----------------------------------------------------------

    def relu(self) -> "Tensor":
        mask = self.data > 0.0

        def backward_fn(g):
            return (g * mask,)

        return Tensor._from_op(self.data * mask, (self,), backward_fn)

    def sigmoid(self) -> "Tensor":
        out_data = expit(self.data)

        def backward_fn(g):
            return (g * out_data * (1.0 - out_data),)

        return Tensor._from_op(out_data, (self,), backward_fn)

    def log(self) -> "Tensor":
        if np.any(self.data <= 0.0):
            raise NumericError("log() of non-positive value")
        data = np.log(self.data)
        src = self.data

        def backward_fn(g):
            return (g / src,)

        return Tensor._from_op(data, (self,), backward_fn)

    def square(self) -> "Tensor":
        src = self.data

        def backward_fn(g):
            return (g * 2.0 * src,)

        return Tensor._from_op(src * src, (self,), backward_fn)

    def softplus(self) -> "Tensor":
        """log(1 + exp(x)), computed without overflow for large |x|."""
        data = np.logaddexp(0.0, self.data)
        src = self.data

        def backward_fn(g):
            return (g * expit(src),)

        return Tensor._from_op(data, (self,), backward_fn)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        data = self.data.reshape(shape)

        def backward_fn(g):
            return (g.reshape(old),)

        return Tensor._from_op(data, (self,), backward_fn)


def as_tensor(value) -> Tensor:
    """Wrap plain numbers/arrays as constant tensors; pass tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 2-D operands or batched 3-D operands."""
    if a.ndim not in (2, 3) or b.ndim not in (2, 3):
        raise NumericError(f"matmul expects 2-D or 3-D operands, got {a.ndim}-D @ {b.ndim}-D")
    data = a.data @ b.data
    a_shape, b_shape = a.data.shape, b.data.shape

    def backward_fn(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a_shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b_shape) if b.requires_grad else None
        return (ga, gb)

    return Tensor._from_op(data, (a, b), backward_fn)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    """Concatenate tensors along an axis; backward splits the gradient."""
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._from_op(data, tuple(tensors), backward_fn)


class SparseMap:
    """Constant CSR matrix used for structural gathers, scatters and averages.

    The matrix participates in the graph only as a fixed linear map: forward is
    ``mat @ x`` and backward is ``mat.T @ g``.  The transpose is materialized
    once at construction because these maps are reused every training step.
    """

    __slots__ = ("mat", "mat_t", "shape")

    def __init__(self, mat: sp.spmatrix):
        self.mat = sp.csr_matrix(mat)
        self.mat_t = sp.csr_matrix(self.mat.T)
        self.shape = self.mat.shape

    @staticmethod
    def scatter_from_index(index: np.ndarray, n_rows: int) -> "SparseMap":
        """Map whose product with per-slot gradients accumulates them per row.

        Row ``index[j]`` of the result receives slot ``j``:  ``S[index[j], j] = 1``.
        """
        index = np.asarray(index, dtype=np.int64)
        data = np.ones(index.size, dtype=np.float64)
        cols = np.arange(index.size, dtype=np.int64)
        mat = sp.csr_matrix((data, (index, cols)), shape=(n_rows, index.size))
        return SparseMap(mat)

    @staticmethod
    def select_rows(index: np.ndarray, n_cols: int) -> "SparseMap":
        """Map computing ``table[index]`` as a product: ``S[j, index[j]] = 1``."""
        index = np.asarray(index, dtype=np.int64)
        data = np.ones(index.size, dtype=np.float64)
        rows = np.arange(index.size, dtype=np.int64)
        mat = sp.csr_matrix((data, (rows, index)), shape=(index.size, n_cols))
        return SparseMap(mat)

    @staticmethod
    def mean_from_groups(group_of_slot: np.ndarray, n_groups: int) -> "SparseMap":
        """Map averaging slot vectors into their group: row g = mean of its slots.

        Groups with no slots produce all-zero rows.
        """
        group_of_slot = np.asarray(group_of_slot, dtype=np.int64)
        counts = np.bincount(group_of_slot, minlength=n_groups).astype(np.float64)
        weights = np.zeros(group_of_slot.size, dtype=np.float64)
        nonzero = counts[group_of_slot] > 0
        weights[nonzero] = 1.0 / counts[group_of_slot][nonzero]
        cols = np.arange(group_of_slot.size, dtype=np.int64)
        mat = sp.csr_matrix(
            (weights, (group_of_slot, cols)), shape=(n_groups, group_of_slot.size)
        )
        return SparseMap(mat)


def spmm(smap: SparseMap, x: Tensor) -> Tensor:
    """Sparse-constant × dense product: forward mat @ x, backward mat.T @ g."""
    if x.ndim != 2:
        raise NumericError(f"spmm expects a 2-D dense operand, got {x.ndim}-D")
    data = smap.mat @ x.data

    def backward_fn(g):
        return (smap.mat_t @ g,)

    return Tensor._from_op(data, (x,), backward_fn)


def gather_rows(table: Tensor, index: np.ndarray, scatter: SparseMap | None = None) -> Tensor:
    """Select rows of a 2-D table; output shape is index.shape + (columns,).

    `scatter`, when given, must be ``SparseMap.scatter_from_index(index.ravel(),
    table_rows)`` and turns the backward accumulation into one sparse product;
    without it the backward falls back to ``np.add.at``.
    """
    if table.ndim != 2:
        raise NumericError(f"gather_rows expects a 2-D table, got {table.ndim}-D")
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= table.data.shape[0]):
        raise NumericError(
            f"gather index out of range [0, {table.data.shape[0]}): "
            f"[{index.min()}, {index.max()}]"
        )
    data = table.data[index]
    n_rows, n_cols = table.data.shape

    def backward_fn(g):
        flat = g.reshape(-1, n_cols)
        if scatter is not None:
            return (scatter.mat @ flat,)
        acc = np.zeros((n_rows, n_cols), dtype=np.float64)
        np.add.at(acc, index.ravel(), flat)
        return (acc,)

    return Tensor._from_op(data, (table,), backward_fn)


def gated_softmax_pool(
    table: Tensor,
    keys: Tensor,
    ids: np.ndarray,
    mask: np.ndarray,
    scatter: SparseMap | None = None,
) -> Tensor:
    """Attention-pool rows of a 2-D table: out[b] = sum_t w[b,t] * table[ids[b,t]].

    The weights are a softmax over slots of ``table[ids[b,t]] . keys[b]``,
    restricted to slots where ``mask[b,t]`` is true; rows with no unmasked slot
    pool to the zero vector.  Equivalent to gather + masked softmax + weighted
    sum, fused so the (rows, slots, dim) intermediate is touched a constant
    number of times in both directions.  `scatter` plays the same role as in
    :func:`gather_rows`.
    """
    if table.ndim != 2:
        raise NumericError(f"gated_softmax_pool expects a 2-D table, got {table.ndim}-D")
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 2:
        raise NumericError(f"gated_softmax_pool expects a 2-D id matrix, got {ids.ndim}-D")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise NumericError(
            f"gather index out of range [0, {table.data.shape[0]}): "
            f"[{ids.min()}, {ids.max()}]"
        )
    rows = table.data[ids]  # (B, T, d)
    logits = np.einsum("btd,bd->bt", rows, keys.data)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
    neg_inf = np.float64(-np.inf)
    shifted = np.where(mask, logits, neg_inf)
    row_max = shifted.max(axis=1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    exp = np.exp(np.where(mask, shifted - row_max, neg_inf))
    exp = np.where(mask, exp, 0.0)
    denom = exp.sum(axis=1, keepdims=True)
    weights = np.divide(exp, denom, out=np.zeros_like(exp), where=denom > 0.0)
    data = np.einsum("bt,btd->bd", weights, rows)
    n_rows, n_cols = table.data.shape

    def backward_fn(g):
        # d(out)/d(weights[b,t]) = rows[b,t] . g[b]; softmax Jacobian folds the
        # slot-wise scores back into logit space before touching the leaves.
        scores = np.einsum("btd,bd->bt", rows, g)
        inner = (scores * weights).sum(axis=1, keepdims=True)
        dlogits = weights * (scores - inner)
        grad_keys = np.einsum("bt,btd->bd", dlogits, rows) if keys.requires_grad else None
        if table.requires_grad:
            grad_rows = weights[..., None] * g[:, None, :]
            grad_rows += dlogits[..., None] * keys.data[:, None, :]
            flat = grad_rows.reshape(-1, n_cols)
            if scatter is not None:
                grad_table = scatter.mat @ flat
            else:
                grad_table = np.zeros((n_rows, n_cols), dtype=np.float64)
                np.add.at(grad_table, ids.ravel(), flat)
        else:
            grad_table = None
        return (grad_table, grad_keys)

    return Tensor._from_op(data, (table, keys), backward_fn)


def softmax_masked(logits: Tensor, mask: np.ndarray, axis: int = -1) -> Tensor:
    """Softmax over positions where `mask` is true; masked slots get weight 0.

    Rows whose mask is entirely false produce an all-zero row rather than NaN,
    which downstream pooling treats as "no contribution".
    """
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), logits.data.shape)
    neg_inf = np.float64(-np.inf)
    shifted = np.where(mask, logits.data, neg_inf)
    row_max = shifted.max(axis=axis, keepdims=True)
    # Rows with no unmasked entries would propagate -inf; pin them to zero so
    # exp() underflows cleanly to an all-zero row.
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    exp = np.exp(np.where(mask, shifted - row_max, neg_inf))
    exp = np.where(mask, exp, 0.0)
    denom = exp.sum(axis=axis, keepdims=True)
    out_data = np.divide(exp, denom, out=np.zeros_like(exp), where=denom > 0.0)

    def backward_fn(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        return ((out_data * (g - inner)),)

    return Tensor._from_op(out_data, (logits,), backward_fn)
