"""Dense-tensor reverse-mode differentiation on numpy buffers.

The engine is deliberately small: row-major float tensors of rank 0..2,
a define-by-run tape, and the primitive set one needs for perceptron-style
synthesis networks (matmul, restricted broadcasting, reductions, gathers,
a handful of pointwise nonlinearities).

Two contracts shape the implementation:

* Determinism. Every primitive reduces in a fixed order that depends only
  on the operand shapes, never on how work is split. Matrix products go
  through ``np.einsum`` with a fixed contraction order instead of BLAS,
  because BLAS gemm changes its accumulation pattern with the row count
  (panel blocking), which would make a row of the product depend on which
  other rows happen to be in the batch.
* Higher-order gradients. Backward passes are themselves built from these
  primitives, so a gradient computed with ``create_graph=True`` can be
  differentiated again (needed for gradient penalties on discriminators).

Broadcasting is restricted to the three cases the synthesis stack uses:
equal shapes, scalar against anything, and a rank-1 vector against the
trailing axis of a rank-2 matrix.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "GraphError",
    "ShapeError",
    "no_grad",
    "enable_grad",
    "add", "sub", "mul", "div", "neg",
    "matmul", "linear",
    "square", "sqrt", "exp",
    "tensor_sum", "mean",
    "concat", "gather_rows", "slice_rows", "slice_cols",
    "reshape", "transpose", "tile_rows", "tile_cols",
    "leaky_relu", "sin", "cos", "softplus", "sigmoid",
    "row_norm",
    "backward", "grad", "second_order_grad",
]

FLOAT_DTYPES = (np.float64, np.float32)
DEFAULT_DTYPE = np.float64


class ShapeError(ValueError):
    """Operand shapes do not conform to the documented broadcasting rules."""


class GraphError(RuntimeError):
    """The differentiation graph cannot support the requested operation."""


class _GradMode(threading.local):
    def __init__(self):
        self.enabled = True


_MODE = _GradMode()


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    prev = _MODE.enabled
    _MODE.enabled = False
    try:
        yield
    finally:
        _MODE.enabled = prev


@contextlib.contextmanager
def enable_grad():
    """Re-enable tape recording, overriding an enclosing no_grad().

    Needed by code whose *value* is defined through differentiation
    (e.g. gradient penalties), which must record even when the caller
    only wants a value."""
    prev = _MODE.enabled
    _MODE.enabled = True
    try:
        yield
    finally:
        _MODE.enabled = prev


def _recording() -> bool:
    return _MODE.enabled


class Tensor:
    """A dense row-major array participating in a reverse-mode tape.

    ``data`` is always a C-contiguous numpy array of float64 (default) or
    float32. Leaf tensors (no parents) with ``requires_grad=True`` act as
    parameters; ops produce interior nodes holding a vector-Jacobian
    closure over their parent tensors.
    """

    __slots__ = ("data", "requires_grad", "_parents", "_vjp", "_nondiff")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(DEFAULT_DTYPE)
        # ascontiguousarray would promote 0-d to shape (1,); preserve rank 0
        self.data = arr if arr.ndim == 0 else np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] | None = None
        self._vjp: Callable[[Tensor], Sequence[Tensor | None]] | None = None
        # Set on tensors produced by a non-differentiable backward pass;
        # consuming them in a second differentiation is an error, not a zero.
        self._nondiff = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(_as_tensor(other, self), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(_as_tensor(other, self), self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other, self), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else DEFAULT_DTYPE
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents: tuple[Tensor, ...],
          vjp: Callable[[Tensor], Sequence[Tensor | None]]) -> Tensor:
    out = Tensor(data)
    out._nondiff = any(p._nondiff for p in parents)
    needs = any(p.requires_grad for p in parents)
    if needs and _recording():
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def _check_dtypes(a: Tensor, b: Tensor, opname: str) -> None:
    if a.data.dtype != b.data.dtype:
        raise ShapeError(
            f"{opname}: mixed dtypes {a.data.dtype} and {b.data.dtype}; "
            "cast explicitly")


def _broadcast_kind(a: Tensor, b: Tensor, opname: str) -> str:
    """Classify an elementwise pairing: 'same', 'b_scalar', 'a_scalar',
    'b_row' (b is rank-1 against rows of rank-2 a), or 'a_row'."""
    sa, sb = a.shape, b.shape
    if sa == sb:
        return "same"
    if sb == ():
        return "b_scalar"
    if sa == ():
        return "a_scalar"
    if len(sa) == 2 and len(sb) == 1 and sa[1] == sb[0]:
        return "b_row"
    if len(sb) == 2 and len(sa) == 1 and sb[1] == sa[0]:
        return "a_row"
    raise ShapeError(
        f"{opname}: shapes {sa} and {sb} do not conform (equal shapes, "
        "scalar, or rank-1 against the trailing axis of rank-2 only)")


def _reduce_to(g: Tensor, kind_side: str) -> Tensor:
    """Sum a full-shape gradient back down to the broadcast operand."""
    if kind_side == "same":
        return g
    if kind_side == "scalar":
        return tensor_sum(g)
    if kind_side == "row":
        return tensor_sum(g, axis=0)
    raise AssertionError(kind_side)


def _sides(kind: str) -> tuple[str, str]:
    return {
        "same": ("same", "same"),
        "b_scalar": ("same", "scalar"),
        "a_scalar": ("scalar", "same"),
        "b_row": ("same", "row"),
        "a_row": ("row", "same"),
    }[kind]


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    _check_dtypes(a, b, "add")
    kind = _broadcast_kind(a, b, "add")
    sa, sb = _sides(kind)

    def vjp(g: Tensor):
        return _reduce_to(g, sa), _reduce_to(g, sb)

    return _make(a.data + b.data, (a, b), vjp)


def sub(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    _check_dtypes(a, b, "sub")
    kind = _broadcast_kind(a, b, "sub")
    sa, sb = _sides(kind)

    def vjp(g: Tensor):
        return _reduce_to(g, sa), _reduce_to(neg(g), sb)

    return _make(a.data - b.data, (a, b), vjp)


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    _check_dtypes(a, b, "mul")
    kind = _broadcast_kind(a, b, "mul")
    sa, sb = _sides(kind)

    def vjp(g: Tensor):
        return _reduce_to(mul(g, b), sa), _reduce_to(mul(g, a), sb)

    return _make(a.data * b.data, (a, b), vjp)


def div(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    _check_dtypes(a, b, "div")
    kind = _broadcast_kind(a, b, "div")
    sa, sb = _sides(kind)
    if np.any(b.data == 0.0):
        raise ZeroDivisionError("div: divisor contains an exact zero")

    def vjp(g: Tensor):
        ga = _reduce_to(div(g, b), sa)
        gb = _reduce_to(neg(div(mul(g, a), mul(b, b))), sb)
        return ga, gb

    return _make(a.data / b.data, (a, b), vjp)


def neg(a) -> Tensor:
    a = _as_tensor(a)

    def vjp(g: Tensor):
        return (neg(g),)

    return _make(-a.data, (a,), vjp)


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Deterministic matrix product of two rank-2 tensors.

    Row i of the result is computed by a straight-order contraction over
    the shared axis, so it depends only on row i of ``a`` and on ``b``:
    evaluating any subset of rows yields bit-identical values.
    """
    a = _as_tensor(a)
    b = _as_tensor(b)
    _check_dtypes(a, b, "matmul")
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul: expected rank-2 operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")

    def vjp(g: Tensor):
        return matmul(g, transpose(b)), matmul(transpose(a), g)

    out = np.einsum("ij,jk->ik", a.data, b.data, optimize=False)
    return _make(out, (a, b), vjp)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x @ w plus an optional rank-1 bias broadcast over rows."""
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


def transpose(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose: expected rank-2, got {a.shape}")

    def vjp(g: Tensor):
        return (transpose(g),)

    return _make(np.ascontiguousarray(a.data.T), (a,), vjp)


def reshape(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(int(s) for s in shape)
    old = a.shape

    def vjp(g: Tensor):
        return (reshape(g, old),)

    return _make(np.ascontiguousarray(a.data.reshape(shape)), (a,), vjp)


# ---------------------------------------------------------------------------
# pointwise functions

def square(a) -> Tensor:
    a = _as_tensor(a)

    def vjp(g: Tensor):
        return (mul(g, mul(a, 2.0)),)

    return _make(a.data * a.data, (a,), vjp)


def sqrt(a) -> Tensor:
    """Elementwise square root. Negative entries are a domain error; the
    derivative at exactly zero is unbounded and raises on backward."""
    a = _as_tensor(a)
    if np.any(a.data < 0.0):
        raise ValueError("sqrt: negative input")
    out_data = np.sqrt(a.data)

    def vjp(g: Tensor):
        return (mul(g, div(_as_tensor(np.asarray(0.5, dtype=a.data.dtype)), out)),)

    out = _make(out_data, (a,), vjp)
    return out


def exp(a) -> Tensor:
    a = _as_tensor(a)

    def vjp(g: Tensor):
        return (mul(g, out),)

    out = _make(np.exp(a.data), (a,), vjp)
    return out


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    """max(x, slope*x). The derivative at exactly 0 is defined as 1.0."""
    a = _as_tensor(a)
    pos = a.data >= 0.0
    mask = np.where(pos, 1.0, slope).astype(a.data.dtype)

    def vjp(g: Tensor):
        return (mul(g, Tensor(mask)),)

    return _make(np.where(pos, a.data, a.data * slope), (a,), vjp)


def sin(a) -> Tensor:
    a = _as_tensor(a)

    def vjp(g: Tensor):
        return (mul(g, cos(a)),)

    return _make(np.sin(a.data), (a,), vjp)


def cos(a) -> Tensor:
    a = _as_tensor(a)

    def vjp(g: Tensor):
        return (neg(mul(g, sin(a))),)

    return _make(np.cos(a.data), (a,), vjp)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out_data = out_data.astype(x.dtype)

    def vjp(g: Tensor):
        return (mul(g, mul(out, sub(_as_tensor(np.asarray(1.0, dtype=x.dtype)), out))),)

    out = _make(out_data, (a,), vjp)
    return out


def softplus(a) -> Tensor:
    """log(1 + exp(x)), evaluated stably for large |x|."""
    a = _as_tensor(a)
    x = a.data
    out_data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def vjp(g: Tensor):
        return (mul(g, sigmoid(a)),)

    return _make(out_data.astype(x.dtype), (a,), vjp)


# ---------------------------------------------------------------------------
# reductions

def tensor_sum(a, axis: int | None = None) -> Tensor:
    """Sum over all entries (axis=None) or one axis of a rank-1/2 tensor.

    Reduction order is numpy's pairwise scheme over the reduced axis; it is
    a function of the reduced extent only.
    """
    a = _as_tensor(a)
    if axis is None:
        n_rows = a.shape[0] if a.ndim >= 1 else 1
        shape = a.shape

        def vjp_all(g: Tensor):
            ones = Tensor(np.ones(shape, dtype=a.data.dtype))
            return (mul(ones, g),)

        return _make(np.asarray(a.data.sum(), dtype=a.data.dtype), (a,), vjp_all)

    if a.ndim == 1:
        if axis != 0:
            raise ShapeError(f"sum: axis {axis} invalid for shape {a.shape}")
        return tensor_sum(a, axis=None)
    if a.ndim != 2 or axis not in (0, 1):
        raise ShapeError(f"sum: axis {axis} invalid for shape {a.shape}")
    n, m = a.shape

    if axis == 0:
        def vjp0(g: Tensor):
            return (tile_rows(g, n),)
        return _make(a.data.sum(axis=0), (a,), vjp0)

    def vjp1(g: Tensor):
        return (tile_cols(g, m),)

    return _make(a.data.sum(axis=1), (a,), vjp1)


def mean(a, axis: int | None = None) -> Tensor:
    a = _as_tensor(a)
    if axis is None:
        count = a.size
    else:
        count = a.shape[axis]
    return mul(tensor_sum(a, axis=axis), 1.0 / count)


def row_norm(a: Tensor) -> Tensor:
    """L2 norm of each row of a rank-2 tensor."""
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"row_norm: expected rank-2, got {a.shape}")
    return sqrt(tensor_sum(square(a), axis=1))


# ---------------------------------------------------------------------------
# structural ops

def tile_rows(v: Tensor, n: int) -> Tensor:
    """Stack ``n`` copies of a rank-1 vector as the rows of a matrix."""
    v = _as_tensor(v)
    if v.ndim != 1:
        raise ShapeError(f"tile_rows: expected rank-1, got {v.shape}")

    def vjp(g: Tensor):
        return (tensor_sum(g, axis=0),)

    return _make(np.broadcast_to(v.data, (n, v.shape[0])).copy(), (v,), vjp)


def tile_cols(v: Tensor, m: int) -> Tensor:
    """Spread a rank-1 vector down the columns: out[i, j] = v[i]."""
    v = _as_tensor(v)
    if v.ndim != 1:
        raise ShapeError(f"tile_cols: expected rank-1, got {v.shape}")

    def vjp(g: Tensor):
        return (tensor_sum(g, axis=1),)

    return _make(np.repeat(v.data[:, None], m, axis=1), (v,), vjp)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate rank-2 tensors along axis 0 or 1 (rank-1 along 0)."""
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat: empty input")
    ndim = ts[0].ndim
    for t in ts[1:]:
        if t.ndim != ndim:
            raise ShapeError(
                f"concat: mixed ranks {[t.shape for t in ts]}")
        _check_dtypes(ts[0], t, "concat")
    if ndim == 1 and axis != 0:
        raise ShapeError(f"concat: axis {axis} invalid for rank-1")
    if ndim == 2:
        if axis not in (0, 1):
            raise ShapeError(f"concat: axis {axis} invalid for rank-2")
        other = 1 - axis
        ref = ts[0].shape[other]
        for t in ts[1:]:
            if t.shape[other] != ref:
                raise ShapeError(
                    f"concat: shapes {[t.shape for t in ts]} disagree off-axis")
    sizes = [t.shape[axis] if ndim > 0 else 1 for t in ts]
    offs = np.cumsum([0] + sizes)

    def vjp(g: Tensor):
        if axis == 0 and ndim == 1:
            return tuple(slice_rows(g, offs[i], offs[i + 1]) for i in range(len(ts)))
        if axis == 0:
            return tuple(slice_rows(g, offs[i], offs[i + 1]) for i in range(len(ts)))
        return tuple(slice_cols(g, offs[i], offs[i + 1]) for i in range(len(ts)))

    return _make(np.concatenate([t.data for t in ts], axis=axis), tuple(ts), vjp)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous row slice [start, stop) of a rank-1/2 tensor."""
    a = _as_tensor(a)
    n = a.shape[0]
    if not (0 <= start <= stop <= n):
        raise ShapeError(f"slice_rows: [{start}, {stop}) out of bounds for {a.shape}")

    def vjp(g: Tensor):
        parts = []
        pre_shape = (start,) + a.shape[1:]
        post_shape = (n - stop,) + a.shape[1:]
        if start > 0:
            parts.append(Tensor(np.zeros(pre_shape, dtype=a.data.dtype)))
        parts.append(g)
        if stop < n:
            parts.append(Tensor(np.zeros(post_shape, dtype=a.data.dtype)))
        return (concat(parts, axis=0) if len(parts) > 1 else g,)

    return _make(a.data[start:stop].copy(), (a,), vjp)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"slice_cols: expected rank-2, got {a.shape}")
    m = a.shape[1]
    if not (0 <= start <= stop <= m):
        raise ShapeError(f"slice_cols: [{start}, {stop}) out of bounds for {a.shape}")

    def vjp(g: Tensor):
        parts = []
        if start > 0:
            parts.append(Tensor(np.zeros((a.shape[0], start), dtype=a.data.dtype)))
        parts.append(g)
        if stop < m:
            parts.append(Tensor(np.zeros((a.shape[0], m - stop), dtype=a.data.dtype)))
        return (concat(parts, axis=1) if len(parts) > 1 else g,)

    return _make(np.ascontiguousarray(a.data[:, start:stop]), (a,), vjp)


def gather_rows(a: Tensor, idx) -> Tensor:
    """Select rows by integer index (repeats allowed)."""
    a = _as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"gather_rows: index must be rank-1, got {idx.shape}")
    n = a.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ShapeError(f"gather_rows: index out of range for {n} rows")

    def vjp(g: Tensor):
        return (_scatter_add_rows(g, idx, n),)

    return _make(a.data[idx].copy(), (a,), vjp)


def _scatter_add_rows(g: Tensor, idx: np.ndarray, n_rows: int) -> Tensor:
    """Adjoint of gather_rows: accumulate rows of g at idx into zeros.

    np.add.at applies updates in index order, which is deterministic.
    """
    g = _as_tensor(g)

    def vjp(gg: Tensor):
        return (gather_rows(gg, idx),)

    out = np.zeros((n_rows,) + g.shape[1:], dtype=g.data.dtype)
    np.add.at(out, idx, g.data)
    return _make(out, (g,), vjp)


# ---------------------------------------------------------------------------
# backward

def _toposort(root: Tensor) -> list[Tensor]:
    """Iterative post-order over the tape; returns nodes children-first."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        if node._parents is not None:
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
    return order


def backward(root: Tensor, create_graph: bool = False) -> dict[Tensor, Tensor]:
    """Reverse-mode sweep from a scalar root.

    Returns a map from each reachable leaf tensor with ``requires_grad``
    to its gradient. A detached root yields an empty map. With
    ``create_graph=True`` the returned gradients are themselves recorded
    on the tape and can be differentiated again; otherwise they are
    tagged so a second differentiation raises instead of silently
    returning zeros.
    """
    if root.shape != ():
        raise GraphError(f"backward: root must be scalar, got shape {root.shape}")
    if not root.requires_grad:
        return {}

    ctx = contextlib.nullcontext() if create_graph else no_grad()
    grads: dict[int, Tensor] = {id(root): Tensor(np.asarray(1.0, dtype=root.data.dtype))}
    leaves: dict[Tensor, Tensor] = {}
    with ctx:
        for node in reversed(_toposort(root)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._parents is None:
                leaves[node] = g
                continue
            parent_grads = node._vjp(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                prev = grads.get(id(p))
                grads[id(p)] = pg if prev is None else add(prev, pg)
    if not create_graph:
        for g in leaves.values():
            g._nondiff = True
    return leaves


def grad(output: Tensor, wrt: Sequence[Tensor], create_graph: bool = False) -> list[Tensor]:
    """Gradients of a scalar output for an explicit list of tensors.

    Tensors the output does not depend on get zero gradients of the
    matching shape.
    """
    leaves = backward(output, create_graph=create_graph)
    out = []
    for t in wrt:
        g = leaves.get(t)
        if g is None:
            g = Tensor(np.zeros(t.shape, dtype=t.data.dtype))
        out.append(g)
    return out


def second_order_grad(scalar: Tensor, params: Sequence[Tensor] | None = None):
    """Differentiate a scalar that was built from first-order gradients.

    Raises ``GraphError`` if any ingredient came from a backward pass that
    was not recorded differentiably (``create_graph=False``); that case
    must never masquerade as a zero gradient.
    """
    if scalar._nondiff:
        raise GraphError(
            "second_order_grad: the first-order pass was recorded "
            "non-differentiably; rerun it with create_graph=True")
    leaves = backward(scalar)
    if params is None:
        return leaves
    return {p: leaves.get(p, Tensor(np.zeros(p.shape, dtype=p.data.dtype)))
            for p in params}
