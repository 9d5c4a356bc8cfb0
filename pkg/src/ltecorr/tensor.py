"""Dense float64 tensors with tape-based reverse-mode differentiation.

A Tensor wraps a numpy float64 array.  Untracked tensors are plain values;
tensors created through Tape.leaf (or derived from one) carry a (tape,
node) handle.  Every primitive records its inputs and a backward closure
on the tape, and Tape.backward walks the recording once in reverse
topological order, accumulating dLoss/dNode for every reachable node.

Broadcasting follows numpy's trailing-dimension alignment.  Gradients of
broadcast operands are reduced back to the operand shape by summing the
expanded axes.

Everything is f64.  Discrete choices (neighbor indices, argmax slots,
assignments) are constants of the forward pass: no gradient flows through
index selection.
"""

from __future__ import annotations

import numpy as np

from . import _kernels


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested operation."""


class TapeError(RuntimeError):
    """Invalid tape usage: mixed tapes, untracked loss, non-scalar loss."""


def _as_f64(data):
    arr = np.asarray(data, dtype=np.float64)
    if not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)
    return arr


class Tensor:
    """Row-major f64 value, optionally recorded on a Tape.

    value: numpy array (do not mutate in place)
    """

    __slots__ = ("value", "_tape", "_node")

    # keep numpy from absorbing Tensor operands into object arrays;
    # mixed expressions route through the reflected operators instead
    __array_ufunc__ = None

    def __init__(self, data):
        value = _as_f64(data)
        if not np.all(np.isfinite(value)):
            raise ValueError("tensor data contains non-finite values")
        self.value = value
        self._tape = None
        self._node = -1

    @staticmethod
    def _wrap(value, tape=None, node=-1):
        t = Tensor.__new__(Tensor)
        t.value = np.asarray(value, dtype=np.float64)
        t._tape = tape
        t._node = node
        return t

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def tracked(self):
        return self._tape is not None

    def item(self):
        if self.value.size != 1:
            raise ShapeError(f"item: tensor has shape {self.value.shape}, not a scalar")
        return float(self.value)

    def detach(self):
        """Same value, no tape handle."""
        return Tensor._wrap(self.value)

    def __repr__(self):
        tag = "tracked" if self.tracked else "const"
        return f"Tensor(shape={self.value.shape}, {tag})"

    # arithmetic operators delegate to the module-level primitives
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return sum_over(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_over(self, axis=axis, keepdims=keepdims)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def square(self):
        return square(self)

    def sqrt(self):
        return sqrt(self)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)

    @property
    def T(self):
        return transpose(self)


class Tape:
    """Recording context for one differentiation pass.

    Single-threaded by design; independent tapes over disjoint data may
    run concurrently.  Holds no global state.
    """

    def __init__(self):
        # node i is (parent_ids, backward); parents always precede i
        self._nodes = []

    def __len__(self):
        return len(self._nodes)

    def _add_node(self, parent_ids, backward):
        self._nodes.append((parent_ids, backward))
        return len(self._nodes) - 1

    def leaf(self, data):
        """Register data as a tracked leaf and return its Tensor."""
        t = Tensor(data)
        t._tape = self
        t._node = self._add_node((), None)
        return t

    def backward(self, loss):
        """Reverse sweep from a tracked scalar loss.

        Returns a Gradients map; tracked tensors the loss never touched
        read as zero.
        """
        if not isinstance(loss, Tensor) or loss._tape is not self:
            raise TapeError("backward: loss is not recorded on this tape")
        if loss.value.shape != ():
            raise TapeError(
                f"backward: loss must be a scalar, got shape {loss.value.shape}"
            )
        grads = {loss._node: np.asarray(1.0)}
        for nid in range(loss._node, -1, -1):
            g = grads.get(nid)
            if g is None:
                continue
            parent_ids, back = self._nodes[nid]
            if back is None:
                continue
            for pid, contrib in zip(parent_ids, back(g)):
                if pid < 0 or contrib is None:
                    continue
                prev = grads.get(pid)
                grads[pid] = contrib if prev is None else prev + contrib
        return Gradients(self, grads)


class Gradients:
    """Per-tensor gradient lookup produced by Tape.backward."""

    def __init__(self, tape, grads):
        self._tape = tape
        self._grads = grads

    def __getitem__(self, t):
        if not isinstance(t, Tensor) or t._tape is not self._tape:
            raise TapeError("gradient lookup: tensor is not recorded on this tape")
        g = self._grads.get(t._node)
        if g is None:
            return np.zeros_like(t.value)
        return np.ascontiguousarray(np.broadcast_to(g, t.value.shape))


def _coerce(x):
    if isinstance(x, Tensor):
        return x
    return Tensor._wrap(_as_f64(x))


def _make(value, parents, backward):
    """Build the result tensor, recording a node when any parent is tracked."""
    value = np.asarray(value, dtype=np.float64)
    tape = None
    for p in parents:
        if p._tape is not None:
            if tape is None:
                tape = p._tape
            elif tape is not p._tape:
                raise TapeError("operands are recorded on different tapes")
    if tape is None:
        return Tensor._wrap(value)
    node = tape._add_node(tuple(p._node for p in parents), backward)
    return Tensor._wrap(value, tape, node)


def _unbroadcast(g, shape):
    """Sum g over the axes that broadcasting expanded, back to shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    if g.shape != tuple(shape):
        g = np.broadcast_to(g, shape)
    return g


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.value.shape, b.value.shape)
    except ValueError:
        raise ShapeError(
            f"{op}: operands have incompatible shapes "
            f"{a.value.shape} and {b.value.shape}"
        ) from None


def add(a, b):
    a, b = _coerce(a), _coerce(b)
    _check_broadcast("add", a, b)
    return _make(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)),
    )


def sub(a, b):
    a, b = _coerce(a), _coerce(b)
    _check_broadcast("sub", a, b)
    return _make(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)),
    )


def mul(a, b):
    a, b = _coerce(a), _coerce(b)
    _check_broadcast("mul", a, b)
    return _make(
        a.value * b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.value, a.value.shape),
            _unbroadcast(g * a.value, b.value.shape),
        ),
    )


def div(a, b):
    a, b = _coerce(a), _coerce(b)
    _check_broadcast("div", a, b)
    return _make(
        a.value / b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.value, a.value.shape),
            _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape),
        ),
    )


def neg(a):
    a = _coerce(a)
    return _make(-a.value, (a,), lambda g: (-g,))


def matmul(a, b):
    a, b = _coerce(a), _coerce(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(
            f"matmul: operands must have ndim >= 2, got shapes "
            f"{a.value.shape} and {b.value.shape}"
        )
    if a.value.shape[-1] != b.value.shape[-2]:
        raise ShapeError(
            f"matmul: inner dimensions differ for shapes "
            f"{a.value.shape} and {b.value.shape}"
        )
    av, bv = a.value, b.value

    def backward(g):
        ga = g @ np.swapaxes(bv, -1, -2)
        gb = np.swapaxes(av, -1, -2) @ g
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return _make(av @ bv, (a, b), backward)


def transpose(a, axes=None):
    a = _coerce(a)
    if axes is None:
        axes = tuple(range(a.ndim))[::-1]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _make(
        np.transpose(a.value, axes).copy(),
        (a,),
        lambda g: (np.transpose(g, inverse),),
    )


def swap_last(a):
    """Transpose the last two axes, keeping batch axes in place."""
    a = _coerce(a)
    if a.ndim < 2:
        raise ShapeError(f"swap_last: need ndim >= 2, got shape {a.value.shape}")
    axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    return transpose(a, axes)


def reshape(a, shape):
    a = _coerce(a)
    old = a.value.shape
    try:
        value = np.ascontiguousarray(a.value).reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view shape {old} as {shape}") from None
    return _make(value, (a,), lambda g: (np.ascontiguousarray(g).reshape(old),))


def broadcast_to(a, shape):
    a = _coerce(a)
    try:
        value = np.broadcast_to(a.value, shape).copy()
    except ValueError:
        raise ShapeError(
            f"broadcast_to: cannot broadcast shape {a.value.shape} to {shape}"
        ) from None
    return _make(value, (a,), lambda g: (_unbroadcast(g, a.value.shape),))


def concat(tensors, axis=0):
    tensors = [_coerce(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: need at least one tensor")
    try:
        value = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(
            "concat: shapes do not align off axis "
            f"{axis}: {[t.value.shape for t in tensors]}"
        ) from None
    sizes = [t.value.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _make(value, tensors, backward)


def sum_over(a, axis=None, keepdims=False):
    a = _coerce(a)
    shape = a.value.shape
    value = np.sum(a.value, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.full(shape, float(g)) if not keepdims else g * np.ones(shape),)
        gx = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gx, shape).copy(),)

    return _make(value, (a,), backward)


def mean_over(a, axis=None, keepdims=False):
    a = _coerce(a)
    if axis is None:
        count = a.value.size
    elif isinstance(axis, tuple):
        count = 1
        for ax in axis:
            count *= a.value.shape[ax]
    else:
        count = a.value.shape[axis]
    return sum_over(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def exp(a):
    a = _coerce(a)
    value = np.exp(a.value)
    return _make(value, (a,), lambda g: (g * value,))


def log(a):
    a = _coerce(a)
    return _make(np.log(a.value), (a,), lambda g: (g / a.value,))


def square(a):
    a = _coerce(a)
    return _make(a.value * a.value, (a,), lambda g: (2.0 * g * a.value,))


def sqrt(a):
    a = _coerce(a)
    value = np.sqrt(a.value)
    return _make(value, (a,), lambda g: (0.5 * g / value,))


def leaky_relu(a, slope=0.2):
    a = _coerce(a)
    positive = a.value > 0.0
    value = np.where(positive, a.value, slope * a.value)
    return _make(value, (a,), lambda g: (g * np.where(positive, 1.0, slope),))


def _extreme_over(a, axis, keepdims, arg_fn, val_fn):
    a = _coerce(a)
    if not isinstance(axis, int):
        raise ShapeError("max/min: axis must be a single int")
    value = val_fn(a.value, axis=axis, keepdims=keepdims)
    # first occurrence wins on ties, fixing the subgradient routing
    arg = arg_fn(a.value, axis=axis)

    def backward(g):
        gx = g if keepdims else np.expand_dims(g, axis)
        out = np.zeros_like(a.value)
        np.put_along_axis(out, np.expand_dims(arg, axis), gx, axis)
        return (out,)

    return _make(value, (a,), backward)


def max_over(a, axis, keepdims=False):
    return _extreme_over(a, axis, keepdims, np.argmax, np.max)


def min_over(a, axis, keepdims=False):
    return _extreme_over(a, axis, keepdims, np.argmin, np.min)


def logsumexp(a, axis, keepdims=False):
    a = _coerce(a)
    if not isinstance(axis, int):
        raise ShapeError("logsumexp: axis must be a single int")
    m = np.max(a.value, axis=axis, keepdims=True)
    value_k = m + np.log(np.sum(np.exp(a.value - m), axis=axis, keepdims=True))
    value = value_k if keepdims else np.squeeze(value_k, axis=axis)
    soft = np.exp(a.value - value_k)

    def backward(g):
        gx = g if keepdims else np.expand_dims(g, axis)
        return (gx * soft,)

    return _make(value, (a,), backward)


def logsumexp_pairs(a):
    """Logsumexp over every entry of a 2-D tensor, transpose-symmetric.

    The running sum is evaluated once in row-major and once in
    column-major order and the two are averaged, so for any matrix M
    logsumexp_pairs(M) == logsumexp_pairs(M.T) bit for bit.  Scalar
    output; backward is the usual softmax weighting.
    """
    a = _coerce(a)
    if a.ndim != 2:
        raise ShapeError(f"logsumexp_pairs: need a 2-D tensor, got {a.value.shape}")
    m = np.max(a.value)
    e = np.exp(a.value - m)
    s_row = float(np.sum(np.ascontiguousarray(e).reshape(-1)))
    s_col = float(np.sum(np.ascontiguousarray(e.T).reshape(-1)))
    value = m + np.log(0.5 * (s_row + s_col))
    soft = np.exp(a.value - value)
    return _make(value, (a,), lambda g: (g * soft,))


def gather_rows(a, idx):
    """Select rows of a 2-D tensor; idx may have any shape.

    Output shape is idx.shape + (row_width,).  Backward scatter-adds the
    upstream gradient back onto the selected rows.
    """
    a = _coerce(a)
    if a.ndim != 2:
        raise ShapeError(f"gather_rows: need a 2-D tensor, got {a.value.shape}")
    idx = np.asarray(idx, dtype=np.int64)
    n = a.value.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"gather_rows: index out of range for {n} rows")
    flat = idx.reshape(-1)
    value = a.value[flat].reshape(idx.shape + (a.value.shape[1],))

    def backward(g):
        g2 = np.ascontiguousarray(g).reshape(flat.shape[0], a.value.shape[1])
        return (_kernels.scatter_add_rows(flat, g2, n),)

    return _make(value, (a,), backward)


def edge_features(h, idx):
    """Edge tensor [h_i, h_j - h_i] over a fixed neighbor table.

    h: (N, C) tensor; idx: (N, K) int array of neighbor rows j.
    Output (N, K, 2C).  The table itself is a constant of the pass.
    """
    h = _coerce(h)
    if h.ndim != 2:
        raise ShapeError(f"edge_features: need (N, C) features, got {h.value.shape}")
    idx = np.asarray(idx, dtype=np.int64)
    n = h.value.shape[0]
    if idx.ndim != 2 or idx.shape[0] != n:
        raise ShapeError(
            f"edge_features: neighbor table {idx.shape} does not match {n} rows"
        )
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"edge_features: index out of range for {n} rows")
    value = _kernels.edge_features(h.value, idx)
    return _make(value, (h,), lambda g: (_kernels.edge_features_grad(g, idx),))


def pairwise_sqdist(a, b):
    """All-pairs squared Euclidean distances between rows, (N,D)x(M,D)->(N,M)."""
    a, b = _coerce(a), _coerce(b)
    if a.ndim != 2 or b.ndim != 2 or a.value.shape[1] != b.value.shape[1]:
        raise ShapeError(
            f"pairwise_sqdist: need (N, D) and (M, D), got "
            f"{a.value.shape} and {b.value.shape}"
        )
    av, bv = a.value, b.value
    value = _kernels.pairwise_sqdist(av, bv)

    def backward(g):
        ga = 2.0 * (g.sum(axis=1)[:, None] * av - g @ bv)
        gb = 2.0 * (g.sum(axis=0)[:, None] * bv - g.T @ av)
        return ga, gb

    return _make(value, (a, b), backward)


def _batched_shapes(op, a, b):
    if a.ndim not in (2, 3) or b.ndim not in (2, 3) or a.ndim != b.ndim:
        raise ShapeError(
            f"{op}: need matching 2-D or 3-D operands, got "
            f"{a.value.shape} and {b.value.shape}"
        )
    if a.value.shape[-1] != a.value.shape[-2]:
        raise ShapeError(f"{op}: matrix must be square, got {a.value.shape}")
    if a.value.shape[:-2] != b.value.shape[:-2] or a.value.shape[-1] != b.value.shape[-2]:
        raise ShapeError(
            f"{op}: operand shapes {a.value.shape} and {b.value.shape} do not align"
        )


def linear_solve(a, b):
    """Solve A X = B for symmetric positive definite A, batched.

    a: (..., k, k), b: (..., k, m) with matching batch axes (none or one).
    Only the symmetric part (A + A^T)/2 enters the solve, and the adjoint
    wrt A is symmetrized to match; a Cholesky factorization first proves
    each matrix positive definite (the factor check is the SPD gate; the
    substitution runs through LAPACK's batched solver).  Adjoint: with
    X = S^-1 B, dB = S^-1 G and dA = -sym(dB X^T) for upstream G.
    """
    a, b = _coerce(a), _coerce(b)
    _batched_shapes("linear_solve", a, b)
    if not np.all(np.isfinite(a.value)) or not np.all(np.isfinite(b.value)):
        raise ValueError("linear_solve: non-finite entries in input")
    sym = 0.5 * (a.value + np.swapaxes(a.value, -1, -2))
    try:
        np.linalg.cholesky(sym)
    except np.linalg.LinAlgError:
        raise ValueError(
            f"linear_solve: matrix index {_first_non_spd(sym)} "
            "is not positive definite"
        ) from None
    x = np.linalg.solve(sym, b.value)

    def backward(g):
        gb = np.linalg.solve(sym, g)
        ga_full = -gb @ np.swapaxes(x, -1, -2)
        ga = 0.5 * (ga_full + np.swapaxes(ga_full, -1, -2))
        return ga, gb

    return _make(x, (a, b), backward)


def _first_non_spd(sym):
    if sym.ndim == 2:
        return 0
    for i in range(sym.shape[0]):
        try:
            np.linalg.cholesky(sym[i])
        except np.linalg.LinAlgError:
            return i
    return -1


def solve_square(a, b):
    """Solve A X = B for general square A, batched like linear_solve.

    No symmetry assumption: the adjoint uses the transpose solve,
    dB = A^-T G and dA = -dB X^T.
    """
    a, b = _coerce(a), _coerce(b)
    _batched_shapes("solve_square", a, b)
    if not np.all(np.isfinite(a.value)) or not np.all(np.isfinite(b.value)):
        raise ValueError("solve_square: non-finite entries in input")
    av = a.value
    try:
        x = np.linalg.solve(av, b.value)
    except np.linalg.LinAlgError:
        raise ValueError("solve_square: singular matrix in batch") from None

    def backward(g):
        gb = np.linalg.solve(np.swapaxes(av, -1, -2), g)
        ga = -gb @ np.swapaxes(x, -1, -2)
        return ga, gb

    return _make(x, (a, b), backward)
