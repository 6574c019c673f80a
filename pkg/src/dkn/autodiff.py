"""Reverse-mode automatic differentiation over float64 numpy arrays.

The engine is a flat tape: every primitive computes its value eagerly and,
when any input is a tracked :class:`Node`, records a backward closure on the
owning :class:`Tape`.  One ``Tape.backward`` pass over the recorded ops in
reverse order accumulates a gradient into every reachable parameter.

Primitives accept either ``Node`` or plain array-likes; with no tracked
input they just return a plain ``numpy`` array, so the same model code
serves for both training (tracked) and inference (untracked).
"""

import numpy as np

from .errors import ConfigError, ContractViolation, DimensionError, NumericError

__all__ = [
    "Tape", "Node", "value_of",
    "add", "sub", "mul", "smul", "colscale", "matmul", "add_col",
    "embed_cols", "embed_rows",
    "tanh", "relu", "sigmoid",
    "conv_valid", "conv_bank", "max_over_time", "rowmax",
    "softmax", "concat", "stack_cols", "mean", "sumsq",
    "row_dot", "row_sumsq", "logistic_loss",
    "finite_difference_check",
]


class Node:
    """One tracked value in the computation graph."""

    __slots__ = ("value", "grad", "tape")
    __array_ufunc__ = None  # force numpy to defer to our reflected operators

    def __init__(self, tape, value):
        self.tape = tape
        self.value = value
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    def item(self):
        return float(self.value)

    def grad_or_zeros(self):
        return self.grad if self.grad is not None else np.zeros_like(self.value)

    def __repr__(self):
        return f"Node(shape={self.value.shape})"

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __neg__(self):
        return sub(0.0 * value_of(self), self)


class Tape:
    """Ordered record of primitive applications.

    Ops are appended in execution order, so inputs always precede their
    consumers; walking the list backwards is a valid reverse topological
    traversal.  A tape is single-owner: build a fresh one per training step.
    """

    __slots__ = ("_ops",)

    def __init__(self):
        self._ops = []

    def param(self, value) -> Node:
        """Wrap `value` as a tracked leaf."""
        return Node(self, np.asarray(value, dtype=np.float64))

    def _record(self, value, backward_fn) -> Node:
        out = Node(self, value)
        self._ops.append((out, backward_fn))
        return out

    def __len__(self):
        return len(self._ops)

    def backward(self, loss: Node) -> None:
        """Populate ``.grad`` on every node reachable from the scalar `loss`."""
        if not isinstance(loss, Node) or loss.tape is not self:
            raise ContractViolation("backward needs a loss node recorded on this tape")
        if loss.value.size != 1:
            raise ContractViolation(f"loss must be scalar, got shape {loss.value.shape}")
        loss.grad = np.ones_like(loss.value)
        for out, backward_fn in reversed(self._ops):
            if out.grad is not None:
                backward_fn(out.grad)


def value_of(x) -> np.ndarray:
    """The float64 array behind a Node or array-like."""
    if isinstance(x, Node):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    return None


def _accum(x, g):
    if isinstance(x, Node):
        x.grad = g if x.grad is None else x.grad + g


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# arithmetic

def add(a, b):
    """Elementwise sum of two same-shape arrays."""
    av, bv = value_of(a), value_of(b)
    _same_shape(av, bv, "add")
    out = av + bv
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def backward(g):
        _accum(a, g)
        _accum(b, g)

    return tape._record(out, backward)


def sub(a, b):
    """Elementwise difference of two same-shape arrays."""
    av, bv = value_of(a), value_of(b)
    _same_shape(av, bv, "sub")
    out = av - bv
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def backward(g):
        _accum(a, g)
        _accum(b, -g)

    return tape._record(out, backward)


def mul(a, b):
    """Hadamard product of two same-shape arrays."""
    av, bv = value_of(a), value_of(b)
    _same_shape(av, bv, "mul")
    out = av * bv
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def backward(g):
        _accum(a, g * bv)
        _accum(b, g * av)

    return tape._record(out, backward)


def smul(s, x):
    """Scale an array by a scalar (python float or scalar node)."""
    sv, xv = value_of(s), value_of(x)
    if sv.size != 1:
        raise DimensionError(f"smul: scale must be scalar, got shape {sv.shape}")
    out = float(sv) * xv
    tape = _tape_of(s, x)
    if tape is None:
        return out

    def backward(g):
        _accum(s, np.asarray(np.sum(g * xv)).reshape(sv.shape))
        _accum(x, float(sv) * g)

    return tape._record(out, backward)


def colscale(v, x):
    """Scale row i of matrix `x` (B, k) by entry i of vector `v` (B,)."""
    vv, xv = value_of(v), value_of(x)
    if vv.ndim != 1 or xv.ndim != 2 or vv.shape[0] != xv.shape[0]:
        raise DimensionError(f"colscale: got shapes {vv.shape} and {xv.shape}")
    out = vv[:, None] * xv
    tape = _tape_of(v, x)
    if tape is None:
        return out

    def backward(g):
        _accum(v, np.sum(g * xv, axis=1))
        _accum(x, vv[:, None] * g)

    return tape._record(out, backward)


def matmul(a, b):
    """Matrix product; supports (M,K)@(K,N), (M,K)@(K,) and (K,)@(K,)."""
    av, bv = value_of(a), value_of(b)
    if av.ndim not in (1, 2) or bv.ndim not in (1, 2):
        raise DimensionError(f"matmul: ranks must be 1 or 2, got {av.shape} and {bv.shape}")
    inner_a = av.shape[-1]
    inner_b = bv.shape[0]
    if inner_a != inner_b:
        raise DimensionError(f"matmul: inner dimensions of {av.shape} and {bv.shape} disagree")
    out = av @ bv
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def backward(g):
        if av.ndim == 2 and bv.ndim == 2:
            _accum(a, g @ bv.T)
            _accum(b, av.T @ g)
        elif av.ndim == 2 and bv.ndim == 1:
            _accum(a, np.outer(g, bv))
            _accum(b, av.T @ g)
        elif av.ndim == 1 and bv.ndim == 2:
            _accum(a, g @ bv.T)
            _accum(b, np.outer(av, g))
        else:  # dot product of two vectors
            _accum(a, g * bv)
            _accum(b, g * av)

    return tape._record(out, backward)


def add_col(x, b):
    """Add a length-d column vector to every column of a (d, n) matrix."""
    xv, bv = value_of(x), value_of(b)
    if xv.ndim != 2 or bv.ndim != 1 or bv.shape[0] != xv.shape[0]:
        raise DimensionError(f"add_col: got shapes {xv.shape} and {bv.shape}")
    out = xv + bv[:, None]
    tape = _tape_of(x, b)
    if tape is None:
        return out

    def backward(g):
        _accum(x, g)
        _accum(b, g.sum(axis=1))

    return tape._record(out, backward)


# ---------------------------------------------------------------------------
# embedding lookups

def embed_cols(table, ids):
    """Gather rows `ids` of a (V, d) table as columns of a (d, n) matrix."""
    tv = value_of(table)
    idx = np.asarray(ids, dtype=np.intp)
    out = tv[idx].T.copy()
    tape = _tape_of(table)
    if tape is None:
        return out

    def backward(g):
        if isinstance(table, Node):
            if table.grad is None:
                table.grad = np.zeros_like(tv)
            np.add.at(table.grad, idx, g.T)

    return tape._record(out, backward)


def embed_rows(table, ids):
    """Gather rows `ids` of a (V, d) table into a (B, d) matrix."""
    tv = value_of(table)
    idx = np.asarray(ids, dtype=np.intp)
    out = tv[idx].copy()
    tape = _tape_of(table)
    if tape is None:
        return out

    def backward(g):
        if isinstance(table, Node):
            if table.grad is None:
                table.grad = np.zeros_like(tv)
            np.add.at(table.grad, idx, g)

    return tape._record(out, backward)


# ---------------------------------------------------------------------------
# nonlinearities

def tanh(x):
    """Elementwise hyperbolic tangent."""
    xv = value_of(x)
    out = np.tanh(xv)
    tape = _tape_of(x)
    if tape is None:
        return out

    def backward(g):
        _accum(x, g * (1.0 - out * out))

    return tape._record(out, backward)


def relu(x):
    """Elementwise max(0, x); the subgradient at 0 is 0."""
    xv = value_of(x)
    out = np.maximum(xv, 0.0)
    tape = _tape_of(x)
    if tape is None:
        return out

    def backward(g):
        _accum(x, g * (xv > 0.0))

    return tape._record(out, backward)


def sigmoid(x):
    """Numerically stable elementwise logistic function."""
    xv = value_of(x)
    out = _stable_sigmoid(xv)
    tape = _tape_of(x)
    if tape is None:
        return out

    def backward(g):
        _accum(x, g * out * (1.0 - out))

    return tape._record(out, backward)


def _stable_sigmoid(z):
    z1 = np.atleast_1d(np.asarray(z, dtype=np.float64))
    out = np.empty_like(z1)
    pos = z1 >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z1[pos]))
    ez = np.exp(z1[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out.reshape(np.shape(z))


# ---------------------------------------------------------------------------
# convolution and pooling

def _conv_windows(xv, ell, n):
    # (C, d, n) -> (C, d, n - l + 1, l) sliding view over the position axis
    return np.lib.stride_tricks.sliding_window_view(xv, ell, axis=2)


def _check_conv_shapes(xv, fv, who):
    if xv.ndim != 3 or fv.ndim != 3:
        raise DimensionError(f"{who}: input and filter must be (channels, d, len), "
                             f"got {xv.shape} and {fv.shape}")
    if xv.shape[0] != fv.shape[0] or xv.shape[1] != fv.shape[1]:
        raise DimensionError(f"{who}: channel/height mismatch between input {xv.shape} "
                             f"and filter {fv.shape}")
    ell, n = fv.shape[2], xv.shape[2]
    if ell > n:
        raise ConfigError(f"{who}: filter window {ell} exceeds sequence length {n}; "
                          f"pad the input upstream")
    return ell, n


def conv_valid(x, f, bias=0.0):
    """Valid cross-correlation of a (C, d, n) input with one (C, d, l) filter.

    Channels are summed; the result is the length n-l+1 pre-activation
    feature map (the caller applies its nonlinearity).
    """
    xv, fv = value_of(x), value_of(f)
    ell, n = _check_conv_shapes(xv, fv, "conv_valid")
    windows = _conv_windows(xv, ell, n)
    bv = value_of(bias)
    out = np.einsum("cdwl,cdl->w", windows, fv) + float(bv)
    tape = _tape_of(x, f, bias)
    if tape is None:
        return out

    def backward(g):
        if isinstance(f, Node):
            _accum(f, np.einsum("cdwl,w->cdl", windows, g))
        if isinstance(x, Node):
            gx = np.zeros_like(xv)
            w = n - ell + 1
            for j in range(ell):
                gx[:, :, j:j + w] += fv[:, :, j][:, :, None] * g
            _accum(x, gx)
        if isinstance(bias, Node):
            _accum(bias, np.asarray(g.sum()).reshape(value_of(bias).shape))

    return tape._record(out, backward)


def conv_bank(x, filters, biases):
    """Apply m filters (m, C, d, l) to one (C, d, n) input: out is (m, n-l+1)."""
    xv, fv, bv = value_of(x), value_of(filters), value_of(biases)
    if fv.ndim != 4:
        raise DimensionError(f"conv_bank: filters must be (m, channels, d, len), got {fv.shape}")
    ell, n = _check_conv_shapes(xv, fv[0], "conv_bank")
    if bv.shape != (fv.shape[0],):
        raise DimensionError(f"conv_bank: biases {bv.shape} do not match filter count {fv.shape[0]}")
    windows = _conv_windows(xv, ell, n)
    out = np.einsum("cdwl,mcdl->mw", windows, fv) + bv[:, None]
    tape = _tape_of(x, filters, biases)
    if tape is None:
        return out

    def backward(g):
        if isinstance(filters, Node):
            _accum(filters, np.einsum("cdwl,mw->mcdl", windows, g))
        if isinstance(x, Node):
            gx = np.zeros_like(xv)
            w = n - ell + 1
            for j in range(ell):
                gx[:, :, j:j + w] += np.einsum("mcd,mw->cdw", fv[:, :, :, j], g)
            _accum(x, gx)
        if isinstance(biases, Node):
            _accum(biases, g.sum(axis=1))

    return tape._record(out, backward)


def max_over_time(x):
    """Max of a feature vector plus its argmax (first occurrence on ties).

    The backward pass routes the whole gradient to the argmax position.
    """
    xv = value_of(x)
    if xv.ndim != 1 or xv.size == 0:
        raise ContractViolation(f"max_over_time needs a non-empty vector, got shape {xv.shape}")
    idx = int(np.argmax(xv))
    out = np.asarray(xv[idx])
    tape = _tape_of(x)
    if tape is None:
        return out, idx

    def backward(g):
        gx = np.zeros_like(xv)
        gx[idx] = g
        _accum(x, gx)

    return tape._record(out, backward), idx


def rowmax(x):
    """Per-row max of an (m, w) feature map; gradient goes to each row argmax."""
    xv = value_of(x)
    if xv.ndim != 2 or xv.shape[1] == 0:
        raise ContractViolation(f"rowmax needs a non-empty (m, w) matrix, got shape {xv.shape}")
    idx = np.argmax(xv, axis=1)
    out = xv[np.arange(xv.shape[0]), idx].copy()
    tape = _tape_of(x)
    if tape is None:
        return out

    def backward(g):
        gx = np.zeros_like(xv)
        gx[np.arange(xv.shape[0]), idx] = g
        _accum(x, gx)

    return tape._record(out, backward)


# ---------------------------------------------------------------------------
# reductions and glue

def softmax(x):
    """Probability vector from scores, computed with max-subtraction."""
    xv = value_of(x)
    if xv.ndim != 1 or xv.size == 0:
        raise ContractViolation(f"softmax needs a non-empty vector, got shape {xv.shape}")
    if not np.all(np.isfinite(xv)):
        raise NumericError("softmax: scores contain NaN or infinity")
    e = np.exp(xv - xv.max())
    out = e / e.sum()
    tape = _tape_of(x)
    if tape is None:
        return out

    def backward(g):
        _accum(x, out * (g - np.dot(g, out)))

    return tape._record(out, backward)


def concat(xs):
    """Concatenate 1-d vectors into one vector."""
    vals = [value_of(x) for x in xs]
    for v in vals:
        if v.ndim != 1:
            raise DimensionError(f"concat: expected vectors, got shape {v.shape}")
    out = np.concatenate(vals) if vals else np.zeros(0)
    tape = _tape_of(*xs)
    if tape is None:
        return out

    sizes = [v.shape[0] for v in vals]

    def backward(g):
        off = 0
        for x, size in zip(xs, sizes):
            _accum(x, g[off:off + size])
            off += size

    return tape._record(out, backward)


def stack_cols(xs):
    """Stack length-d vectors as the columns of a (d, N) matrix."""
    vals = [value_of(x) for x in xs]
    if not vals:
        raise ContractViolation("stack_cols needs at least one vector")
    d = vals[0].shape[0]
    for v in vals:
        if v.shape != (d,):
            raise DimensionError(f"stack_cols: expected ({d},) vectors, got shape {v.shape}")
    out = np.stack(vals, axis=1)
    tape = _tape_of(*xs)
    if tape is None:
        return out

    def backward(g):
        for j, x in enumerate(xs):
            _accum(x, g[:, j])

    return tape._record(out, backward)


def mean(x):
    """Scalar mean over all entries."""
    xv = value_of(x)
    if xv.size == 0:
        raise ContractViolation("mean of an empty array")
    out = np.asarray(xv.mean())
    tape = _tape_of(x)
    if tape is None:
        return out

    def backward(g):
        _accum(x, np.full_like(xv, float(g) / xv.size))

    return tape._record(out, backward)


def sumsq(x):
    """Scalar sum of squared entries."""
    xv = value_of(x)
    out = np.asarray(np.sum(xv * xv))
    tape = _tape_of(x)
    if tape is None:
        return out

    def backward(g):
        _accum(x, 2.0 * float(g) * xv)

    return tape._record(out, backward)


def row_dot(a, b):
    """Rowwise dot product of two (B, k) matrices, giving a (B,) vector."""
    av, bv = value_of(a), value_of(b)
    _same_shape(av, bv, "row_dot")
    if av.ndim != 2:
        raise DimensionError(f"row_dot: expected matrices, got shape {av.shape}")
    out = np.sum(av * bv, axis=1)
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def backward(g):
        _accum(a, g[:, None] * bv)
        _accum(b, g[:, None] * av)

    return tape._record(out, backward)


def row_sumsq(x):
    """Rowwise squared norm of a (B, k) matrix, giving a (B,) vector."""
    xv = value_of(x)
    if xv.ndim != 2:
        raise DimensionError(f"row_sumsq: expected a matrix, got shape {xv.shape}")
    out = np.sum(xv * xv, axis=1)
    tape = _tape_of(x)
    if tape is None:
        return out

    def backward(g):
        _accum(x, 2.0 * g[:, None] * xv)

    return tape._record(out, backward)


def logistic_loss(logits, labels):
    """Per-element binary cross-entropy of logits against 0/1 labels.

    The probability is clamped to [1e-9, 1 - 1e-9] before the logarithm, so
    the loss is always finite; the gradient uses the exact unclamped form
    sigmoid(z) - y (the clamp only binds beyond |z| ~ 20.7).
    """
    zv = value_of(logits)
    yv = value_of(labels)
    _same_shape(zv, yv, "logistic_loss")
    p = np.clip(_stable_sigmoid(zv), 1e-9, 1.0 - 1e-9)
    out = -(yv * np.log(p) + (1.0 - yv) * np.log(1.0 - p))
    tape = _tape_of(logits)
    if tape is None:
        return out

    def backward(g):
        _accum(logits, g * (_stable_sigmoid(zv) - yv))

    return tape._record(out, backward)


# ---------------------------------------------------------------------------
# gradient checking

def finite_difference_check(build, params, step=1e-5):
    """Compare tape gradients with central finite differences.

    `build(nodes, tape)` must return a scalar loss, where `nodes` maps each
    name in `params` to a tracked Node (tape pass) or to the plain array
    (numeric passes).  Returns the worst relative error over all parameters,
    measured as ||analytic - numeric|| / max(||analytic||, ||numeric||).
    """
    tape = Tape()
    nodes = {name: tape.param(v) for name, v in params.items()}
    loss = build(nodes, tape)
    tape.backward(loss)
    analytic = {name: nodes[name].grad_or_zeros() for name in params}

    worst = 0.0
    for name, base in params.items():
        work = {k: np.asarray(v, dtype=np.float64).copy() for k, v in params.items()}
        numeric = np.zeros_like(work[name])
        flat = work[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = float(value_of(build(work, None)))
            flat[i] = orig - step
            down = float(value_of(build(work, None)))
            flat[i] = orig
            numeric.reshape(-1)[i] = (up - down) / (2.0 * step)
        a, n = analytic[name], numeric
        scale = max(np.linalg.norm(a), np.linalg.norm(n))
        if scale < 1e-10:
            continue  # both gradients are zero to working precision
        worst = max(worst, np.linalg.norm(a - n) / scale)
    return worst
