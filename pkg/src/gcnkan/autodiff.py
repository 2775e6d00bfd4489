"""Reverse-mode differentiation over the fixed operation set the model
needs: matmul, elementwise add/sub/mul, ReLU, the grid-ReLU contraction,
columnwise max selection, reductions, and a stabilized cross-entropy head.

Values are plain float64 numpy arrays. A forward pass that should be
differentiated runs against a Tape: leaves (parameters and inputs) are
lifted onto the tape with `tape.leaf`, every operation consuming a taped
Tensor appends a record, and `backward(tape, loss)` replays the records in
reverse to produce one gradient per leaf. Operations whose inputs are all
raw ndarrays skip recording entirely, so inference pays no tape overhead.

Gradient conventions: the ReLU (and grid-ReLU basis) subgradient at exactly
zero is zero, and columnwise max routes its gradient to the lowest row
index among ties. Both keep gradients deterministic.
"""

import numpy as np

from . import kernels
from .errors import EvaluationError, ShapeError, TapeUsageError


class Tensor:
    """A float64 array bound to a tape during a differentiable forward pass."""

    __slots__ = ("data", "tape")

    def __init__(self, data, tape):
        self.data = data
        self.tape = tape

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


class Tape:
    """Ordered record of primitive operations from one forward pass.

    Leaves created with `leaf` are registered: backward() reports a gradient
    for each of them, exactly zero when the leaf never reaches the loss.
    """

    def __init__(self):
        self._records = []  # (out Tensor, backward closure), forward order
        self._leaves = []

    def leaf(self, array, name=None):
        t = Tensor(np.asarray(array, dtype=np.float64), self)
        self._leaves.append(t)
        return t

    def _record(self, out_data, back):
        out = Tensor(out_data, self)
        self._records.append((out, back))
        return out

    def __len__(self):
        return len(self._records)


def backward(tape, loss):
    """Reverse sweep from a scalar loss; returns {leaf Tensor: gradient}.

    Every leaf registered on the tape gets an entry; leaves that do not
    influence the loss get an exactly-zero array.
    """
    if not isinstance(loss, Tensor) or loss.tape is not tape:
        raise TapeUsageError("loss was not produced under this tape")
    if loss.data.size != 1:
        raise TapeUsageError(f"loss must be scalar, got shape {loss.data.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    for out, back in reversed(tape._records):
        g = grads.get(id(out))
        if g is None:
            continue
        back(g, grads)
    return {
        leaf: grads.get(id(leaf), np.zeros_like(leaf.data)) for leaf in tape._leaves
    }


def _acc(grads, tensor, value):
    key = id(tensor)
    if key in grads:
        grads[key] += value
    else:
        # value is freshly allocated by every backward closure, so owning it is safe
        grads[key] = value


def _raw(x):
    return x.data if isinstance(x, Tensor) else x


def _tape_of(*xs):
    tape = None
    for x in xs:
        if isinstance(x, Tensor):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise TapeUsageError("operands come from different tapes")
    return tape


# ---------------------------------------------------------------------------
# primitive operations


def matmul(a, b):
    """Matrix product, recorded on the operands' tape when one exists."""
    da, db = _raw(a), _raw(b)
    if da.ndim != 2 or db.ndim != 2 or da.shape[1] != db.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {da.shape} by {db.shape}")
    out = da @ db
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def back(g, grads):
        if isinstance(a, Tensor):
            _acc(grads, a, g @ db.T)
        if isinstance(b, Tensor):
            _acc(grads, b, da.T @ g)

    return tape._record(out, back)


def add(a, b):
    da, db = _raw(a), _raw(b)
    if da.shape != db.shape:
        raise ShapeError(f"add: shape {da.shape} vs {db.shape}")
    out = da + db
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def back(g, grads):
        if isinstance(a, Tensor):
            _acc(grads, a, g.copy())
        if isinstance(b, Tensor):
            _acc(grads, b, g.copy())

    return tape._record(out, back)


def sub(a, b):
    da, db = _raw(a), _raw(b)
    if da.shape != db.shape:
        raise ShapeError(f"sub: shape {da.shape} vs {db.shape}")
    out = da - db
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def back(g, grads):
        if isinstance(a, Tensor):
            _acc(grads, a, g.copy())
        if isinstance(b, Tensor):
            _acc(grads, b, -g)

    return tape._record(out, back)


def mul(a, b):
    """Elementwise product; either operand may be a constant array."""
    da, db = _raw(a), _raw(b)
    if da.shape != db.shape:
        raise ShapeError(f"mul: shape {da.shape} vs {db.shape}")
    out = da * db
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def back(g, grads):
        if isinstance(a, Tensor):
            _acc(grads, a, g * db)
        if isinstance(b, Tensor):
            _acc(grads, b, g * da)

    return tape._record(out, back)


def scale(a, s):
    """Multiply by a python scalar."""
    da = _raw(a)
    out = da * s
    tape = _tape_of(a)
    if tape is None:
        return out

    def back(g, grads):
        _acc(grads, a, g * s)

    return tape._record(out, back)


def shift_scale(a, shift, scale_row):
    """(a - shift) * scale_row with constant shift/scale, broadcast by numpy.

    The constants carry no gradient: this is how frozen normalization
    statistics enter the graph.
    """
    da = _raw(a)
    out = (da - shift) * scale_row
    tape = _tape_of(a)
    if tape is None:
        return out

    def back(g, grads):
        _acc(grads, a, g * scale_row)

    return tape._record(out, back)


def relu(a):
    da = _raw(a)
    out = np.maximum(da, 0.0)
    tape = _tape_of(a)
    if tape is None:
        return out
    mask = da > 0.0  # subgradient at 0 is 0

    def back(g, grads):
        _acc(grads, a, g * mask)

    return tape._record(out, back)


def kan_combine(h, coeffs, grid):
    """Grid-ReLU contraction (see gcnkan.kernels); h and/or coeffs may be taped."""
    dh, dc = _raw(h), _raw(coeffs)
    if dh.ndim != 2 or dc.ndim != 3 or dh.shape[1] != dc.shape[1]:
        raise ShapeError(f"kan_combine: input {dh.shape} vs coeffs {dc.shape}")
    out = kernels.kan_forward(dh, dc, grid)
    tape = _tape_of(h, coeffs)
    if tape is None:
        return out

    def back(g, grads):
        grad_h, grad_c = kernels.kan_backward(dh, dc, grid, g)
        if isinstance(h, Tensor):
            _acc(grads, h, grad_h)
        if isinstance(coeffs, Tensor):
            _acc(grads, coeffs, grad_c)

    return tape._record(out, back)


def col_max(a):
    """Columnwise maximum over rows, returned as a (1, F) row.

    The gradient flows only to the first (lowest-index) argmax row of each
    column.
    """
    da = _raw(a)
    if da.ndim != 2 or da.shape[0] < 1:
        raise ShapeError(f"col_max: need a nonempty 2-d array, got {da.shape}")
    idx = np.argmax(da, axis=0)  # first occurrence wins ties
    cols = np.arange(da.shape[1])
    out = da[idx, cols][None, :]
    tape = _tape_of(a)
    if tape is None:
        return out

    def back(g, grads):
        z = np.zeros_like(da)
        z[idx, cols] = g[0]
        _acc(grads, a, z)

    return tape._record(out, back)


def sum_all(a):
    da = _raw(a)
    out = np.asarray(da.sum())
    tape = _tape_of(a)
    if tape is None:
        return out

    def back(g, grads):
        _acc(grads, a, np.full_like(da, float(g)))

    return tape._record(out, back)


def mean_all(a):
    da = _raw(a)
    out = np.asarray(da.mean())
    tape = _tape_of(a)
    if tape is None:
        return out
    inv = 1.0 / da.size

    def back(g, grads):
        _acc(grads, a, np.full_like(da, float(g) * inv))

    return tape._record(out, back)


def cross_entropy_logits(logits, label):
    """Softmax negative log-likelihood of `label`, stabilized by max
    subtraction; scalar output."""
    dl = _raw(logits)
    z = dl.ravel()
    if not 0 <= label < z.size:
        raise ShapeError(f"label {label} out of range for {z.size} logits")
    m = z.max()
    shifted = z - m
    lse = m + np.log(np.exp(shifted).sum())
    out = np.asarray(lse - z[label])
    tape = _tape_of(logits)
    if tape is None:
        return out
    p = np.exp(shifted)
    p /= p.sum()

    def back(g, grads):
        gz = p.copy()
        gz[label] -= 1.0
        _acc(grads, logits, float(g) * gz.reshape(dl.shape))

    return tape._record(out, back)


# ---------------------------------------------------------------------------
# finite-difference oracle


def finite_diff_grad(f, theta, h=1e-5):
    """Central-difference gradient of a scalar function of an array.

    Independent of the tape machinery; used as ground truth for gradient
    checks. Raises EvaluationError (naming the flat coordinate) if f
    returns a non-finite value at a probe point.
    """
    if h <= 0:
        raise ValueError("finite_diff_grad: h must be positive")
    theta = np.asarray(theta, dtype=np.float64)
    flat = theta.ravel()
    grad = np.empty_like(flat)
    for i in range(flat.size):
        probe = flat.copy()
        probe[i] = flat[i] + h
        f_plus = float(f(probe.reshape(theta.shape)))
        probe[i] = flat[i] - h
        f_minus = float(f(probe.reshape(theta.shape)))
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise EvaluationError(f"non-finite evaluation at coordinate {i}")
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad.reshape(theta.shape)
