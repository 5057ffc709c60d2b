"""Dense tensors with reverse-mode gradients and the Adam optimizer.

Every operation records itself on the active `Tape` when at least one of its
inputs requires a gradient. Outside a tape the same functions are plain
numpy evaluations.
"""

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ShapeError


_local = threading.local()


def _tapes():
    if not hasattr(_local, 'stack'):
        _local.stack = []
    return _local.stack


class Tensor:
    """A 2-d float64 array with an optional gradient accumulator."""

    # numpy defers binary operators to Tensor
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False):
        data = np.array(data, dtype=np.float64)
        if data.ndim == 0:
            data = data.reshape(1, 1)
        elif data.ndim == 1:
            data = data.reshape(-1, 1)
        elif data.ndim != 2:
            raise ShapeError(f"Tensor data must be at most 2-d, got shape {data.shape}")
        self.data = data
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.is_leaf = True

    @classmethod
    def _wrap(cls, data, requires_grad):
        t = cls.__new__(cls)
        t.data = data
        t.requires_grad = requires_grad
        t.grad = None
        t.is_leaf = False
        return t

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> 'Tensor':
        return Tensor._wrap(self.data, False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


def as_tensor(x) -> Tensor:
    """Return `x` unchanged if it is a Tensor, else wrap it as a constant."""
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


@dataclass
class TapeRecord:
    op: str
    inputs: tuple
    output: Tensor
    backward: Callable


class Tape:
    """Ordered record of executed operations.

    Use as a context manager around the forward pass, then call `backward`
    on the scalar loss. Gradients of leaf tensors accumulate additively in
    their `grad` attribute.
    """

    def __init__(self):
        self.records = []

    def __enter__(self):
        _tapes().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _tapes().pop()
        return False

    def record(self, op, inputs, output, backward):
        self.records.append(TapeRecord(op, tuple(inputs), output, backward))

    def backward(self, loss: Tensor):
        if loss.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
        pending = {id(loss): np.ones_like(loss.data)}
        for rec in reversed(self.records):
            g = pending.pop(id(rec.output), None)
            if g is None:
                continue
            for t, gi in zip(rec.inputs, rec.backward(g)):
                if gi is None or not isinstance(t, Tensor) or not t.requires_grad:
                    continue
                if t.is_leaf:
                    t.grad = gi.copy() if t.grad is None else t.grad + gi
                elif id(t) in pending:
                    pending[id(t)] = pending[id(t)] + gi
                else:
                    pending[id(t)] = gi
        if loss.is_leaf and loss.requires_grad:
            loss.grad = np.ones_like(loss.data) if loss.grad is None else loss.grad + 1.0


def _emit(op, inputs, data, backward):
    requires_grad = any(isinstance(t, Tensor) and t.requires_grad for t in inputs)
    out = Tensor._wrap(data, requires_grad)
    stack = _tapes()
    if requires_grad and stack:
        stack[-1].record(op, inputs, out, backward)
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _check_broadcast(a, b, op):
    ra, ca = a.shape
    rb, cb = b.shape
    if not ((ra == rb or ra == 1 or rb == 1) and (ca == cb or ca == 1 or cb == 1)):
        raise ShapeError(f"{op}: cannot combine shapes {a.shape} and {b.shape}")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, 'add')
    return _emit('add', (a, b), a.data + b.data,
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, 'sub')
    return _emit('sub', (a, b), a.data - b.data,
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, 'mul')
    return _emit('mul', (a, b), a.data * b.data,
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _emit('scale', (a,), a.data * c, lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    return _emit('matmul', (a, b), a.data @ b.data,
                 lambda g: (g @ b.data.T, a.data.T @ g))


def linear(x, w, b) -> Tensor:
    """Affine map x @ w + b with b broadcast over rows.

    Args:
        x (Tensor): N x d input.
        w (Tensor): d x h weight.
        b (Tensor): 1 x h bias.

    Returns:
        Tensor: N x h output.
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"linear: input width {x.shape[1]} does not match weight rows {w.shape[0]}")
    if b.shape != (1, w.shape[1]):
        raise ShapeError(f"linear: bias shape {b.shape} should be (1, {w.shape[1]})")
    return _emit('linear', (x, w, b), x.data @ w.data + b.data,
                 lambda g: (g @ w.data.T, x.data.T @ g, g.sum(axis=0, keepdims=True)))


def relu(x) -> Tensor:
    x = as_tensor(x)
    keep = x.data > 0
    return _emit('relu', (x,), np.where(keep, x.data, 0.0), lambda g: (g * keep,))


def _seed_tuple(seed):
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    flat = []
    for s in seed:
        flat.extend(_seed_tuple(s))
    return tuple(flat)


def dropout(x, p: float, seed, training: bool) -> Tensor:
    """Inverted dropout with a mask drawn from `seed`.

    Kept units are scaled by 1/(1-p) so the expectation is unchanged. At
    evaluation time, or when p is 0, the input is returned as is.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    x = as_tensor(x)
    if not training or p == 0.0:
        return x
    rng = np.random.default_rng(list(_seed_tuple(seed)))
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return _emit('dropout', (x,), x.data * mask, lambda g: (g * mask,))


def log_softmax(z):
    """Row-wise log-softmax of a plain array, shifted by the row maximum."""
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_rows(x) -> Tensor:
    x = as_tensor(x)
    s = np.exp(log_softmax(x.data))

    def backward(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return _emit('softmax_rows', (x,), s, backward)


def _rows(mask, n):
    if mask is None:
        return np.arange(n)
    mask = np.asarray(mask)
    if mask.dtype == bool:
        if mask.shape != (n,):
            raise ShapeError(f"boolean mask has shape {mask.shape}, expected ({n},)")
        rows = np.flatnonzero(mask)
    else:
        rows = mask.astype(np.int64).ravel()
    if rows.size == 0:
        raise ValueError("mask selects no rows")
    return rows


def cross_entropy(logits, target, mask=None) -> Tensor:
    """Mean over masked rows of -sum_c target_c * log softmax(logits)_c.

    Args:
        logits (Tensor): N x C scores.
        target: integer class indices of length N (hard labels), or an N x C
            row-stochastic matrix, given as an array or as a Tensor. A Tensor
            target receives gradients too.
        mask: row indices or a boolean row mask. None selects every row.

    Returns:
        Tensor: 1 x 1 loss.
    """
    logits = as_tensor(logits)
    n, c = logits.shape
    rows = _rows(mask, n)
    if not np.all(np.isfinite(logits.data[rows])):
        raise ValueError("cross_entropy received non-finite logits")

    if isinstance(target, Tensor):
        soft = target
        if soft.shape != logits.shape:
            raise ShapeError(f"soft target shape {soft.shape} does not match logits {logits.shape}")
        t = soft.data[rows]
    else:
        target = np.asarray(target)
        soft = None
        if target.ndim == 1:
            if target.shape[0] != n:
                raise ShapeError(f"{target.shape[0]} labels for {n} rows")
            labels = target[rows].astype(np.int64)
            bad = (labels < 0) | (labels >= c)
            if bad.any():
                row = int(rows[bad][0])
                raise ValueError(f"labels must lie in [0, {c}); row {row} has label {int(target[row])}")
            t = np.zeros((rows.size, c))
            t[np.arange(rows.size), labels] = 1.0
        else:
            if target.shape != logits.shape:
                raise ShapeError(f"soft target shape {target.shape} does not match logits {logits.shape}")
            t = target[rows].astype(np.float64)

    lsm = log_softmax(logits.data[rows])
    count = rows.size
    value = -(t * lsm).sum() / count

    def backward(g):
        g = g[0, 0]
        g_logits = np.zeros_like(logits.data)
        g_logits[rows] = (np.exp(lsm) * t.sum(axis=1, keepdims=True) - t) * (g / count)
        g_target = None
        if soft is not None:
            g_target = np.zeros_like(soft.data)
            g_target[rows] = -lsm * (g / count)
        return g_logits, g_target

    return _emit('cross_entropy', (logits, soft), np.array([[value]]), backward)


def mse(pred, target, mask=None) -> Tensor:
    """Mean over masked entries of (pred - target)**2.

    `target` may be an array or a Tensor; a Tensor target receives gradients.
    """
    pred = as_tensor(pred)
    soft = target if isinstance(target, Tensor) else None
    t = target.data if soft is not None else np.asarray(target, dtype=np.float64)
    if t.ndim == 1:
        t = t.reshape(-1, 1)
    if t.shape != pred.shape:
        raise ShapeError(f"mse: prediction {pred.shape} and target {t.shape} differ")
    rows = _rows(mask, pred.shape[0])
    diff = pred.data[rows] - t[rows]
    count = diff.size
    value = (diff * diff).sum() / count

    def backward(g):
        g = g[0, 0]
        g_pred = np.zeros_like(pred.data)
        g_pred[rows] = 2.0 * diff * (g / count)
        g_target = None
        if soft is not None:
            g_target = np.zeros_like(t)
            g_target[rows] = -2.0 * diff * (g / count)
        return g_pred, g_target

    return _emit('mse', (pred, soft), np.array([[value]]), backward)


def sparse_matmul(m, x) -> Tensor:
    """Product of a constant sparse matrix with a dense tensor.

    Only the dense operand receives a gradient.
    """
    x = as_tensor(x)
    s = m.to_scipy() if hasattr(m, 'to_scipy') else m
    if s.shape[1] != x.shape[0]:
        raise ShapeError(f"sparse_matmul: matrix {s.shape} cannot multiply {x.shape}")
    return _emit('sparse_matmul', (x,), np.asarray(s @ x.data), lambda g: (np.asarray(s.T @ g),))


def weighted_sum(blocks: Sequence, coeffs) -> Tensor:
    """sum_k coeffs[k] * blocks[k] for equally shaped blocks."""
    blocks = [as_tensor(b) for b in blocks]
    coeffs = as_tensor(coeffs)
    if coeffs.data.size != len(blocks):
        raise ShapeError(f"weighted_sum: {coeffs.data.size} coefficients for {len(blocks)} blocks")
    c = coeffs.data.reshape(-1)
    out = c[0] * blocks[0].data
    for k in range(1, len(blocks)):
        out = out + c[k] * blocks[k].data

    def backward(g):
        g_blocks = [c[k] * g for k in range(len(blocks))]
        g_coeffs = np.array([(g * b.data).sum() for b in blocks]).reshape(coeffs.shape)
        return (*g_blocks, g_coeffs)

    return _emit('weighted_sum', (*blocks, coeffs), out, backward)


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    return _emit('sum_all', (x,), np.array([[x.data.sum()]]), lambda g: (np.full_like(x.data, g[0, 0]),))


def finite_difference_grad(fn, tensor: Tensor, h=1e-5) -> np.ndarray:
    """Central-difference gradient of the scalar `fn()` with respect to `tensor`."""
    grad = np.zeros_like(tensor.data)
    for idx in np.ndindex(*tensor.data.shape):
        orig = tensor.data[idx]
        tensor.data[idx] = orig + h
        up = fn().item()
        tensor.data[idx] = orig - h
        down = fn().item()
        tensor.data[idx] = orig
        grad[idx] = (up - down) / (2 * h)
    return grad


def gradient_check(fn, tensors: dict, h=1e-5, rtol=1e-4, atol=1e-8) -> dict:
    """Compare tape gradients of the scalar `fn()` against central differences.

    Returns:
        dict: name -> largest violation ratio |analytic - numeric| / (atol + rtol*|numeric|).
            A value at or below 1 passes.
    """
    for t in tensors.values():
        t.zero_grad()
    with Tape() as tape:
        loss = fn()
    tape.backward(loss)
    report = {}
    for name, t in tensors.items():
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = finite_difference_grad(fn, t, h)
        ratio = np.abs(analytic - numeric) / (atol + rtol * np.maximum(np.abs(numeric), np.abs(analytic)))
        report[name] = float(ratio.max()) if ratio.size else 0.0
    return report


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, state: AdamState):
    """One bias-corrected Adam update with decoupled weight decay, in place.

    A parameter without a gradient is treated as having a zero gradient.
    """
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient of {name} has shape {g.shape}, parameter {p.data.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        if state.weight_decay:
            p.data *= 1.0 - state.lr * state.weight_decay
        p.data -= (state.lr / bc1) * m / (np.sqrt(v / bc2) + state.epsilon)
    return params, state
