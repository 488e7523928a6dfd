"""Minimal tape-based reverse-mode differentiation over numpy arrays.

Every forward pass records onto a Tape; backward() replays the tape in
reverse, accumulating vector-Jacobian products. Values are float64 ndarrays
(0-d scalars, 1-d vectors, or 2-d matrices). Parameters enter as named leaves
cached per tape, so repeated use of a weight accumulates into one gradient.

A Tape built with record=False runs the same forward code without storing
closures, for inference.
"""

from __future__ import annotations

import numpy as np


class Var:
    __slots__ = ("value", "grad", "vjp", "tape")

    def __init__(self, value: np.ndarray, tape: "Tape", vjp=None):
        self.value = value
        self.grad = None
        self.vjp = vjp
        self.tape = tape

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


class Tape:
    def __init__(self, record: bool = True):
        self.record = record
        self.nodes: list[Var] = []
        self._params: dict[str, Var] = {}

    def node(self, value: np.ndarray, vjp=None) -> Var:
        if not self.record:
            return Var(value, self)
        var = Var(value, self, vjp)
        self.nodes.append(var)
        return var

    def leaf(self, value) -> Var:
        var = Var(np.asarray(value, dtype=np.float64), self)
        if self.record:
            self.nodes.append(var)
        return var

    def param(self, name: str, value: np.ndarray) -> Var:
        """Named leaf, cached so every use shares one gradient slot."""
        var = self._params.get(name)
        if var is None:
            var = self.leaf(value)
            self._params[name] = var
        return var

    def backward(self, loss: Var) -> None:
        if not self.record:
            raise RuntimeError("cannot backprop through a non-recording tape")
        if loss.tape is not self:
            raise RuntimeError("loss does not belong to this tape")
        loss.grad = np.ones_like(loss.value)
        for var in reversed(self.nodes):
            if var.grad is not None and var.vjp is not None:
                var.vjp(var.grad)

    def param_grads(self) -> dict[str, np.ndarray]:
        out = {}
        for name, var in self._params.items():
            out[name] = var.grad if var.grad is not None else np.zeros_like(var.value)
        return out


def _accum(var, g) -> None:
    if isinstance(var, Var):
        if var.grad is None:
            # copy: g may be shared with (or be a view into) another gradient
            var.grad = g.copy()
        else:
            var.grad += g


accumulate_grad = _accum   # for custom ops defined outside this module


def _value(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _tape_of(*args) -> Tape:
    for a in args:
        if isinstance(a, Var):
            return a.tape
    raise TypeError("at least one operand must be a Var")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Var:
    tape = _tape_of(a, b)
    av, bv = _value(a), _value(b)
    out = tape.node(av + bv)

    def vjp(g):
        _accum(a, _unbroadcast(g, av.shape))
        _accum(b, _unbroadcast(g, bv.shape))

    out.vjp = vjp if tape.record else None
    return out


def sub(a, b) -> Var:
    tape = _tape_of(a, b)
    av, bv = _value(a), _value(b)
    out = tape.node(av - bv)

    def vjp(g):
        _accum(a, _unbroadcast(g, av.shape))
        _accum(b, _unbroadcast(-g, bv.shape))

    out.vjp = vjp if tape.record else None
    return out


def mul(a, b) -> Var:
    tape = _tape_of(a, b)
    av, bv = _value(a), _value(b)
    out = tape.node(av * bv)

    def vjp(g):
        _accum(a, _unbroadcast(g * bv, av.shape))
        _accum(b, _unbroadcast(g * av, bv.shape))

    out.vjp = vjp if tape.record else None
    return out


def scale(a: Var, c: float) -> Var:
    out = a.tape.node(a.value * c)

    def vjp(g):
        _accum(a, g * c)

    out.vjp = vjp if a.tape.record else None
    return out


def matmul(a, b) -> Var:
    tape = _tape_of(a, b)
    av, bv = _value(a), _value(b)
    out = tape.node(av @ bv)

    def vjp(g):
        _accum(a, g @ bv.T)
        _accum(b, av.T @ g)

    out.vjp = vjp if tape.record else None
    return out


def concat(parts: list, axis: int = 1) -> Var:
    tape = _tape_of(*parts)
    values = [_value(p) for p in parts]
    out = tape.node(np.concatenate(values, axis=axis))
    offsets = np.cumsum([0] + [v.shape[axis] for v in values])

    def vjp(g):
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(part, g[tuple(sl)])

    out.vjp = vjp if tape.record else None
    return out


def take_rows(a: Var, idx) -> Var:
    idx = np.asarray(idx, dtype=np.int64)
    out = a.tape.node(a.value[idx])

    def vjp(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.value)
        np.add.at(a.grad, idx, g)

    out.vjp = vjp if a.tape.record else None
    return out


def tile_rows(a: Var, n: int) -> Var:
    """Repeat a (1,d) row n times; gradient sums back over rows."""
    out = a.tape.node(np.broadcast_to(a.value, (n, a.value.shape[1])).copy())

    def vjp(g):
        _accum(a, g.sum(axis=0, keepdims=True))

    out.vjp = vjp if a.tape.record else None
    return out


def reshape(a: Var, shape: tuple) -> Var:
    out = a.tape.node(a.value.reshape(shape))

    def vjp(g):
        _accum(a, g.reshape(a.value.shape))

    out.vjp = vjp if a.tape.record else None
    return out


def sigmoid(a: Var) -> Var:
    val = 1.0 / (1.0 + np.exp(-a.value))
    out = a.tape.node(val)

    def vjp(g):
        _accum(a, g * val * (1.0 - val))

    out.vjp = vjp if a.tape.record else None
    return out


def tanh(a: Var) -> Var:
    val = np.tanh(a.value)
    out = a.tape.node(val)

    def vjp(g):
        _accum(a, g * (1.0 - val * val))

    out.vjp = vjp if a.tape.record else None
    return out


def relu(a: Var) -> Var:
    out = a.tape.node(np.maximum(a.value, 0.0))

    def vjp(g):
        _accum(a, g * (a.value > 0.0))

    out.vjp = vjp if a.tape.record else None
    return out


def absolute(a: Var) -> Var:
    out = a.tape.node(np.abs(a.value))

    def vjp(g):
        _accum(a, g * np.sign(a.value))

    out.vjp = vjp if a.tape.record else None
    return out


def sum_all(a: Var) -> Var:
    out = a.tape.node(np.asarray(a.value.sum()))

    def vjp(g):
        _accum(a, np.broadcast_to(g, a.value.shape).copy())

    out.vjp = vjp if a.tape.record else None
    return out


def sum_axis(a: Var, axis: int, keepdims: bool = True) -> Var:
    out = a.tape.node(a.value.sum(axis=axis, keepdims=keepdims))

    def vjp(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(gg, a.value.shape).copy())

    out.vjp = vjp if a.tape.record else None
    return out


def mean_rows(a: Var) -> Var:
    """Mean over axis 0, keeping a (1,d) row."""
    n = a.value.shape[0]
    out = a.tape.node(a.value.mean(axis=0, keepdims=True))

    def vjp(g):
        _accum(a, np.broadcast_to(g / n, a.value.shape).copy())

    out.vjp = vjp if a.tape.record else None
    return out


def softmax_rows(a: Var) -> Var:
    shifted = a.value - a.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    val = e / e.sum(axis=-1, keepdims=True)
    out = a.tape.node(val)

    def vjp(g):
        dot = (g * val).sum(axis=-1, keepdims=True)
        _accum(a, val * (g - dot))

    out.vjp = vjp if a.tape.record else None
    return out


def log_softmax_rows(a: Var) -> Var:
    shifted = a.value - a.value.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    val = shifted - lse
    out = a.tape.node(val)

    def vjp(g):
        softmax = np.exp(val)
        _accum(a, g - softmax * g.sum(axis=-1, keepdims=True))

    out.vjp = vjp if a.tape.record else None
    return out


def smooth_l1_rows(pred: Var, target: np.ndarray) -> Var:
    """Per-row smooth-L1: sum over coordinates of 0.5e^2 (|e|<1) else |e|-0.5."""
    t = _value(target)
    e = pred.value - t
    ae = np.abs(e)
    per = np.where(ae < 1.0, 0.5 * e * e, ae - 0.5)
    out = pred.tape.node(per.sum(axis=-1, keepdims=True))

    def vjp(g):
        de = np.where(ae < 1.0, e, np.sign(e))
        _accum(pred, g * de)

    out.vjp = vjp if pred.tape.record else None
    return out


def soft_cross_entropy(logits: Var, target: np.ndarray) -> Var:
    """-sum(target * log_softmax(logits)) over the last axis, summed to scalar."""
    logp = log_softmax_rows(logits)
    weighted = mul(logp, np.asarray(target, dtype=np.float64))
    return scale(sum_all(weighted), -1.0)
