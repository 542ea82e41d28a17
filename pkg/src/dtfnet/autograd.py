"""Define-by-run reverse-mode differentiation over numpy arrays.

Every differentiable function in the package accepts plain arrays or
:class:`Var` objects. With plain arrays it simply computes a value; as soon as
one argument is a ``Var`` the result is recorded on that variable's
:class:`Tape` together with a vector-Jacobian product closure, and
:func:`backward` replays the tape in reverse.

Complex quantities are stored with a trailing axis of length 2 holding
``(re, im)``; gradients treat the two planes as independent real numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import fft as _fft
from .errors import DetachedNode, NonFiniteValue, NonScalarLoss, ShapeMismatch
from .tensor import DEBUG, check_finite, inverse_permutation


@dataclass
class Node:
    kind: str
    inputs: tuple[int | None, ...]
    vjp: Callable | None
    requires_grad: bool


@dataclass
class Tape:
    nodes: list[Node] = field(default_factory=list)

    def var(self, value, requires_grad: bool = True) -> "Var":
        value = np.array(value, dtype=np.float64)
        v = Var(value, len(self.nodes), requires_grad, self)
        self.nodes.append(Node("leaf", (), None, requires_grad))
        return v

    def constant(self, value) -> "Var":
        return self.var(value, requires_grad=False)


class Var:
    __slots__ = ("value", "id", "requires_grad", "tape")
    __array_priority__ = 1000

    def __init__(self, value: np.ndarray, node_id: int, requires_grad: bool, tape: Tape):
        self.value = value
        self.id = node_id
        self.requires_grad = requires_grad
        self.tape = tape

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(id={self.id}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def record(kind: str, value: np.ndarray, inputs: Sequence, vjp: Callable):
    """Attach ``value`` to the tape of the first ``Var`` among ``inputs``.

    ``vjp(g)`` must return one gradient (or ``None``) per input, in order.
    Returns the bare array when no input is a ``Var``.
    """
    if DEBUG:
        check_finite(value, kind)
    tape = None
    for x in inputs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise DetachedNode(f"{kind}: inputs live on different tapes")
    if tape is None:
        return value
    ids = tuple(x.id if isinstance(x, Var) else None for x in inputs)
    needs = any(isinstance(x, Var) and x.requires_grad for x in inputs)
    out = Var(value, len(tape.nodes), needs, tape)
    tape.nodes.append(Node(kind, ids, vjp, needs))
    return out


def backward(loss: Var) -> dict[int, np.ndarray]:
    """Gradients of a scalar ``loss`` for every node that requires them."""
    if not isinstance(loss, Var):
        raise DetachedNode("loss is not recorded on any tape")
    if loss.value.size != 1:
        raise NonScalarLoss(f"loss has shape {loss.shape}")
    tape = loss.tape
    if loss.id >= len(tape.nodes):
        raise DetachedNode("loss id is not on its tape")
    grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.value)}
    for nid in range(loss.id, -1, -1):
        g = grads.get(nid)
        node = tape.nodes[nid]
        if g is None or node.vjp is None or not node.requires_grad:
            continue
        for src, gi in zip(node.inputs, node.vjp(g)):
            if src is None or gi is None or not tape.nodes[src].requires_grad:
                continue
            if src in grads:
                grads[src] = grads[src] + gi
            else:
                grads[src] = gi
    return {nid: g for nid, g in grads.items() if tape.nodes[nid].requires_grad}


def grad_check(f: Callable, inputs: Sequence[np.ndarray], eps: float = 1e-5) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    ``f`` maps its inputs to a scalar and must work both on ``Var`` and on
    plain arrays. The error for each coordinate is
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    tape = Tape()
    vs = [tape.var(x) for x in inputs]
    out = f(*vs)
    if not np.all(np.isfinite(value_of(out))):
        raise NonFiniteValue("function is not finite at the base point")
    grads = backward(out)
    worst = 0.0
    for i, x in enumerate(inputs):
        analytic = grads.get(vs[i].id, np.zeros_like(x))
        flat = x.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            fp = float(value_of(f(*inputs)))
            flat[j] = orig - eps
            fm = float(value_of(f(*inputs)))
            flat[j] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NonFiniteValue(f"non-finite value probing input {i}[{j}]")
            numeric = (fp - fm) / (2 * eps)
            a = float(analytic.ravel()[j])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# elementwise and structural primitives


def _same_shape(kind, a, b):
    if a.shape != b.shape:
        raise ShapeMismatch(f"{kind}: shapes {a.shape} and {b.shape} differ")


def add(a, b):
    av, bv = value_of(a), value_of(b)
    _same_shape("add", av, bv)
    return record("add", av + bv, [a, b], lambda g: (g, g))


def sub(a, b):
    av, bv = value_of(a), value_of(b)
    _same_shape("sub", av, bv)
    return record("sub", av - bv, [a, b], lambda g: (g, -g))


def mul(a, b):
    av, bv = value_of(a), value_of(b)
    _same_shape("mul", av, bv)
    return record("mul", av * bv, [a, b], lambda g: (g * bv, g * av))


def scale(a, c: float):
    av = value_of(a)
    return record("scale", av * c, [a], lambda g: (g * c,))


def square(a):
    av = value_of(a)
    return record("square", av * av, [a], lambda g: (2.0 * av * g,))


def relu(a):
    av = value_of(a)
    # subgradient at exactly 0 is 0
    mask = av > 0
    return record("relu", np.where(mask, av, 0.0), [a], lambda g: (g * mask,))


def sum(a, axis=None):  # noqa: A001 - mirrors numpy naming
    av = value_of(a)
    out = av.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return (np.full(av.shape, float(g)),)
        return (np.broadcast_to(np.expand_dims(g, axis), av.shape).copy(),)

    return record("sum", np.asarray(out, dtype=np.float64), [a], vjp)


def mean(a):
    av = value_of(a)
    n = av.size
    return record("mean", np.asarray(av.mean()), [a], lambda g: (np.full(av.shape, float(g) / n),))


def matmul(a, b):
    av, bv = value_of(a), value_of(b)
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeMismatch(f"matmul: {av.shape} x {bv.shape}")
    return record("matmul", av @ bv, [a, b], lambda g: (g @ bv.T, av.T @ g))


def reshape(a, shape):
    av = value_of(a)
    shape = tuple(shape)
    return record("reshape", av.reshape(shape), [a], lambda g: (g.reshape(av.shape),))


def permute(a, axes):
    av = value_of(a)
    axes = tuple(axes)
    inv = inverse_permutation(axes)
    out = np.ascontiguousarray(np.transpose(av, axes))
    return record("permute", out, [a], lambda g: (np.ascontiguousarray(np.transpose(g, inv)),))


def concat(parts: Sequence, axis: int):
    vals = [value_of(p) for p in parts]
    sizes = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def vjp(g):
        return tuple(np.split(g, sizes, axis=axis))

    return record("concat", np.concatenate(vals, axis=axis), list(parts), vjp)


def repeat(a, repeats: int, axis: int):
    """Repeat each entry ``repeats`` times along ``axis`` (contiguous blocks)."""
    av = value_of(a)
    ax = axis % av.ndim

    def vjp(g):
        shp = av.shape[:ax] + (av.shape[ax], repeats) + av.shape[ax + 1:]
        return (g.reshape(shp).sum(axis=ax + 1),)

    return record("repeat", np.repeat(av, repeats, axis=ax), [a], vjp)


def broadcast_to(a, shape):
    """Explicit broadcast of a same-rank array whose broadcast axes have extent 1."""
    av = value_of(a)
    shape = tuple(shape)
    if av.ndim != len(shape) or any(s != 1 and s != t for s, t in zip(av.shape, shape)):
        raise ShapeMismatch(f"cannot broadcast {av.shape} to {shape}")
    axes = tuple(i for i, (s, t) in enumerate(zip(av.shape, shape)) if s == 1 and t != 1)
    out = np.broadcast_to(av, shape).copy()
    return record("broadcast", out, [a], lambda g: (g.sum(axis=axes, keepdims=True),))


def take(a, index, axis: int):
    """Select positions ``index`` (int or sequence) along ``axis``."""
    av = value_of(a)
    idx = np.atleast_1d(np.asarray(index, dtype=np.intp))
    out = np.take(av, idx, axis=axis)

    def vjp(g):
        full = np.zeros_like(av)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return (full,)

    return record("take", out, [a], vjp)


def softmax(a, axis: int, mask=None):
    """Max-stabilized softmax; positions where ``mask`` is False get weight 0."""
    av = value_of(a)
    if mask is None:
        shifted = av - av.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
    else:
        mask = np.broadcast_to(mask, av.shape)
        m = np.where(mask, av, -np.inf).max(axis=axis, keepdims=True)
        e = np.where(mask, np.exp(np.where(mask, av - m, 0.0)), 0.0)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return record("softmax", y, [a], vjp)


# ---------------------------------------------------------------------------
# spectral primitives; complex values carry a trailing (re, im) axis


def _pack(c: _fft.ComplexSeq) -> np.ndarray:
    return np.stack([c.re, c.im], axis=-1)


def _unpack(z: np.ndarray) -> _fft.ComplexSeq:
    return _fft.ComplexSeq(z[..., 0], z[..., 1])


def rfft(a):
    """Half spectrum along the last axis: ``(..., T) -> (..., M, 2)``."""
    av = value_of(a)
    T = av.shape[-1]
    M = _fft.spectrum_size(T)

    def vjp(g):
        # adjoint: x_bar[t] = Re(sum_{k<M} G[k] exp(+2j*pi*k*t/T))
        z = np.zeros(g.shape[:-2] + (T,), dtype=np.complex128)
        z[..., :M] = g[..., 0] + 1j * g[..., 1]
        return (np.ascontiguousarray((_fft.ifft(z) * T).real),)

    return record("rfft", _pack(_fft.rfft(av)), [a], vjp)


def _bin_weights(T: int) -> np.ndarray:
    M = _fft.spectrum_size(T)
    w = np.full(M, 2.0)
    w[0] = 1.0
    if T % 2 == 0:
        w[M - 1] = 1.0
    return w / T


def irfft(a, T: int):
    """Real signal from a half spectrum: ``(..., M, 2) -> (..., T)``."""
    av = value_of(a)
    if av.shape[-1] != 2:
        raise ShapeMismatch(f"complex operand needs trailing axis 2, got {av.shape}")
    out = _fft.irfft(_unpack(av), T)
    w = _bin_weights(T)

    def vjp(g):
        s = _fft.rfft(g)
        # im of DC/Nyquist never reaches the output; rfft already zeroes it there
        return (np.stack([s.re * w, s.im * w], axis=-1),)

    return record("irfft", out, [a], vjp)


def cmul(a, b):
    """Elementwise complex product of two ``(..., 2)`` arrays."""
    av, bv = value_of(a), value_of(b)
    _same_shape("cmul", av, bv)
    ar, ai, br, bi = av[..., 0], av[..., 1], bv[..., 0], bv[..., 1]
    out = np.stack([ar * br - ai * bi, ar * bi + ai * br], axis=-1)

    def vjp(g):
        gr, gi = g[..., 0], g[..., 1]
        # g * conj(b) and g * conj(a)
        ga = np.stack([gr * br + gi * bi, gi * br - gr * bi], axis=-1)
        gb = np.stack([gr * ar + gi * ai, gi * ar - gr * ai], axis=-1)
        return ga, gb

    return record("cmul", out, [a, b], vjp)
