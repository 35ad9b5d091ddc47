"""Differentiable tensors and a reverse-mode gradient engine.

Values are 64-bit numpy arrays wrapped in :class:`Tensor`. Operations build a
define-by-run graph (the forward value is computed eagerly and cached on the
node); calling :meth:`Tensor.backward` on a scalar root walks the graph once
in reverse topological order and fills ``grad`` on every ``requires_grad``
leaf.

The primitive vocabulary is fixed: matmul, add, mul, permute, reshape,
softmax, silu, gelu, exp, slice (narrow/flip), concat, reduce-mean,
reduce-sum and a first-order linear scan. Everything else in the package is
composed from these. Division and square roots are obtained by a single
Newton step seeded with a detached numpy estimate, which reproduces the exact
value and the exact first derivative using only mul/add (higher derivatives
are out of scope).

Elementwise broadcasting is numpy's trailing-dimension alignment; anything
numpy cannot broadcast raises :class:`ShapeError`.
"""

from __future__ import annotations

import struct
from contextlib import contextmanager
from typing import Iterable, Sequence

import numpy as np
from scipy.special import erf

from .errors import ContractError, NumericalError, ShapeError

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (pure numpy evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """An n-dimensional 64-bit value participating in the gradient graph."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # -- graph mechanics -----------------------------------------------------

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Reverse-mode pass from a scalar root.

        Fills ``grad`` on every reachable ``requires_grad`` leaf. Each call
        recomputes leaf grads from scratch (assignment, not accumulation), so
        repeated calls on the same cached graph are deterministic.
        """
        if self.size != 1:
            raise ContractError(
                f"backward requires a scalar root, got shape {self.shape}"
            )
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
                if id(parent) not in seen:
                    stack.append((parent, False))

        acc: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = acc.pop(id(node), None)
            if g is None:
                continue
            if node._backward is not None:
                for parent, pg in node._backward(g):
                    if pg is None or not _needs_grad(parent):
                        continue
                    prev = acc.get(id(parent))
                    acc[id(parent)] = pg if prev is None else prev + pg
            if node.requires_grad and not node._parents:
                node.grad = np.array(g, dtype=np.float64, copy=True)

    # -- operator sugar (composed from the primitive vocabulary) --------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other), mul(self, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def _needs_grad(t: Tensor) -> bool:
    return t.requires_grad or t._backward is not None or bool(t._parents)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(_needs_grad(p) for p in parents):
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise primitives ----------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}") from None

    def backward(g):
        return (
            (a, _unbroadcast(g, a.shape) if _needs_grad(a) else None),
            (b, _unbroadcast(g, b.shape) if _needs_grad(b) else None),
        )

    return _node(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from None

    def backward(g):
        return (
            (a, _unbroadcast(g * b.data, a.shape) if _needs_grad(a) else None),
            (b, _unbroadcast(g * a.data, b.shape) if _needs_grad(b) else None),
        )

    return _node(data, (a, b), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        return ((a, g * data),)

    return _node(data, (a,), backward)


def silu(a) -> Tensor:
    """x * sigmoid(x)."""
    a = as_tensor(a)
    sig = 1.0 / (1.0 + np.exp(-a.data))
    data = a.data * sig

    def backward(g):
        return ((a, g * (sig * (1.0 + a.data * (1.0 - sig)))),)

    return _node(data, (a,), backward)


def gelu(a) -> Tensor:
    """x * Phi(x) with the exact Gaussian CDF."""
    a = as_tensor(a)
    phi_cdf = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))
    data = a.data * phi_cdf

    def backward(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * a.data * a.data)
        return ((a, g * (phi_cdf + a.data * pdf)),)

    return _node(data, (a,), backward)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        return ((a, data * (g - inner)),)

    return _node(data, (a,), backward)


# -- structural primitives -----------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ for {a.shape} @ {b.shape}")
    try:
        data = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(
            f"matmul: batch dims not broadcastable for {a.shape} @ {b.shape}"
        ) from None

    def backward(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape) \
            if _needs_grad(a) else None
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape) \
            if _needs_grad(b) else None
        return ((a, ga), (b, gb))

    return _node(data, (a, b), backward)


def permute(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    data = np.transpose(a.data, axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return ((a, np.transpose(g, inverse)),)

    return _node(data, (a,), backward)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    data = a.data.reshape(shape)
    original = a.shape

    def backward(g):
        return ((a, g.reshape(original)),)

    return _node(data, (a,), backward)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of ``length`` elements along ``axis``."""
    a = as_tensor(a)
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    data = a.data[index]

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return ((a, full),)

    return _node(data, (a,), backward)


def flip(a, axis: int) -> Tensor:
    """Reverse along one axis (a stride -1 slice)."""
    a = as_tensor(a)
    data = np.flip(a.data, axis=axis)

    def backward(g):
        return ((a, np.flip(g, axis=axis)),)

    return _node(data, (a,), backward)


def concat(parts: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    try:
        data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        raise ShapeError(
            "concat: incompatible shapes " + ", ".join(str(p.shape) for p in parts)
        ) from None
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        grads = []
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            grads.append((part, g[tuple(index)]))
        return tuple(grads)

    return _node(data, tuple(parts), backward)


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return ((a, np.broadcast_to(g, a.shape).copy()),)
        g_exp = g if keepdims else np.expand_dims(g, axis)
        return ((a, np.broadcast_to(g_exp, a.shape).copy()),)

    return _node(data, (a,), backward)


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = a.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.shape[ax] for ax in axis]))
    else:
        count = a.shape[axis]

    def backward(g):
        if axis is None:
            return ((a, np.broadcast_to(g / count, a.shape).copy()),)
        g_exp = g if keepdims else np.expand_dims(g, axis)
        return ((a, np.broadcast_to(g_exp / count, a.shape).copy()),)

    return _node(data, (a,), backward)


def linear_scan(decay, x, axis: int = 0) -> Tensor:
    """First-order linear recurrence along ``axis``.

    ``y[0] = x[0]`` and ``y[t] = decay[t] * y[t-1] + x[t]`` (zero initial
    state). ``decay`` broadcasts against ``x``; when it carries gradient the
    chain rule through the recurrence is handled exactly.
    """
    decay, x = as_tensor(decay), as_tensor(x)
    try:
        d_full = np.broadcast_to(decay.data, x.shape)
    except ValueError:
        raise ShapeError(
            f"linear_scan: decay {decay.shape} does not broadcast to {x.shape}"
        ) from None

    xm = np.moveaxis(x.data, axis, 0)
    dm = np.moveaxis(d_full, axis, 0)
    out = np.empty(xm.shape, dtype=np.float64)
    out[0] = xm[0]
    for t in range(1, xm.shape[0]):
        np.multiply(dm[t], out[t - 1], out=out[t])
        out[t] += xm[t]
    data = np.moveaxis(out, 0, axis)

    def backward(g):
        gm = np.moveaxis(g, axis, 0)
        n = gm.shape[0]
        gx = np.empty_like(gm)
        need_decay = _needs_grad(decay)
        gd = np.empty_like(gm) if need_decay else None
        carry = np.zeros_like(gm[0])
        for t in range(n - 1, -1, -1):
            carry = gm[t] + (dm[t + 1] * carry if t + 1 < n else 0.0)
            gx[t] = carry
            if need_decay:
                gd[t] = carry * (out[t - 1] if t > 0 else 0.0)
        gd_full = _unbroadcast(np.moveaxis(gd, 0, axis), decay.shape) \
            if need_decay else None
        return (
            (decay, gd_full),
            (x, np.moveaxis(gx, 0, axis)),
        )

    return _node(data, (decay, x), backward)


# -- compositions (value- and first-derivative-exact) ---------------------------


def sigmoid(a) -> Tensor:
    """Logistic function composed as a 2-way softmax against a zero logit."""
    a = as_tensor(a)
    col = reshape(a, a.shape + (1,))
    zero = Tensor(np.zeros(a.shape + (1,)))
    pair = softmax(concat([col, zero], axis=-1), axis=-1)
    return reshape(narrow(pair, -1, 0, 1), a.shape)


def reciprocal(a) -> Tensor:
    """1/a for nonzero a via one detached-Newton step: r0*(2 - a*r0)."""
    a = as_tensor(a)
    r0 = Tensor(1.0 / a.data)
    return mul(r0, add(mul(a, mul(r0, -1.0)), 2.0))


def rsqrt(a) -> Tensor:
    """1/sqrt(a) for a > 0 via one detached-Newton step: s0*(3 - a*s0^2)/2."""
    a = as_tensor(a)
    s0 = Tensor(1.0 / np.sqrt(a.data))
    return mul(mul(s0, add(mul(a, mul(mul(s0, s0), -1.0)), 3.0)), 0.5)


def sqrt(a) -> Tensor:
    """sqrt(a) for a > 0, composed as a * rsqrt(a)."""
    a = as_tensor(a)
    return mul(a, rsqrt(a))


def mean_squared_error(pred: Tensor, target) -> Tensor:
    diff = pred - as_tensor(target)
    return reduce_mean(mul(diff, diff))


def check_finite(t: Tensor, context: str = "tensor") -> Tensor:
    if not np.isfinite(t.data).all():
        raise NumericalError(f"non-finite values in {context}")
    return t


# -- optimizer -------------------------------------------------------------------


class Adam:
    """Bias-corrected Adam over a fixed parameter list.

    ``step()`` requires every parameter to carry a gradient, applies the
    update and clears the gradients.
    """

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for p in self.params:
            if p.grad is None:
                raise ContractError(
                    f"adam step: parameter {p.name or '<unnamed>'} has no gradient"
                )
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.grad = None


def clip_global_norm(params: Sequence[Tensor], max_norm: float) -> float:
    """Scale all grads so their joint L2 norm is at most ``max_norm``."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm > 0.0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


# -- checkpoint container ---------------------------------------------------------

_MAGIC = b"TRTS1"


def save_checkpoint(params: Sequence[Tensor], path) -> None:
    """Flat binary container: magic, then (name, extents, float64 values) records."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        for p in params:
            if not p.name:
                raise ContractError("checkpoint parameters must be named")
            raw = p.name.encode("utf-8")
            fh.write(struct.pack("<Q", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<Q", p.ndim))
            fh.write(struct.pack(f"<{p.ndim}Q", *p.shape))
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:5] != _MAGIC:
        raise ContractError(f"{path}: not a TRTS1 checkpoint")
    out: dict[str, np.ndarray] = {}
    pos = 5
    while pos < len(blob):
        (nlen,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        shape = struct.unpack_from(f"<{rank}Q", blob, pos)
        pos += 8 * rank
        count = int(np.prod(shape)) if rank else 1
        vals = np.frombuffer(blob, dtype="<f8", count=count, offset=pos)
        pos += 8 * count
        out[name] = vals.reshape(shape).astype(np.float64)
    return out
