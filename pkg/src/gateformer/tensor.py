"""Dense tensors with a define-by-run reverse-mode gradient tape.

Arrays are stored as numpy buffers. Every differentiable primitive records a
node on the module-level tape while recording is enabled; :func:`backward`
replays the tape in exact reverse order of recording and leaves one summed
gradient on every leaf that requires it.

Shape rules are deliberately narrow: elementwise binary ops need identical
shapes, except :func:`add`, which also accepts a right operand whose shape is
a trailing suffix of the left one (bias addition).
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "NonFiniteError",
    "as_tensor",
    "no_grad",
    "is_recording",
    "reset_tape",
    "tape_length",
    "backward",
    "add",
    "sub",
    "mul",
    "scale",
    "add_scalar",
    "rsub_scalar",
    "mul_const",
    "add_const",
    "matmul",
    "transpose",
    "reshape",
    "sum_all",
    "mean_all",
    "square",
    "abs_",
    "sigmoid",
    "gelu",
    "softmax_lastdim",
    "layer_norm",
    "lerp",
    "take_rows",
    "dropout",
]


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class NonFiniteError(FloatingPointError):
    """A primitive produced NaN or Inf."""

    def __init__(self, op: str, phase: str = "forward"):
        self.op = op
        self.phase = phase
        super().__init__(f"non-finite values produced by {op} ({phase})")


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_node")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._node: _Node | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{tag})"

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_scalar(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return add_scalar(self, -other)

    def __rsub__(self, other):
        return rsub_scalar(other, self)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor / tensor is not supported")
        return scale(self, 1.0 / other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


# --------------------------------------------------------------------------
# tape


@dataclass
class _Node:
    op: str
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class _Tape:
    def __init__(self):
        self.nodes: list[_Node] = []
        self.enabled = True


_TAPE = _Tape()


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable recording inside the block."""
    prev = _TAPE.enabled
    _TAPE.enabled = False
    try:
        yield
    finally:
        _TAPE.enabled = prev


def is_recording() -> bool:
    return _TAPE.enabled


def reset_tape() -> None:
    _TAPE.nodes.clear()


def tape_length() -> int:
    return len(_TAPE.nodes)


def _check_finite(arr: np.ndarray, op: str, phase: str = "forward") -> None:
    # the sum is a cheap screen; confirm elementwise before raising
    with np.errstate(over="ignore", invalid="ignore"):
        total = arr.sum()
    if not np.isfinite(total) and not np.isfinite(arr).all():
        raise NonFiniteError(op, phase)


def _make(op: str, data: np.ndarray, inputs: tuple[Tensor, ...], grad_fn) -> Tensor:
    _check_finite(data, op)
    needs = _TAPE.enabled and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        node = _Node(op, out, inputs, grad_fn)
        out._node = node
        _TAPE.nodes.append(node)
    return out


def backward(loss: Tensor) -> None:
    """Backpropagate from a scalar ``loss`` and consume the tape.

    Every leaf reached from ``loss`` gets its ``grad`` overwritten with the
    total adjoint of this pass.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("backward called on a tensor that is not on the tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    if loss.is_leaf:
        leaves[id(loss)] = loss
    try:
        for node in reversed(_TAPE.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            in_grads = node.backward(g)
            for inp, gi in zip(node.inputs, in_grads):
                if gi is None or not inp.requires_grad:
                    continue
                _check_finite(gi, node.op, "backward")
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                if inp.is_leaf:
                    leaves[key] = inp
    finally:
        reset_tape()
    for key, leaf in leaves.items():
        leaf.grad = grads[key].astype(leaf.dtype, copy=False)


# --------------------------------------------------------------------------
# elementwise


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def _sum_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    return g.reshape((-1,) + shape).sum(axis=0) if lead else g


def add(a: Tensor, b: Tensor) -> Tensor:
    """``a + b``; ``b`` may match a trailing suffix of ``a``'s shape."""
    if a.shape != b.shape:
        n = b.ndim
        if n == 0 or n > a.ndim or a.shape[-n:] != b.shape:
            raise ShapeError(f"add: cannot broadcast {b.shape} onto {a.shape}")
    sa, sb = a.shape, b.shape
    return _make("add", a.data + b.data, (a, b), lambda g: (g, _sum_to(g, sb) if sb != sa else g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _make("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _make("mul", ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make("scale", a.data * a.dtype.type(c), (a,), lambda g: (g * c,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    return _make("add_scalar", a.data + a.dtype.type(c), (a,), lambda g: (g,))


def rsub_scalar(c: float, a: Tensor) -> Tensor:
    return _make("rsub_scalar", a.dtype.type(c) - a.data, (a,), lambda g: (-g,))


def mul_const(a: Tensor, c: np.ndarray) -> Tensor:
    """Multiply by a non-differentiable array broadcastable to ``a``."""
    c = np.asarray(c, dtype=a.dtype)
    if np.broadcast_shapes(a.shape, c.shape) != a.shape:
        raise ShapeError(f"mul_const: {c.shape} does not broadcast to {a.shape}")
    return _make("mul_const", a.data * c, (a,), lambda g: (g * c,))


def add_const(a: Tensor, c: np.ndarray) -> Tensor:
    """Add a non-differentiable array broadcastable to ``a``."""
    c = np.asarray(c, dtype=a.dtype)
    if np.broadcast_shapes(a.shape, c.shape) != a.shape:
        raise ShapeError(f"add_const: {c.shape} does not broadcast to {a.shape}")
    return _make("add_const", a.data + c, (a,), lambda g: (g,))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _make("square", ad * ad, (a,), lambda g: (2.0 * g * ad,))


def abs_(a: Tensor) -> Tensor:
    ad = a.data
    return _make("abs", np.abs(ad), (a,), lambda g: (g * np.sign(ad),))


def sigmoid(a: Tensor) -> Tensor:
    """Logistic function, clamped so every output lies strictly in (0, 1)."""
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    info = np.finfo(x.dtype)
    np.clip(out, info.tiny, 1.0 - info.epsneg, out=out)
    return _make("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """tanh approximation of GELU."""
    x = a.data
    c = x.dtype.type(_GELU_C)
    k = x.dtype.type(0.044715)
    inner = c * (x + k * x ** 3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def grad_fn(g):
        dinner = c * (1.0 + 3.0 * k * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return _make("gelu", out, (a,), grad_fn)


def softmax_lastdim(a: Tensor) -> Tensor:
    x = a.data
    if x.ndim == 0 or x.shape[-1] < 1:
        raise ShapeError("softmax_lastdim needs a non-empty last dimension")
    if not np.isfinite(x).all():
        raise NonFiniteError("softmax_lastdim (input)")
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    out = z / z.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _make("softmax", out, (a,), grad_fn)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale by ``gamma`` and shift by ``beta``."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: affine shapes {gamma.shape}/{beta.shape} vs last dim {d}")
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + xd.dtype.type(eps))
    xhat = xc * rstd
    gd, bd = gamma.data, beta.data
    out = xhat * gd + bd

    def grad_fn(g):
        gx = g * gd
        dx = rstd * (gx - gx.mean(axis=-1, keepdims=True)
                     - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        g2 = g.reshape(-1, d)
        return dx, (g2 * xhat.reshape(-1, d)).sum(axis=0), g2.sum(axis=0)

    return _make("layer_norm", out, (x, gamma, beta), grad_fn)


def lerp(a: Tensor, b: Tensor, w: Tensor) -> Tensor:
    """``w * b + (1 - w) * a``, evaluated as ``a + w * (b - a)``.

    When ``a == b`` the result is exactly ``a``, whatever the weights.
    """
    _same_shape(a, b, "lerp")
    _same_shape(a, w, "lerp")
    ad, bd, wd = a.data, b.data, w.data
    diff = bd - ad
    out = ad + wd * diff

    def grad_fn(g):
        gw = g * wd
        return g - gw, gw, g * diff

    return _make("lerp", out, (a, b, w), grad_fn)


# --------------------------------------------------------------------------
# linear algebra and shape


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product.

    ``b`` 2-D: ``a[..., k] @ b[k, n]`` with ``b`` shared across leading axes.
    Otherwise both operands must have identical leading (batch) axes.
    """
    if a.ndim < 2 and b.ndim == 2:
        raise ShapeError(f"matmul: left operand must be at least 2-D, got {a.shape}")
    if b.ndim == 2:
        k, n = b.shape
        if a.shape[-1] != k:
            raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
        ad, bd = a.data, b.data

        def grad_fn(g):
            ga = g @ bd.T
            gb = ad.reshape(-1, k).T @ g.reshape(-1, n)
            return ga, gb

        return _make("matmul", ad @ bd, (a, b), grad_fn)
    if a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def grad_fn(g):
        return g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g

    return _make("matmul", ad @ bd, (a, b), grad_fn)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make("transpose", np.ascontiguousarray(a.data.transpose(axes)), (a,),
                 lambda g: (g.transpose(inv),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape
    return _make("reshape", a.data.reshape(tuple(shape)), (a,), lambda g: (g.reshape(src),))


def sum_all(a: Tensor) -> Tensor:
    src, dt = a.shape, a.dtype
    return _make("sum", np.asarray(a.data.sum(dtype=dt)), (a,),
                 lambda g: (np.broadcast_to(g, src).astype(dt),))


def mean_all(a: Tensor) -> Tensor:
    src, dt, n = a.shape, a.dtype, a.size
    return _make("mean", np.asarray(a.data.mean(dtype=dt)), (a,),
                 lambda g: (np.full(src, g / n, dtype=dt),))


def take_rows(a: Tensor, index: np.ndarray) -> Tensor:
    """Gather along axis 1 with a per-batch index: ``out[b, i] = a[b, index[b, i]]``.

    ``index`` must hold a permutation of ``range(a.shape[1])`` in every row.
    """
    index = np.asarray(index)
    if index.shape != a.shape[:2]:
        raise ShapeError(f"take_rows: index shape {index.shape} vs {a.shape[:2]}")
    extra = (1,) * (a.ndim - 2)
    idx = index.reshape(index.shape + extra)
    out = np.take_along_axis(a.data, idx, axis=1)

    def grad_fn(g):
        back = np.zeros_like(g)
        np.put_along_axis(back, np.broadcast_to(idx, g.shape), g, axis=1)
        return (back,)

    return _make("take_rows", out, (a,), grad_fn)


def dropout(a: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when ``rate == 0`` or ``rng`` is None."""
    if rate <= 0.0 or rng is None:
        return a
    if rate >= 1.0:
        raise ValueError("dropout rate must be < 1")
    keep = (rng.random(a.shape) >= rate).astype(a.dtype) / a.dtype.type(1.0 - rate)
    return mul_const(a, keep)
