"""Reverse-mode automatic differentiation over dense float64 tensors.

Define-by-run tape: every op returns a fresh Tensor and, when any input
requires gradients, records a backward closure. The graph is rebuilt per
mini-batch, which is what lets domain labels change batch to batch without
any bookkeeping. Includes the gradient-reversal op used for adversarial
training and an SGD-with-momentum optimizer.

All data is float64. Ops never mutate their inputs; only the optimizer
writes parameter arrays in place.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested op."""


_state = threading.local()


def _recording() -> bool:
    return getattr(_state, "recording", True)


@contextmanager
def no_grad():
    """Suspend graph recording (evaluation / diagnostics passes)."""
    prev = _recording()
    _state.recording = False
    try:
        yield
    finally:
        _state.recording = prev


class Tensor:
    """Dense float64 array with an optional gradient slot.

    `backward()` on a scalar result fills `.grad` for every tensor that
    participated in its computation and has requires_grad set.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Callable[[np.ndarray], tuple] | None = None
        self._op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: tensor has {self.data.size} entries, not 1")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Graph-free tensor sharing the same array (ops never mutate data)."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(op={self._op}, shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(out_data: np.ndarray, op: str, parents: tuple[Tensor, ...],
          backward_fn: Callable[[np.ndarray], tuple]) -> Tensor:
    out = Tensor(out_data)
    if _recording() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = backward_fn
        out._op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitive ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes not broadcastable ({a.shape} + {b.shape})")
    return _make(out, "add", (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: shapes not broadcastable ({a.shape} - {b.shape})")
    return _make(out, "sub", (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, "neg", (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes not broadcastable ({a.shape} * {b.shape})")
    return _make(out, "mul", (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)))


def scale(a, c: float) -> Tensor:
    """Elementwise multiply by a python constant."""
    a = as_tensor(a)
    c = float(c)
    return _make(a.data * c, "scale", (a,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul: expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims differ ({a.shape} @ {b.shape})")
    return _make(a.data @ b.data, "matmul", (a, b),
                 lambda g: (g @ b.data.T, a.data.T @ g))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), "relu", (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _make(out, "sigmoid", (a,), lambda g: (g * out * (1.0 - out),))


def log(a) -> Tensor:
    """Natural log; caller is responsible for keeping inputs positive
    (losses clamp probabilities before taking logs)."""
    a = as_tensor(a)
    return _make(np.log(a.data), "log", (a,), lambda g: (g / a.data,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, "exp", (a,), lambda g: (g * out,))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")
    return _make(out, "reshape", (a,), lambda g: (g.reshape(a.shape),))


def clamp(a, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes only strictly inside the interval."""
    a = as_tensor(a)
    inside = (a.data > lo) & (a.data < hi)
    return _make(np.clip(a.data, lo, hi), "clamp", (a,), lambda g: (g * inside,))


def log_softmax(a) -> Tensor:
    """Row-wise log-softmax of an (n, k) matrix, numerically stable."""
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"log_softmax: expects 2-D input, got {a.shape}")
    m = a.data.max(axis=1, keepdims=True)
    shifted = a.data - m
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def backward_fn(g):
        return (g - probs * g.sum(axis=1, keepdims=True),)

    return _make(out, "log_softmax", (a,), backward_fn)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack along axis 0; all parts must agree on trailing dims."""
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat: no inputs")
    trailing = {p.shape[1:] for p in parts}
    if len(trailing) != 1:
        raise ShapeError(f"concat: trailing dims differ ({[p.shape for p in parts]})")
    out = np.concatenate([p.data for p in parts], axis=0)
    counts = [p.shape[0] for p in parts]
    offsets = np.cumsum([0] + counts)

    def backward_fn(g):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _make(out, "concat", tuple(parts), backward_fn)


def select_rows(a, indices) -> Tensor:
    """Gather rows by index; backward scatter-adds (repeats accumulate)."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError(f"select_rows: indices must be 1-D, got shape {idx.shape}")
    n = a.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ShapeError(f"select_rows: index out of range for {n} rows")

    def backward_fn(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, idx, g)
        return (grad,)

    return _make(a.data[idx], "select_rows", (a,), backward_fn)


def outer_flatten(feats, probs) -> Tensor:
    """Row-wise flattened outer product: out[i, j*k + c] = feats[i, j] * probs[i, c].

    Feature-major, class-minor layout (row j of the outer product is the
    j-th feature times every class probability).
    """
    feats, probs = as_tensor(feats), as_tensor(probs)
    if feats.data.ndim != 2 or probs.data.ndim != 2:
        raise ShapeError(f"outer_flatten: expects 2-D inputs, got {feats.shape}, {probs.shape}")
    if feats.shape[0] != probs.shape[0]:
        raise ShapeError(f"outer_flatten: row counts differ ({feats.shape} vs {probs.shape})")
    n, d = feats.shape
    k = probs.shape[1]
    out = np.einsum("ij,ic->ijc", feats.data, probs.data).reshape(n, d * k)

    def backward_fn(g):
        g3 = g.reshape(n, d, k)
        return (np.einsum("ijc,ic->ij", g3, probs.data),
                np.einsum("ijc,ij->ic", g3, feats.data))

    return _make(out, "outer_flatten", (feats, probs), backward_fn)


def total(a) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    a = as_tensor(a)
    return _make(np.asarray(a.data.sum()), "total", (a,),
                 lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean(a) -> Tensor:
    """Mean of all entries, as a scalar tensor."""
    a = as_tensor(a)
    n = a.size
    return _make(np.asarray(a.data.mean()), "mean", (a,),
                 lambda g: (np.broadcast_to(g / n, a.shape).copy(),))


def grad_reverse(a, lam: float) -> Tensor:
    """Identity in the forward pass; backward multiplies the gradient by -lam.

    Inserting this between the feature path and the domain discriminator
    turns one joint minimization into the adversarial minmax: the
    discriminator side descends the loss while everything upstream ascends
    it, scaled by lam.
    """
    a = as_tensor(a)
    lam = float(lam)
    if lam < 0:
        raise ValueError(f"grad_reverse: lam must be nonnegative, got {lam}")
    return _make(a.data, "grad_reverse", (a,), lambda g: (-lam * g,))


_OPS: dict[str, Callable] = {
    "add": add,
    "sub": sub,
    "neg": neg,
    "mul": mul,
    "scale": scale,
    "matmul": matmul,
    "relu": relu,
    "sigmoid": sigmoid,
    "log": log,
    "exp": exp,
    "reshape": reshape,
    "clamp": clamp,
    "log_softmax": log_softmax,
    "concat": lambda *parts: concat_rows(parts),
    "select_rows": select_rows,
    "outer_flatten": outer_flatten,
    "sum": total,
    "mean": mean,
    "grad_reverse": grad_reverse,
}


def forward_op(kind: str, inputs: Iterable, **kwargs) -> Tensor:
    """Generic dispatcher over the primitive op set (kind by name)."""
    if kind not in _OPS:
        raise ValueError(f"forward_op: unknown op kind {kind!r}")
    return _OPS[kind](*inputs, **kwargs)


# ---------------------------------------------------------------------------
# backward pass


def _topo_order(root: Tensor) -> list[Tensor]:
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
        for parent in node._parents:
            if id(parent) not in seen and parent.requires_grad:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params: Sequence[Tensor] = ()) -> None:
    """Backprop from a scalar loss.

    Every tensor reached by the tape accumulates into `.grad`. Tensors in
    `params` that do not participate in the loss get an explicit zero
    gradient so the optimizer step is uniform.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    for p in params:
        p.grad = np.zeros_like(p.data)
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward_fn is None:
            continue
        grads = node._backward_fn(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            g = np.asarray(g, dtype=np.float64).reshape(parent.shape)
            if parent.grad is None:
                parent.grad = g.copy()
            else:
                parent.grad += g


# ---------------------------------------------------------------------------
# optimizer


class SgdMomentum:
    """SGD with momentum: v <- momentum * v + g;  p <- p - lr * v."""

    def __init__(self, params: dict[str, Tensor], lr: float, momentum: float = 0.9):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        self.params = dict(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.velocities = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ShapeError(
                    f"sgd step: gradient shape {g.shape} != param shape {p.data.shape} for {name!r}")
            v = self.velocities[name]
            v *= self.momentum
            v += g
            p.data -= self.lr * v


def sgd_momentum_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
                      state: SgdMomentum) -> None:
    """Functional form of the update: applies `grads` through `state`."""
    for name, p in state.params.items():
        p.grad = grads.get(name)
    state.step()
