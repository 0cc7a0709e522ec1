"""Small reverse-mode autodiff core for real-valued 2D convolutional nets.

Tensors are float64 arrays shaped ``[batch, feature, h, w]`` for feature
maps; parameters may have any shape. Every op records its parents and a
closure that pushes the output gradient back to them; ``backward`` walks
that trace in reverse topological order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateInputError, DimensionError, StateError, ValidationError

ACTIVATIONS = ("linear", "relu")


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad", "op")

    def __init__(self, data, parents=(), backward_fn=None, requires_grad=False, op=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def backward(self, seed=None):
        backward(self, seed)

    def __add__(self, other):
        return add(self, as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        if p != 2:
            raise NotImplementedError("only squaring is supported")
        return square(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    g = _unbroadcast(g, t.data.shape)
    t.grad = g.copy() if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def backward(loss: Tensor, seed=None):
    """Reverse-mode sweep from ``loss``; gradients accumulate into ``.grad``."""
    if loss.backward_fn is None:
        raise StateError("backward() called on a tensor with no recorded forward pass")
    if seed is None:
        if loss.data.size != 1:
            raise StateError("backward() without a seed needs a scalar loss")
        seed = np.ones_like(loss.data)
    order, seen = [], set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    grads = {id(loss): np.asarray(seed, dtype=np.float64)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            _accumulate(node, g)
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            pg = _unbroadcast(pg, parent.data.shape)
            grads[id(parent)] = grads[id(parent)] + pg if id(parent) in grads else pg


def add(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(a.data + b.data, (a, b), lambda g: (g, g), op="add")


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.data, (a,), lambda g: (-g,), op="neg")


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), op="mul")


def square(a: Tensor) -> Tensor:
    return Tensor(a.data**2, (a,), lambda g: (2.0 * a.data * g,), op="square")


def tsum(a: Tensor) -> Tensor:
    return Tensor(a.data.sum(), (a,), lambda g: (np.broadcast_to(g, a.data.shape),), op="sum")


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    return Tensor(a.data.mean(), (a,), lambda g: (np.broadcast_to(g / n, a.data.shape),), op="mean")


def relu(a: Tensor) -> Tensor:
    # subgradient at exactly 0 is 0; NaN passes through so divergence stays visible
    on = a.data > 0
    return Tensor(np.maximum(a.data, 0.0), (a,), lambda g: (np.where(on, g, 0.0),), op="relu")


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """``[B, Cin, H, W]`` -> ``[B, Cin*k*k, H*W]`` with periodic padding."""
    b, c, h, w = x.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), mode="wrap")
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # [B, C, H, W, k, k]
    return np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(b, c * k * k, h * w)


def _col2im(cols: np.ndarray, shape, k: int) -> np.ndarray:
    """Adjoint of ``_im2col``: fold tap contributions back with wrap."""
    b, c, h, w = shape
    p = k // 2
    cols = cols.reshape(b, c, k, k, h, w)
    out = np.zeros(shape)
    for i in range(k):
        for j in range(k):
            out += np.roll(cols[:, :, i, j], shift=(i - p, j - p), axis=(2, 3))
    return out


def conv2d_periodic(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Stride-1 cross-correlation with periodic padding; output size = input size.

    ``out[b, o, i, j] = bias[o] + sum_{c, u, v} weight[o, c, u, v] * x[b, c, i+u-p, j+v-p]``
    with indices taken modulo the spatial extents and ``p = k // 2``.
    """
    if x.data.ndim != 4:
        raise DimensionError(f"conv input must be [B, C, H, W], got {x.shape}")
    cout, cin, k, k2 = weight.shape
    if k != k2 or k % 2 == 0:
        raise ValidationError(f"kernel must be square and odd, got {weight.shape[2:]}")
    if x.shape[1] != cin:
        raise DimensionError(f"layer expects {cin} input features, got {x.shape[1]}")
    b, _, h, w = x.shape
    cols = _im2col(x.data, k)
    wmat = weight.data.reshape(cout, -1)
    out = (wmat @ cols).reshape(b, cout, h, w) + bias.data[None, :, None, None]

    def grad_fn(g):
        gm = g.reshape(b, cout, h * w)
        gw = np.einsum("bop,bqp->oq", gm, cols).reshape(weight.shape)
        gb = g.sum(axis=(0, 2, 3))
        gx = _col2im(wmat.T @ gm, x.shape, k) if x.requires_grad else None
        return gx, gw, gb

    return Tensor(out, (x, weight, bias), grad_fn, op="conv2d")


@dataclass
class ConvLayer:
    weight: Tensor
    bias: Tensor
    activation: str = "linear"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"activation must be one of {ACTIVATIONS}")
        k = self.weight.shape[-1]
        if self.weight.data.ndim != 4 or k % 2 == 0 or self.weight.shape[-2] != k:
            raise ValidationError(f"weights must be [out, in, k, k] with odd k, got {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ValidationError(f"bias shape {self.bias.shape} does not match {self.weight.shape[0]} outputs")

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[-1]

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        y = conv2d_periodic(x, self.weight, self.bias)
        return relu(y) if self.activation == "relu" else y


def masked_mse_loss(pred: Tensor, target, mask) -> Tensor:
    """Sum of squared errors over masked pixels / (masked pixels x features).

    ``mask`` is ``[h, w]`` and broadcasts over batch and features.
    """
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"pred {pred.shape} and target {target.shape} differ")
    m = np.asarray(mask, dtype=bool)
    if m.shape != pred.shape[-2:]:
        raise DimensionError(f"mask {m.shape} does not match spatial extents {pred.shape[-2:]}")
    count = int(m.sum()) * pred.shape[0] * pred.shape[1]
    if count == 0:
        raise DegenerateInputError("loss mask is empty")
    resid = np.where(m, pred.data - target, 0.0)
    value = np.sum(resid**2) / count
    return Tensor(value, (pred,), lambda g: (g * 2.0 * resid / count,), op="masked_mse")


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-20
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValidationError("beta1 and beta2 must lie in [0, 1)")
        if self.lr <= 0:
            raise ValidationError(f"learning rate must be > 0, got {self.lr}")

    def reset(self):
        self.t = 0
        self.m = []
        self.v = []


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState):
    """Bias-corrected Adam update, in place. Returns ``(params, state)``."""
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise DimensionError(f"shape mismatch: param {p.shape}, grad {g.shape}, moment {m.shape}")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def set_learning_rate(state: AdamState, lr: float) -> AdamState:
    if not lr > 0:
        raise ValidationError(f"learning rate must be > 0, got {lr}")
    state.lr = float(lr)
    return state
