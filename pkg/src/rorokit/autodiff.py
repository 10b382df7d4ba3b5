"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Just enough machinery for a small transformer encoder and pair-scoring heads:
elementwise arithmetic with broadcasting, (batched) matrix products, lookups,
reductions, shape moves, and composite softmax / layer norm. All arithmetic is
float64 and single-threaded, so forward and backward passes are exactly
reproducible.

Backward traversal is iterative (explicit topological order), so graph depth
is not limited by the interpreter recursion limit.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np


class AutodiffError(RuntimeError):
    pass


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    squeeze = tuple(
        i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1
    )
    if squeeze:
        grad = grad.sum(axis=squeeze, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = _parents
        self._backward: Optional[Callable[[np.ndarray], None]] = _backward

    # -- bookkeeping ------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self) -> None:
        if self.data.size != 1:
            raise AutodiffError("backward requires a scalar output")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(
            self.data + other.data,
            self.requires_grad or other.requires_grad,
            (self, other),
        )

        def backward(grad):
            if self.requires_grad:
                self._accumulate(_unbroadcast(grad, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(grad, other.shape))

        out._backward = backward
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, self.requires_grad, (self,))

        def backward(grad):
            if self.requires_grad:
                self._accumulate(-grad)

        out._backward = backward
        return out

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(
            self.data * other.data,
            self.requires_grad or other.requires_grad,
            (self, other),
        )

        def backward(grad):
            if self.requires_grad:
                self._accumulate(_unbroadcast(grad * other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(grad * self.data, other.shape))

        out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out = Tensor(
            self.data / other.data,
            self.requires_grad or other.requires_grad,
            (self, other),
        )

        def backward(grad):
            if self.requires_grad:
                self._accumulate(_unbroadcast(grad / other.data, self.shape))
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(-grad * self.data / (other.data**2), other.shape)
                )

        out._backward = backward
        return out

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent: float):
        # Constant exponent only; enough for squares and square roots.
        exponent = float(exponent)
        out = Tensor(self.data**exponent, self.requires_grad, (self,))

        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad * exponent * self.data ** (exponent - 1))

        out._backward = backward
        return out

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        out = Tensor(
            a @ b, self.requires_grad or other.requires_grad, (self, other)
        )

        def backward(grad):
            # Promote 1D operands to matrices so one rule covers every case.
            a2 = a[None, :] if a.ndim == 1 else a
            b2 = b[:, None] if b.ndim == 1 else b
            g = grad
            if b.ndim == 1:
                g = np.expand_dims(g, -1)
            if a.ndim == 1:
                g = np.expand_dims(g, -2)
            if self.requires_grad:
                ga = _unbroadcast(g @ np.swapaxes(b2, -1, -2), a2.shape)
                self._accumulate(ga.reshape(a.shape))
            if other.requires_grad:
                gb = _unbroadcast(np.swapaxes(a2, -1, -2) @ g, b2.shape)
                other._accumulate(gb.reshape(b.shape))

        out._backward = backward
        return out

    # -- elementwise functions ---------------------------------------------

    def exp(self):
        value = np.exp(self.data)
        out = Tensor(value, self.requires_grad, (self,))

        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad * value)

        out._backward = backward
        return out

    def log(self):
        out = Tensor(np.log(self.data), self.requires_grad, (self,))

        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad / self.data)

        out._backward = backward
        return out

    def relu(self):
        mask = self.data > 0
        out = Tensor(np.where(mask, self.data, 0.0), self.requires_grad, (self,))

        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad * mask)

        out._backward = backward
        return out

    # -- reductions and shape moves ----------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), self.requires_grad, (self,))

        def backward(grad):
            if not self.requires_grad:
                return
            g = grad
            if axis is not None and not keepdims:
                axes = (axis,) if isinstance(axis, int) else tuple(axis)
                axes = tuple(a % self.data.ndim for a in axes)
                shape = [
                    1 if i in axes else s for i, s in enumerate(self.data.shape)
                ]
                g = g.reshape(shape)
            self._accumulate(np.broadcast_to(g, self.data.shape).copy())

        out._backward = backward
        return out

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.data.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            count = int(np.prod([self.data.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.data.shape
        out = Tensor(self.data.reshape(shape), self.requires_grad, (self,))

        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad.reshape(original))

        out._backward = backward
        return out

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.data.ndim)))
        inverse = tuple(np.argsort(axes))
        out = Tensor(self.data.transpose(axes), self.requires_grad, (self,))

        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad.transpose(inverse))

        out._backward = backward
        return out

    def __getitem__(self, key):
        out = Tensor(self.data[key], self.requires_grad, (self,))

        def backward(grad):
            if self.requires_grad:
                full = np.zeros_like(self.data)
                np.add.at(full, key, grad)
                self._accumulate(full)

        out._backward = backward
        return out


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def gather_rows(table: Tensor, indices) -> Tensor:
    """Embedding lookup: rows of ``table`` at integer ``indices``."""
    idx = np.asarray(indices, dtype=np.int64)
    out = Tensor(table.data[idx], table.requires_grad, (table,))

    def backward(grad):
        if table.requires_grad:
            full = np.zeros_like(table.data)
            np.add.at(full, idx, grad)
            table._accumulate(full)

    out._backward = backward
    return out


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate along axis 0."""
    parts = [as_tensor(t) for t in tensors]
    sizes = [p.data.shape[0] for p in parts]
    out = Tensor(
        np.concatenate([p.data for p in parts], axis=0),
        any(p.requires_grad for p in parts),
        tuple(parts),
    )

    def backward(grad):
        offset = 0
        for p, size in zip(parts, sizes):
            if p.requires_grad:
                p._accumulate(grad[offset : offset + size])
            offset += size

    out._backward = backward
    return out


def softmax_lastdim(x: Tensor) -> Tensor:
    """Row-stable softmax over the last axis (max shift is gradient-free)."""
    shift = Tensor(x.data.max(axis=-1, keepdims=True))
    e = (x - shift).exp()
    return e / e.sum(axis=-1, keepdims=True)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / ((var + eps) ** 0.5) * gain + bias


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: dict[str, Tensor] | Iterable[tuple[str, Tensor]],
    step: float = 1e-5,
    samples_per_param: int = 3,
    seed: int = 0,
) -> float:
    """Worst relative disagreement between backprop and central differences.

    ``loss_fn`` must be a deterministic closure over ``params`` returning a
    scalar Tensor. A few coordinates per parameter are probed (first element
    always included, the rest sampled deterministically).
    """
    params = dict(params)
    rng = np.random.default_rng(seed)

    for p in params.values():
        p.grad = None
    loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise AutodiffError("loss is not finite")
    loss.backward()
    analytic = {
        name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
        for name, p in params.items()
    }

    worst = 0.0
    for name in sorted(params):
        p = params[name]
        flat = p.data.reshape(-1)
        size = flat.size
        coords = {0} | {
            int(c) for c in rng.integers(0, size, size=min(samples_per_param, size))
        }
        for c in sorted(coords):
            original = flat[c]
            flat[c] = original + step
            plus = loss_fn().item()
            flat[c] = original - step
            minus = loss_fn().item()
            flat[c] = original
            fd = (plus - minus) / (2.0 * step)
            bp = analytic[name].reshape(-1)[c]
            rel = abs(fd - bp) / max(abs(fd), abs(bp), 1e-3)
            worst = max(worst, rel)
    return worst
