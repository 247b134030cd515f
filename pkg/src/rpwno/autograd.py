"""Small define-by-run reverse-mode autodiff over float64 numpy arrays.

Only the operations the wavelet neural operator needs are provided. A
:class:`Tape` records every differentiable operation executed while it is
active; :func:`backward` replays it in reverse.

    >>> with Tape() as tape:
    ...     loss = sum_(mul(x, x))
    >>> backward(loss, tape)
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import ndtr

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

_local = threading.local()


class ShapeError(ValueError):
    pass


class Tensor:
    """Dense float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.require(data, dtype=np.float64, requirements="C")
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __radd__ = __add__
    __rmul__ = __mul__

    def _accumulate(self, g: np.ndarray, owned: bool = False) -> None:
        # owned: g is a fresh array nobody else references, so it can be adopted
        if self.grad is None:
            self.grad = g if owned and g.flags.writeable else np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g


class Parameter(Tensor):
    """A trainable leaf tensor; its gradient buffer always exists."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = "", requires_grad: bool = True):
        super().__init__(data, requires_grad=requires_grad)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


class Tape:
    """Ordered record of executed differentiable operations.

    Tapes are thread local, so separate models may train concurrently in
    different threads.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []
        self._prev: Tape | None = None

    def __enter__(self) -> "Tape":
        self._prev = getattr(_local, "tape", None)
        _local.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _local.tape = self._prev
        self._prev = None

    def __len__(self) -> int:
        return len(self.nodes)


def active_tape() -> Tape | None:
    return getattr(_local, "tape", None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out_data: np.ndarray, parents: Sequence[Tensor],
            backward_fn: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        tape.nodes.append(out)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _send(t: Tensor, g: np.ndarray, owned: bool = False) -> None:
    if t.requires_grad:
        t._accumulate(g, owned)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _bw(g):
        _send(a, _unbroadcast(g, a.shape))
        _send(b, _unbroadcast(g, b.shape))

    return _record(a.data + b.data, (a, b), _bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _bw(g):
        _send(a, _unbroadcast(g, a.shape))
        _send(b, -_unbroadcast(g, b.shape))

    return _record(a.data - b.data, (a, b), _bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape), owned=True)
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape), owned=True)

    return _record(a.data * b.data, (a, b), _bw)


def sum_(x: Tensor) -> Tensor:
    def _bw(g):
        _send(x, np.broadcast_to(g, x.shape))

    return _record(np.asarray(x.data.sum()), (x,), _bw)


def mean(x: Tensor) -> Tensor:
    n = x.data.size

    def _bw(g):
        _send(x, np.broadcast_to(g / n, x.shape))

    return _record(np.asarray(x.data.mean()), (x,), _bw)


def gelu(x: Tensor) -> Tensor:
    """Exact GeLU, ``x * Phi(x)`` with the erf-based normal CDF."""
    cdf = ndtr(x.data)

    def _bw(g):
        pdf = np.square(x.data)
        pdf *= -0.5
        np.exp(pdf, out=pdf)
        pdf *= _INV_SQRT_2PI
        pdf *= x.data
        pdf += cdf
        pdf *= g
        _send(x, pdf, owned=True)

    return _record(x.data * cdf, (x,), _bw)


def dense(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map along the last axis: ``x @ W + b``."""
    k = x.shape[-1]
    if W.ndim != 2 or W.shape[0] != k:
        raise ShapeError(f"dense: input shape {x.shape} incompatible with weight shape {W.shape}")
    if b is not None and b.shape != (W.shape[1],):
        raise ShapeError(f"dense: bias shape {b.shape} does not match weight shape {W.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, k)
    out = x2 @ W.data
    if b is not None:
        out += b.data

    def _bw(g):
        g2 = g.reshape(-1, W.shape[1])
        if W.requires_grad:
            W._accumulate(x2.T @ g2)
        if b is not None and b.requires_grad:
            b._accumulate(g2.sum(axis=0))
        if x.requires_grad:
            x._accumulate((g2 @ W.data.T).reshape(x.shape), owned=True)

    parents = (x, W) if b is None else (x, W, b)
    return _record(out.reshape(*lead, W.shape[1]), parents, _bw)


def conv1x1(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """Kernel-size-one convolution on channels-last data ``[s, spatial..., k]``."""
    if x.ndim < 2:
        raise ShapeError(f"conv1x1: expected [batch, spatial..., channels], got {x.shape}")
    if W.ndim != 2 or x.shape[-1] != W.shape[0]:
        raise ShapeError(f"conv1x1: channel extent of {x.shape} does not match weight shape {W.shape}")
    return dense(x, W, b)


def custom_op(out_data: np.ndarray, parents: Sequence[Tensor],
              backward_fn: Callable[[np.ndarray], None]) -> Tensor:
    """Register an operation whose vector-Jacobian product is supplied by the caller.

    ``backward_fn`` receives the upstream gradient and must accumulate into
    the parents itself (use :func:`accumulate`).
    """
    return _record(out_data, parents, backward_fn)


def accumulate(t: Tensor, g: np.ndarray, owned: bool = False) -> None:
    _send(t, g, owned)


def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate d(loss)/d(leaf) into every participating leaf's ``grad``."""
    if loss.data.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.shape}")
    if tape is None or len(tape) == 0:
        raise ValueError("backward called with an empty tape")
    if not loss.requires_grad:
        raise ValueError("loss was not produced by tape-recorded operations")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node.grad is None:
            continue
        node._backward(node.grad)
        if node is not loss:
            node.grad = None
    loss.grad = None


def zero_grad(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def create(cls, params: Sequence[Parameter], lr: float = 1e-3, beta1: float = 0.9,
               beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                   m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params])


def adam_step(params: Sequence[Parameter], state: AdamState) -> None:
    """One bias-corrected Adam update in place. Gradients are left untouched."""
    if len(state.m) != len(params) or any(m.shape != p.shape for m, p in zip(state.m, params)):
        raise ValueError("Adam state is uninitialized or does not match the parameters")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
