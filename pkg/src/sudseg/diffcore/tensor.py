"""Reverse-mode tape on numpy arrays.

Each op returns a fresh Tensor whose `_backward` closure scatters the output
gradient into its parents' `.grad`. `backward()` topologically sorts the
recorded graph and runs the closures once, so every op's backward fires
exactly once per call.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = True


def grad_enabled() -> bool:
    return _GRAD_ENABLED


@contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, np.ndarray):
            self.data = data
        elif isinstance(data, np.generic):
            self.data = np.asarray(data)
        else:
            self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def detach(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"


def record(data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    """Wrap an op result, recording the edge only when the tape is active."""
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True)
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward_fn
        return out
    return Tensor(data)


def topo_order(root: Tensor) -> list[Tensor]:
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
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor, seed=None) -> None:
    """Accumulate d(root)/d(leaf) into each reachable leaf's .grad.

    A non-scalar root needs an explicit seed gradient of matching shape.
    """
    if seed is None:
        if root.data.size != 1:
            raise ValueError("backward on a non-scalar output needs a seed gradient")
        seed = np.ones_like(root.data)
    else:
        seed = np.asarray(seed, dtype=root.data.dtype)
        if seed.shape != root.data.shape:
            raise ValueError(f"seed gradient shape {seed.shape} != output shape {root.data.shape}")
    root.accumulate(seed)
    for node in reversed(topo_order(root)):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)
