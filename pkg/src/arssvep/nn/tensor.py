from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..errors import NumericError


class Tensor:
    """Array with an optional gradient buffer of the same shape.

    Parameters owned by a model are views into one contiguous buffer (see
    :class:`ParameterStore`), which lets the optimiser update everything in a
    handful of vectorised operations.
    """

    __slots__ = ("values", "grad", "requires_grad", "name")

    def __init__(self, values, requires_grad: bool = False, name: Optional[str] = None,
                 grad: Optional[np.ndarray] = None):
        self.values = np.asarray(values)
        self.requires_grad = requires_grad
        self.name = name
        if grad is None and requires_grad:
            grad = np.zeros_like(self.values)
        if grad is not None and grad.shape != self.values.shape:
            raise ValueError(f"grad shape {grad.shape} != values shape {self.values.shape}")
        self.grad = grad

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0

    def __repr__(self):
        return f"Tensor(name={self.name!r}, shape={self.shape}, requires_grad={self.requires_grad})"


def check_finite(a: np.ndarray, where: str) -> np.ndarray:
    if not np.isfinite(a).all():
        raise NumericError(f"non-finite values produced by {where}")
    return a


class ParameterStore:
    """Allocates named parameters as views of one flat value/grad buffer pair."""

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self._specs = []
        self.params = {}
        self.flat = np.zeros(0, dtype=self.dtype)
        self.flat_grad = np.zeros(0, dtype=self.dtype)

    def declare(self, name: str, shape: Sequence[int]) -> None:
        if name in dict(self._specs):
            raise ValueError(f"duplicate parameter {name}")
        self._specs.append((name, tuple(shape)))

    def allocate(self) -> dict:
        total = sum(int(np.prod(s)) for _, s in self._specs)
        self.flat = np.zeros(total, dtype=self.dtype)
        self.flat_grad = np.zeros(total, dtype=self.dtype)
        offset = 0
        for name, shape in self._specs:
            n = int(np.prod(shape))
            vals = self.flat[offset:offset + n].reshape(shape)
            grad = self.flat_grad[offset:offset + n].reshape(shape)
            self.params[name] = Tensor(vals, True, name, grad)
            offset += n
        return self.params

    def zero_grad(self) -> None:
        self.flat_grad[...] = 0

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __iter__(self):
        return iter(self.params.values())

    def names(self):
        return [n for n, _ in self._specs]
