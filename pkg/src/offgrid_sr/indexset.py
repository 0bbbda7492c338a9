"""Multi-index sets ``[-f, f]^d`` in colexicographic order.

Colexicographic order compares the *last* coordinate first, so the first
coordinate varies fastest.  Every vector indexed by a multi-index set is
stored flat in that order; :func:`to_grid` / :func:`from_grid` convert to and
from a ``(2f+1,)*d`` array whose axis ``i`` carries coordinate ``k_i``
(offset by ``f``).  This is numpy's Fortran ordering, used consistently by
every module of the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class IndexSet:
    """The box ``[-halfwidth, halfwidth]^dim`` of integer multi-indices."""

    dim: int
    halfwidth: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")
        if self.halfwidth < 0:
            raise ValueError(f"halfwidth must be >= 0, got {self.halfwidth}")

    @property
    def side(self) -> int:
        return 2 * self.halfwidth + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side,) * self.dim

    @property
    def size(self) -> int:
        return self.side ** self.dim

    def __len__(self) -> int:
        return self.size

    @cached_property
    def indices(self) -> np.ndarray:
        """Integer array of shape ``(size, dim)``, rows in colex order."""
        axes = [np.arange(-self.halfwidth, self.halfwidth + 1)] * self.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1, order="F") for m in mesh], axis=1)

    def position(self, k) -> int:
        """Flat colex position of multi-index ``k``."""
        k = np.asarray(k, dtype=int).reshape(self.dim)
        if np.any(np.abs(k) > self.halfwidth):
            raise IndexError(f"{tuple(k)} outside [-{self.halfwidth}, {self.halfwidth}]^{self.dim}")
        strides = self.side ** np.arange(self.dim)
        return int(np.dot(k + self.halfwidth, strides))

    def positions(self, ks: np.ndarray) -> np.ndarray:
        ks = np.asarray(ks, dtype=int).reshape(-1, self.dim)
        strides = self.side ** np.arange(self.dim)
        return (ks + self.halfwidth) @ strides

    def contains(self, ks: np.ndarray) -> np.ndarray:
        ks = np.asarray(ks, dtype=int).reshape(-1, self.dim)
        return np.all(np.abs(ks) <= self.halfwidth, axis=1)

    def subset_mask(self, inner: IndexSet) -> np.ndarray:
        """Boolean mask over ``self`` selecting the entries of a smaller box."""
        if inner.dim != self.dim:
            raise ValueError("dimension mismatch")
        return np.all(np.abs(self.indices) <= inner.halfwidth, axis=1)


def colex_less(a, b) -> bool:
    """``a`` strictly precedes ``b`` in colexicographic order."""
    for ai, bi in zip(reversed(list(a)), reversed(list(b))):
        if ai != bi:
            return ai < bi
    return False


def to_grid(vec: np.ndarray, dim: int) -> np.ndarray:
    """Reshape a colex vector (or a stack of column vectors) into grid form.

    A ``(n^d,)`` vector becomes ``(n,)*d``; a ``(n^d, r)`` matrix becomes
    ``(n,)*d + (r,)`` with the columns on the last axis.
    """
    vec = np.asarray(vec)
    n = round(vec.shape[0] ** (1.0 / dim))
    if n ** dim != vec.shape[0]:
        raise ValueError(f"length {vec.shape[0]} is not a {dim}-th power")
    return vec.reshape((n,) * dim + vec.shape[1:], order="F")


def from_grid(grid: np.ndarray, dim: int) -> np.ndarray:
    grid = np.asarray(grid)
    m = int(np.prod(grid.shape[:dim]))
    return grid.reshape((m,) + grid.shape[dim:], order="F")
