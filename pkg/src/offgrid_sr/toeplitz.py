"""Generalized (multilevel) Toeplitz algebra on ``Omega_l = [-l, l]^d``.

A generalized Toeplitz matrix is ``T = sum_k u_k Theta_k`` with ``k`` ranging
over ``Omega_{2l}``.  ``Theta_k`` is the Kronecker product
``theta_{k_d} x ... x theta_{k_1}`` where ``theta_j`` has ones on its ``j``-th
diagonal (``j > 0`` above the main diagonal).  In terms of multi-indices this
reads ``T[s, t] = u_{t - s}``.  For the trigonometric moment matrix of a
measure, ``u_k = c_{-k}``.

Products and projections go through zero-padded FFTs of per-axis length at
least ``4l + 1``, which makes the circular convolutions exact on
``Omega_{2l}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .indexset import IndexSet, from_grid, to_grid

DENSE_GATE = 4096


def fft_length(level: int) -> int:
    """Smallest fast FFT length that keeps lags in ``[-2l, 2l]`` alias free."""
    return sfft.next_fast_len(4 * level + 1)


def _wrapped_flat(ks: np.ndarray, period: int) -> np.ndarray:
    """Flat (C-order) positions of multi-indices ``ks mod period`` in a ``(P,)*d`` array."""
    ks = np.mod(ks, period)
    d = ks.shape[1]
    return np.ravel_multi_index(tuple(ks[:, i] for i in range(d)), (period,) * d)


def diagonal_counts(level: int, dim: int) -> np.ndarray:
    """Number of pairs ``(s, t)`` in ``Omega_l`` with ``s - t = k``, for ``k`` in ``Omega_{2l}``.

    Returns an integer vector in colex order; entry ``k`` equals
    ``prod_i (2l + 1 - |k_i|)``.
    """
    if level < 0:
        raise ValueError("level must be nonnegative")
    big = IndexSet(dim, 2 * level)
    return np.prod(2 * level + 1 - np.abs(big.indices), axis=1).astype(np.int64)


@dataclass(frozen=True)
class ToeplitzCoeffs:
    """Coefficients ``u`` over ``Omega_{2l}`` of ``T = sum_k u_k Theta_k``."""

    dim: int
    level: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex).reshape(-1)
        expected = (4 * self.level + 1) ** self.dim
        if c.shape[0] != expected:
            raise ValueError(f"expected {expected} coefficients, got {c.shape[0]}")
        object.__setattr__(self, "coeffs", c)

    @property
    def index_set(self) -> IndexSet:
        return IndexSet(self.dim, 2 * self.level)

    @property
    def size(self) -> int:
        """Side ``m_l`` of the represented square matrix."""
        return (2 * self.level + 1) ** self.dim

    def is_hermitian(self, tol: float = 0.0) -> bool:
        """``u_{-k} = conj(u_k)``; the colex order of ``-k`` is the reversed order."""
        return bool(np.all(np.abs(self.coeffs[::-1] - self.coeffs.conj()) <= tol))

    def frobenius_sq(self) -> float:
        """``||T||_F^2 = sum_k count_k |u_k|^2``."""
        counts = diagonal_counts(self.level, self.dim)
        return float(np.dot(counts, np.abs(self.coeffs) ** 2))

    @cached_property
    def _kernel_hat(self) -> np.ndarray:
        # convolution kernel is u_{-k}, laid out periodically
        P = fft_length(self.level)
        ker = np.zeros((P,) * self.dim, dtype=complex)
        flat = _wrapped_flat(-self.index_set.indices, P)
        ker.reshape(-1)[flat] = self.coeffs
        return sfft.fftn(ker)


def project_gram(U1: np.ndarray, level: int, dim: int) -> ToeplitzCoeffs:
    """Orthogonal projection of ``U1 U1^h`` onto generalized Toeplitz matrices.

    Each coefficient is the mean of the Gram matrix over the corresponding
    generalized diagonal, computed from the FFT autocorrelations of the
    columns of ``U1``.

    Parameters
    ----------
    U1 : (m_l, r) complex array
        Low-rank factor, rows in colex order over ``Omega_l``.
    level, dim : int
        ``l`` and ``d``.

    Returns
    -------
    ToeplitzCoeffs
    """
    U1 = np.asarray(U1, dtype=complex)
    if U1.ndim == 1:
        U1 = U1[:, None]
    m = (2 * level + 1) ** dim
    if U1.shape[0] != m:
        raise ValueError(f"factor has {U1.shape[0]} rows, expected (2*{level}+1)^{dim} = {m}")
    big = IndexSet(dim, 2 * level)
    if U1.shape[1] == 0:
        return ToeplitzCoeffs(dim, level, np.zeros(big.size, complex))
    P = fft_length(level)
    axes = tuple(range(dim))
    F = sfft.fftn(to_grid(U1, dim), s=(P,) * dim, axes=axes)
    power = np.sum(np.abs(F) ** 2, axis=-1)
    # corr[k] = sum_s U[s + k] conj(U[s]); the diagonal t - s = k averages conj of that
    corr = sfft.ifftn(power)
    flat = _wrapped_flat(-big.indices, P)
    u = corr.reshape(-1)[flat] / diagonal_counts(level, dim)
    return ToeplitzCoeffs(dim, level, u)


def toeplitz_matvec(t: ToeplitzCoeffs, w: np.ndarray) -> np.ndarray:
    """Product ``T w`` without forming ``T``.

    ``w`` may be a vector of length ``m_l`` or an ``(m_l, k)`` block of
    columns.
    """
    w = np.asarray(w, dtype=complex)
    vec = w.ndim == 1
    W = w[:, None] if vec else w
    if W.shape[0] != t.size:
        raise ValueError(f"vector has length {W.shape[0]}, expected {t.size}")
    d = t.dim
    P = fft_length(t.level)
    n = 2 * t.level + 1
    axes = tuple(range(d))
    Wf = sfft.fftn(to_grid(W, d), s=(P,) * d, axes=axes)
    out = sfft.ifftn(Wf * t._kernel_hat[..., None], axes=axes)
    # w sat at offsets j + l, so output row i lands at i + l in [0, 2l]
    out = out[(slice(0, n),) * d]
    res = from_grid(out, d)
    return res[:, 0] if vec else res


def materialize(t: ToeplitzCoeffs) -> np.ndarray:
    """Dense ``m_l x m_l`` matrix with entries ``T[s, t] = u_{t - s}``."""
    if t.size > DENSE_GATE:
        raise ValueError(f"dense Toeplitz of side {t.size} exceeds the gate {DENSE_GATE}")
    small = IndexSet(t.dim, t.level)
    big = t.index_set
    idx = small.indices
    diff = idx[None, :, :] - idx[:, None, :]
    pos = big.positions(diff.reshape(-1, t.dim)).reshape(t.size, t.size)
    return t.coeffs[pos]


def theta_matrix(k, side: int) -> np.ndarray:
    """Basis matrix ``Theta_k`` for blocks of side ``side`` (any positive size).

    ``Theta_k = theta_{k_d} x ... x theta_{k_1}`` with ``theta_j`` the
    ``side x side`` matrix having ones where ``col - row = j``.
    """
    out = np.ones((1, 1))
    for kj in k:
        out = np.kron(np.eye(side, k=int(kj)), out)
    return out


def moment_toeplitz(coeffs_2l: np.ndarray, level: int, dim: int) -> ToeplitzCoeffs:
    """Toeplitz coefficients of the moment matrix ``R[s, t] = c_{s - t}``.

    ``coeffs_2l`` are the Fourier moments of a measure over ``Omega_{2l}``
    in colex order; the result has ``u_k = c_{-k}``.
    """
    c = np.asarray(coeffs_2l, dtype=complex).reshape(-1)
    return ToeplitzCoeffs(dim, level, c[::-1])
