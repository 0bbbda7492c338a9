"""Spectral approximation matrices of forward operators.

A forward operator ``Phi`` is approximated by ``A F_c`` where ``F_c`` maps a
measure to its Fourier moments on ``[-f_c, f_c]^d`` and ``A`` is the matrix of
kernel Fourier coefficients.  Three storage kinds are provided:

* ``Diagonal``: convolution observed in the Fourier domain (Dirichlet, Gaussian);
* ``SubsampledFFT``: convolution sampled on the regular grid ``{0, 1/L, ...}^d``,
  applied with zero-padded FFTs;
* ``Dense``: anything else (foveation), stored as a full matrix.

DFT convention: forward transforms carry ``exp(-2i pi .)`` and no
normalisation, inverse transforms carry ``1/N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft as sfft

from .indexset import IndexSet, from_grid, to_grid

DENSE_GATE = 4096


@dataclass(frozen=True)
class HilbertNorm:
    """Norm of the observation space: ``scale * euclidean``."""

    scale: float = 1.0

    def norm(self, y: np.ndarray) -> float:
        return self.scale * float(np.linalg.norm(y))

    def inner(self, a: np.ndarray, b: np.ndarray) -> complex:
        return self.scale**2 * complex(np.vdot(a, b))


class SpectralOperator:
    """Base class; subclasses implement ``apply``, ``adjoint`` and ``to_dense``."""

    kind: str = ""
    index_set: IndexSet
    output_dim: int
    hnorm: HilbertNorm
    # number of FFTs performed by one apply (or one adjoint)
    ffts_per_call: int = 0

    @property
    def fc(self) -> int:
        return self.index_set.halfwidth

    @property
    def dim(self) -> int:
        return self.index_set.dim

    def _check_z(self, z):
        z = np.asarray(z, dtype=complex)
        if z.shape != (self.index_set.size,):
            raise ValueError(f"coefficient vector has shape {z.shape}, expected ({self.index_set.size},)")
        return z

    def _check_y(self, y):
        y = np.asarray(y, dtype=complex)
        if y.shape != (self.output_dim,):
            raise ValueError(f"observation has shape {y.shape}, expected ({self.output_dim},)")
        return y

    def apply(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dense(self) -> np.ndarray:
        raise NotImplementedError

    def normal(self, z: np.ndarray) -> np.ndarray:
        return self.adjoint(self.apply(z))


@dataclass(frozen=True)
class DiagonalOperator(SpectralOperator):
    index_set: IndexSet
    diag: np.ndarray
    hnorm: HilbertNorm = field(default_factory=HilbertNorm)
    kind: str = "Diagonal"

    def __post_init__(self):
        diag = np.asarray(self.diag, dtype=complex)
        if diag.shape != (self.index_set.size,):
            raise ValueError("diagonal length must equal (2 f_c + 1)^d")
        object.__setattr__(self, "diag", diag)

    @property
    def output_dim(self) -> int:
        return self.index_set.size

    def apply(self, z):
        return self.diag * self._check_z(z)

    def adjoint(self, y):
        return np.conj(self.diag) * self._check_y(y)

    def to_dense(self):
        _gate(self.index_set.size)
        return np.diag(self.diag)


@dataclass(frozen=True)
class SubsampledFFTOperator(SpectralOperator):
    """Convolution with a periodic kernel sampled on ``G = (1/L)[0, L-1]^d``.

    Dense form: ``A[t, k] = D_k exp(2i pi <k, t>)`` with ``D`` the kernel
    coefficients.  The fine grid has side ``K = L q >= 2 f_c + 1``.
    """

    index_set: IndexSet
    L: int
    kernel_diag: np.ndarray
    q: int = 0
    kind: str = "SubsampledFFT"
    ffts_per_call: int = 1

    def __post_init__(self):
        n = self.index_set.side
        kd = np.asarray(self.kernel_diag, dtype=complex)
        if kd.shape != (self.index_set.size,):
            raise ValueError(
                f"kernel_diag has length {kd.shape[0] if kd.ndim else 0}, expected {self.index_set.size}"
            )
        if self.L < 1:
            raise ValueError("grid side L must be >= 1")
        qmin = math.ceil(n / self.L)
        q = self.q or qmin
        if q < qmin:
            raise ValueError(f"upsampling factor q={q} below ceil((2f_c+1)/L)={qmin}")
        object.__setattr__(self, "kernel_diag", kd)
        object.__setattr__(self, "q", q)
        d = self.index_set.dim
        K = self.L * q
        m = np.arange(K)
        # modulation undoing the shift of [-f_c, f_c] onto [0, 2 f_c]
        e1 = np.exp(-2j * np.pi * self.index_set.halfwidth * m / K)
        ec = e1
        for _ in range(d - 1):
            ec = np.multiply.outer(ec, e1)
        object.__setattr__(self, "_ec", ec)

    @property
    def output_dim(self) -> int:
        return self.L ** self.index_set.dim

    @property
    def hnorm(self) -> HilbertNorm:
        return HilbertNorm(1.0 / self.L)

    @property
    def fine_side(self) -> int:
        return self.L * self.q

    def apply(self, z):
        z = self._check_z(z)
        d, n, K = self.index_set.dim, self.index_set.side, self.fine_side
        padded = np.zeros((K,) * d, dtype=complex)
        padded[(slice(0, n),) * d] = to_grid(self.kernel_diag * z, d)
        fine = sfft.ifftn(padded) * K**d
        fine *= self._ec
        return from_grid(fine[(slice(None, None, self.q),) * d], d)

    def adjoint(self, y):
        y = self._check_y(y)
        d, n, K = self.index_set.dim, self.index_set.side, self.fine_side
        fine = np.zeros((K,) * d, dtype=complex)
        fine[(slice(None, None, self.q),) * d] = to_grid(y, d)
        fine *= np.conj(self._ec)
        spec = sfft.fftn(fine)[(slice(0, n),) * d]
        return np.conj(self.kernel_diag) * from_grid(spec, d)

    def to_dense(self):
        _gate(self.index_set.size)
        t = grid_points(self.L, self.index_set.dim)
        phase = np.exp(2j * np.pi * (t @ self.index_set.indices.T))
        return phase * self.kernel_diag[None, :]


@dataclass(frozen=True)
class DenseOperator(SpectralOperator):
    index_set: IndexSet
    matrix: np.ndarray
    hnorm: HilbertNorm = field(default_factory=HilbertNorm)
    kind: str = "Dense"

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[1] != self.index_set.size:
            raise ValueError(f"matrix shape {mat.shape} incompatible with {self.index_set.size} coefficients")
        object.__setattr__(self, "matrix", mat)

    @property
    def output_dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, z):
        return self.matrix @ self._check_z(z)

    def adjoint(self, y):
        return self.matrix.conj().T @ self._check_y(y)

    def to_dense(self):
        return self.matrix.copy()


def _gate(size: int):
    if size > DENSE_GATE:
        raise ValueError(f"dense materialisation limited to (2f_c+1)^d <= {DENSE_GATE}, got {size}")


def grid_points(L: int, d: int) -> np.ndarray:
    """Points ``n / L`` of the regular grid, colex order, shape ``(L^d, d)``."""
    axes = [np.arange(L) / L] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1, order="F") for m in mesh], axis=1)


def _sigma_vector(sigma, d: int) -> np.ndarray:
    sig = np.broadcast_to(np.asarray(sigma, dtype=float), (d,)).copy()
    if np.any(sig <= 0):
        raise ValueError(f"standard deviations must be positive, got {sig}")
    return sig


def gaussian_coefficients(fc: int, d: int, sigma) -> np.ndarray:
    """``ĝ(k) = (2pi)^{d/2} det(S)^{1/2} exp(-2 pi^2 <k, S k>)``, ``S = diag(sigma^2)``."""
    sig = _sigma_vector(sigma, d)
    k = IndexSet(d, fc).indices
    quad = (k.astype(float) ** 2) @ (sig**2)
    return (2 * np.pi) ** (d / 2) * np.prod(sig) * np.exp(-2 * np.pi**2 * quad)


def build_dirichlet(fc: int, d: int) -> DiagonalOperator:
    if fc < 1:
        raise ValueError("cutoff frequency must be >= 1")
    idx = IndexSet(d, fc)
    return DiagonalOperator(idx, np.ones(idx.size, dtype=complex))


def build_gaussian(fc: int, d: int, sigma) -> DiagonalOperator:
    if fc < 1:
        raise ValueError("cutoff frequency must be >= 1")
    return DiagonalOperator(IndexSet(d, fc), gaussian_coefficients(fc, d, sigma))


def build_subsampled(fc: int, d: int, L: int, kernel_diag, q: int | None = None) -> SubsampledFFTOperator:
    return SubsampledFFTOperator(IndexSet(d, fc), L, kernel_diag, q or 0)


def gaussian_profile(t: np.ndarray) -> np.ndarray:
    """Unnormalised Gaussian ``exp(-|t|^2 / 2)`` over the last axis."""
    return np.exp(-0.5 * np.sum(t**2, axis=-1))


def build_foveation(
    fc: int,
    d: int,
    L: int,
    g: Callable[[np.ndarray], np.ndarray] = gaussian_profile,
    sigma_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    n_fine: int | None = None,
) -> DenseOperator:
    """Dense operator of the kernel ``(s, x) -> g((s - x) / sigma(x))`` on the grid.

    Row ``s`` holds the coefficients ``c_{-k}`` of the periodised map
    ``x -> g((s - x) / sigma(x))``, computed with a DFT on a fine grid of side
    ``n_fine`` (default ``max(8 f_c, 4 L)``).  ``sigma_fn`` maps an ``(M, d)``
    array of points to ``(M,)`` or ``(M, d)`` positive widths.
    """
    if L < 1:
        raise ValueError("grid side L must be >= 1")
    if sigma_fn is None:
        raise ValueError("a width function is required")
    idx = IndexSet(d, fc)
    N = n_fine or max(8 * fc, 4 * L)
    x = grid_points(N, d)
    sig = np.asarray(sigma_fn(x), dtype=float)
    if sig.ndim == 1:
        sig = sig[:, None]
    sig = np.broadcast_to(sig, x.shape)
    if np.any(sig <= 0):
        raise ValueError("width function must be positive")
    # enough periodic images for the widest kernel to decay below 1e-16
    n_img = int(math.ceil(9.0 * sig.max())) + 1
    shifts = np.stack(
        [m.reshape(-1) for m in np.meshgrid(*[np.arange(-n_img, n_img + 1)] * d, indexing="ij")],
        axis=1,
    ).astype(float)
    cols = (idx.indices % N)
    col_pos = cols @ (N ** np.arange(d))  # colex position inside the fine grid
    rows = []
    for s in grid_points(L, d):
        delta = (s[None, :] - x + 0.5) % 1.0 - 0.5
        h = np.zeros(x.shape[0])
        for j in shifts:
            h += g((delta + j) / sig)
        coeffs = from_grid(sfft.ifftn(to_grid(h.astype(complex), d)), d)
        rows.append(coeffs[col_pos])
    return DenseOperator(idx, np.array(rows), HilbertNorm(1.0 / L))


def spectral_truncation_error(sigma, d: int, fcs, cap: int | None = None) -> np.ndarray:
    """Tail energy ``sum_{|k|_inf > f_c} |ĝ(k)|^2`` of a Gaussian kernel.

    The tail is summed directly (no subtraction) over ``|k|_inf <= cap``, so
    tiny tails keep their relative accuracy.
    """
    sig = _sigma_vector(sigma, d)
    fcs = [int(f) for f in fcs]
    if cap is None:
        cap = max(fcs) + int(math.ceil(10.0 / (np.pi * sig.min()))) + 1
    k = np.arange(cap + 1, dtype=float)
    out = []
    for f in fcs:
        head, tail = [], []
        for s in sig:
            e = ((2 * np.pi) ** 0.5 * s * np.exp(-2 * np.pi**2 * s**2 * k**2)) ** 2
            head.append(e[0] + 2 * e[1 : f + 1].sum())
            tail.append(2 * e[f + 1 :][::-1].sum())
        # prod(head+tail) - prod(head) expanded term by term
        total = 0.0
        for i in range(d):
            total += np.prod(head[:i]) * tail[i] * np.prod([h + t for h, t in zip(head[i + 1 :], tail[i + 1 :])])
        out.append(total)
    return np.array(out)


def gaussian_energy(sigma, d: int, f: int) -> float:
    """``sum_{|k|_inf <= f} |ĝ(k)|^2``."""
    sig = _sigma_vector(sigma, d)
    k = np.arange(-f, f + 1, dtype=float)
    return float(np.prod([np.sum(((2 * np.pi) ** 0.5 * s * np.exp(-2 * np.pi**2 * s**2 * k**2)) ** 2) for s in sig]))
