"""Support extraction from a low-rank factor of a moment matrix.

For a measure ``sum_j a_j delta_{x_j}`` the moment matrix is
``R = V diag(|a|) V^h`` with columns ``v(x)_k = exp(-2i pi <k, x>)`` over
``Omega_l``.  Bringing a factor of ``R`` to reduced column echelon form
``U~`` (pivot rows ``gamma``) gives ``v(x_j) = U~ w(x_j)`` with
``w(x) = v(x)[gamma]``.  Selecting the rows ``gamma + e_n`` of ``U~`` yields
multiplication matrices ``N_n`` with ``N_n w(x_j) = exp(-2i pi x_{j,n}) w(x_j)``.
A Schur basis of a random convex combination of the ``N_n`` diagonalizes all
of them jointly, and the arguments of the diagonal entries give the
positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .indexset import IndexSet
from .measures import DiscreteMeasure, make_rng, pairwise_torus_distances
from .solver import LowRankState, Problem, gram_rank
from .operators import SpectralOperator


class ExtractionError(ValueError):
    """Raised when a factor does not support the extraction steps."""


def moment_vectors(positions: np.ndarray, idx: IndexSet) -> np.ndarray:
    """Matrix with columns ``exp(-2i pi <k, x_j>)`` for ``k`` in ``idx``."""
    positions = np.asarray(positions, float).reshape(-1, idx.dim)
    return np.exp(-2j * np.pi * (idx.indices @ positions.T))


def moment_factor(m: DiscreteMeasure, level: int) -> np.ndarray:
    """Exact bordered factor ``U = [U1; zeta^T]`` of the moment matrix of ``m``.

    ``U1 U1^h`` is the moment matrix of ``|m|`` on ``Omega_level`` and
    ``U1 conj(zeta)`` the Fourier moments of ``m``, so the bordered matrix is
    the one a converged solver would return for a noiseless instance.
    """
    idx = IndexSet(m.dim, level)
    mag = np.abs(m.amplitudes)
    phase = np.exp(-1j * np.angle(m.amplitudes))
    U1 = moment_vectors(m.positions, idx) * np.sqrt(mag)
    zeta = np.sqrt(mag) * phase
    return np.vstack([U1, zeta[None, :]])


def truncate_rank(U: np.ndarray, rtol: float = 1e-6) -> np.ndarray:
    """Compress the columns of ``U`` to an orthogonal basis scaled by singular values.

    Keeps the directions whose squared singular value exceeds ``rtol`` times
    the largest, i.e. the numerical rank of ``U U^h``.
    """
    U = np.asarray(U, dtype=complex)
    if U.size == 0:
        return U.reshape(U.shape[0], 0)
    W, s, _ = np.linalg.svd(U, full_matrices=False)
    r = gram_rank(U, rtol)
    return W[:, :r] * s[:r]


def column_echelon(U: np.ndarray, tol: float = 1e-9, allowed_rows=None):
    """Reduced column echelon form of ``U`` by elimination with column pivoting.

    Rows are scanned top-down; in each row the largest remaining entry (if
    above ``tol * ||U||``) becomes a pivot, is scaled to one, and is cleared
    from every other column.

    Parameters
    ----------
    U : (m, r) array
    tol : float
        Relative pivot threshold.
    allowed_rows : boolean mask, optional
        Rows eligible as pivots; all rows by default.

    Returns
    -------
    Ut : (m, r) array
        Same column space as ``U`` with ``Ut[pivots] = I``.
    pivots : (r,) int array
        Pivot rows in increasing order.
    """
    Ut = np.array(U, dtype=complex)
    m, r = Ut.shape
    if r == 0:
        return Ut, np.zeros(0, dtype=int)
    thresh = tol * np.linalg.norm(Ut)
    allowed = np.ones(m, bool) if allowed_rows is None else np.asarray(allowed_rows, bool)
    pivots = []
    for i in range(m):
        j0 = len(pivots)
        if j0 == r:
            break
        if not allowed[i]:
            continue
        row = np.abs(Ut[i, j0:])
        jmax = int(np.argmax(row))
        if row[jmax] <= thresh:
            continue
        jmax += j0
        Ut[:, [j0, jmax]] = Ut[:, [jmax, j0]]
        Ut[:, j0] /= Ut[i, j0]
        others = [j for j in range(r) if j != j0]
        Ut[:, others] -= np.outer(Ut[:, j0], Ut[i, others])
        Ut[i, others] = 0.0
        Ut[i, j0] = 1.0
        pivots.append(i)
    if len(pivots) < r:
        raise ExtractionError(
            f"factor has numerical rank {len(pivots)} < {r} columns; truncate its rank first"
        )
    return Ut, np.array(pivots, dtype=int)


def multiplication_matrices(Ut: np.ndarray, pivots, level: int, dim: int) -> list[np.ndarray]:
    """Matrices ``N_n = Ut[gamma + e_n, :]`` for ``n = 1..d``."""
    idx = IndexSet(dim, level)
    gam = idx.indices[np.asarray(pivots, int)]
    out = []
    for n in range(dim):
        shifted = gam.copy()
        shifted[:, n] += 1
        if not np.all(idx.contains(shifted)):
            bad = shifted[~idx.contains(shifted)][0]
            raise ExtractionError(f"shifted pivot index {tuple(bad)} leaves [-{level}, {level}]^{dim}")
        out.append(Ut[idx.positions(shifted)])
    return out


def _echelon_shift_closed(U: np.ndarray, level: int, dim: int):
    Ut, piv = column_echelon(U)
    try:
        return Ut, piv, multiplication_matrices(Ut, piv, level, dim)
    except ExtractionError:
        pass
    # prefer pivots whose forward shifts stay inside the box
    idx = IndexSet(dim, level)
    interior = np.all(idx.indices < level, axis=1)
    Ut, piv = column_echelon(U, allowed_rows=interior)
    return Ut, piv, multiplication_matrices(Ut, piv, level, dim)


@dataclass
class SupportResult:
    positions: np.ndarray
    moduli: np.ndarray
    pivots: np.ndarray
    weights: np.ndarray


def _sort_colex(pos: np.ndarray) -> np.ndarray:
    if pos.shape[0] == 0:
        return np.zeros(0, dtype=int)
    return np.lexsort(pos.T)


def extract_support(U: np.ndarray, level: int, dim: int, seed: int = 0,
                    rtol: float = 1e-6) -> SupportResult:
    """Positions of the atoms behind a moment-matrix factor.

    Parameters
    ----------
    U : array
        Factor with ``(2l+1)^d`` rows (or the bordered factor with one more
        row, whose last row is ignored).
    level, dim : int
    seed : int
        Seed for the random combination weights.
    rtol : float
        Relative threshold for the rank truncation.

    Returns
    -------
    SupportResult
        Positions sorted colexicographically, with ``|z_{j,n}|`` moduli
        (one for exact moment factors).
    """
    U = np.asarray(U, dtype=complex)
    m = (2 * level + 1) ** dim
    if U.shape[0] == m + 1:
        U = U[:-1]
    if U.shape[0] != m:
        raise ExtractionError(f"factor has {U.shape[0]} rows, expected {m}")
    Ur = truncate_rank(U, rtol)
    r = Ur.shape[1]
    if r == 0:
        return SupportResult(np.zeros((0, dim)), np.zeros((0, dim)), np.zeros(0, int), np.ones(dim) / dim)
    Ut, piv, Ns = _echelon_shift_closed(Ur, level, dim)
    rng = make_rng(seed)
    for attempt in range(2):
        lam = rng.dirichlet(np.ones(dim))
        N = sum(l * Nn for l, Nn in zip(lam, Ns))
        T, Q = sla.schur(N, output="complex")
        ev = np.diag(T)
        gap = np.inf
        if r > 1:
            diff = np.abs(ev[:, None] - ev[None, :]) + np.diag(np.full(r, np.inf))
            gap = diff.min()
        if gap >= 1e-8:
            break
    z = np.stack([np.einsum("ij,ik,kj->j", Q.conj(), Nn, Q) for Nn in Ns], axis=1)
    pos = np.mod(-np.angle(z) / (2 * np.pi), 1.0)
    pos[pos >= 1.0] = 0.0
    order = _sort_colex(pos)
    return SupportResult(pos[order], np.abs(z)[order], piv, lam)


def atom_matrix(positions: np.ndarray, op: SpectralOperator) -> np.ndarray:
    """Columns ``A F_c delta_{x_j}``."""
    V = moment_vectors(positions, op.index_set)
    if V.shape[1] == 0:
        return np.zeros((op.output_dim, 0), complex)
    return np.stack([op.apply(V[:, j]) for j in range(V.shape[1])], axis=1)


def recover_amplitudes(positions: np.ndarray, prob: Problem, mode: str = "lsq",
                       z_tilde: np.ndarray | None = None, max_cond: float = 1e12) -> np.ndarray:
    """Amplitudes of atoms at fixed positions by least squares.

    ``lsq`` fits the observation ``y``; ``debiased`` fits ``A z`` where ``z``
    are the solver's coefficients (``z_tilde`` over ``Omega_l`` or already
    restricted to the observed frequencies).
    """
    positions = np.asarray(positions, float).reshape(-1, prob.dim)
    r = positions.shape[0]
    if r == 0:
        return np.zeros(0, complex)
    if mode == "lsq":
        target = prob.y
    elif mode == "debiased":
        if z_tilde is None:
            raise ValueError("debiased mode needs the solver coefficients")
        zt = np.asarray(z_tilde, complex)
        z = prob.restrict(zt) if zt.shape[0] == prob.m else zt
        target = prob.op.apply(z)
    else:
        raise ValueError(f"unknown amplitude mode {mode!r}")
    Phi = atom_matrix(positions, prob.op)
    G = Phi.conj().T @ Phi
    cond = np.linalg.cond(G) if r > 1 else (0.0 if G[0, 0] != 0 else np.inf)
    if not cond < max_cond:
        msg = f"atom Gram matrix is ill-conditioned (cond={cond:.3g})"
        if r > 1:
            D = pairwise_torus_distances(positions, positions) + np.diag(np.full(r, np.inf))
            i, j = np.unravel_index(np.argmin(D), D.shape)
            msg += f"; closest atoms {i} and {j} at distance {D[i, j]:.3g}"
        raise ExtractionError(msg)
    a, *_ = np.linalg.lstsq(Phi, target, rcond=None)
    return a


def flatness_check(U: np.ndarray, level: int, dim: int, rtol: float = 1e-6) -> bool:
    """Whether ``U U^h`` has the same rank as its principal block on ``Omega_{l-1}``.

    Ranks count singular values of ``U`` (and of its row restriction) above
    ``rtol`` times the largest one.
    """
    if level < 2:
        raise ValueError("flatness needs level >= 2")
    U = np.asarray(U, dtype=complex)
    m = (2 * level + 1) ** dim
    if U.shape[0] == m + 1:
        U = U[:-1]
    mask = IndexSet(dim, level).subset_mask(IndexSet(dim, level - 1))

    def rank(M):
        if M.size == 0:
            return 0
        s = np.linalg.svd(M, compute_uv=False)
        return 0 if s[0] == 0 else int(np.sum(s > rtol * s[0]))

    return rank(U) == rank(U[mask])


@dataclass
class ExtractionResult:
    measure: DiscreteMeasure
    pivots: np.ndarray
    flat: bool
    residual: float
    certificate: np.ndarray
    moduli: np.ndarray
    notes: list = field(default_factory=list)

    def diagnostics(self) -> dict:
        return {
            "atoms": len(self.measure),
            "flat": bool(self.flat),
            "residual": float(self.residual),
            "pivots": [int(p) for p in self.pivots],
            "moduli": self.moduli.tolist(),
            "certificate": self.certificate.tolist(),
            "notes": list(self.notes),
        }


def certificate_values(prob: Problem, z: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """``|eta(x_j)|`` for the dual certificate ``eta = Phi^*(y - A z) / lam``."""
    p = (prob.y - prob.op.apply(z)) / prob.lam
    a = prob.s2 * prob.op.adjoint(p)
    V = moment_vectors(positions, prob.op.index_set)
    return np.abs(V.conj().T @ a)


def extract(state: LowRankState, prob: Problem, seed: int = 0, mode: str = "lsq",
            rtol: float = 1e-6) -> ExtractionResult:
    """Full pipeline: positions, amplitudes, flatness flag and diagnostics."""
    U1 = state.U1
    notes = []
    Ur = truncate_rank(U1, rtol)
    sup = extract_support(Ur, prob.level, prob.dim, seed, rtol)
    amps = recover_amplitudes(sup.positions, prob, mode, state.z_tilde)
    meas = DiscreteMeasure(sup.positions, amps, prob.dim)
    if prob.level >= 2:
        flat = flatness_check(Ur, prob.level, prob.dim)
    else:
        flat = False
        notes.append("flatness undefined for level < 2")
    z_meas = moment_vectors(sup.positions, prob.op.index_set) @ amps
    resid = prob.hnorm.norm(prob.y - prob.op.apply(z_meas))
    cert = certificate_values(prob, prob.restrict(state.z_tilde), sup.positions)
    return ExtractionResult(meas, sup.pivots, flat, resid, cert, sup.moduli, notes)
