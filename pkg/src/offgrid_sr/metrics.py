"""Recovery metrics: tolerance-matched Jaccard index, flat norm, support error."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .measures import DiscreteMeasure, pairwise_torus_distances

FLAT_NORM_GATE = 60


def _points(S, dim: int | None = None) -> np.ndarray:
    if isinstance(S, DiscreteMeasure):
        return np.asarray(S.positions, float)
    S = np.asarray(S, float)
    if S.ndim == 1:
        S = S.reshape(-1, dim or 1)
    return S


@dataclass
class Matching:
    """Pairs ``(truth index, recovered index)`` with distance at most ``delta``."""

    pairs: list
    unmatched_truth: list
    unmatched_recovered: list
    delta: float
    distances: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)


def match_supports(S0, Sr, delta: float) -> Matching:
    """Maximum-cardinality matching of points closer than ``delta``.

    Among maximum matchings, the one with smallest total distance is
    returned.  Both goals are folded into a single assignment problem:
    admissible pairs cost ``dist - M`` with ``M`` larger than any total
    distance, other pairs cost zero and are discarded afterwards.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    A = _points(S0)
    B = _points(Sr, A.shape[1] if A.size else None)
    n0, nr = A.shape[0], B.shape[0]
    if n0 == 0 or nr == 0:
        return Matching([], list(range(n0)), list(range(nr)), delta)
    D = pairwise_torus_distances(A, B)
    ok = D <= delta
    big = 2.0 * (min(n0, nr) + 1) * max(delta, 1.0)
    cost = np.where(ok, D - big, 0.0)
    rows, cols = linear_sum_assignment(cost)
    keep = ok[rows, cols]
    pairs = [(int(i), int(j)) for i, j in zip(rows[keep], cols[keep])]
    mi = {i for i, _ in pairs}
    mj = {j for _, j in pairs}
    return Matching(
        pairs,
        [i for i in range(n0) if i not in mi],
        [j for j in range(nr) if j not in mj],
        delta,
        [float(D[i, j]) for i, j in pairs],
    )


def jaccard(S0, Sr, delta: float = 1e-2) -> float:
    """``|matched| / (|S0| + |Sr| - |matched|)``; 1 when both sets are empty."""
    A = _points(S0)
    B = _points(Sr, A.shape[1] if A.size else None)
    if A.shape[0] == 0 and B.shape[0] == 0:
        return 1.0
    if A.shape[0] == 0 or B.shape[0] == 0:
        return 0.0
    k = len(match_supports(A, B, delta))
    return k / (A.shape[0] + B.shape[0] - k)


def simplex_max(c: np.ndarray, A: np.ndarray, b: np.ndarray, tol: float = 1e-12, max_pivots: int = 100_000):
    """Maximize ``c^T x`` subject to ``A x <= b``, ``x >= 0`` with ``b >= 0``.

    Dense condensed-tableau simplex started from the slack basis, with
    Bland's smallest-index rule for entering and leaving variables so it
    cannot cycle.

    Returns
    -------
    value : float
    x : ndarray
    """
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    c = np.asarray(c, float)
    m, n = A.shape
    if np.any(b < 0):
        raise ValueError("the slack basis needs b >= 0")
    T = np.zeros((m + 1, n + 1))
    T[:m, :n] = A
    T[:m, n] = b
    T[m, :n] = -c
    nonbasic = list(range(n))  # labels of tableau columns
    basic = list(range(n, n + m))  # labels of tableau rows (slacks start basic)
    for _ in range(max_pivots):
        obj = T[m, :n]
        cand = np.flatnonzero(obj < -tol)
        if cand.size == 0:
            break
        j = min(cand, key=lambda k: nonbasic[k])
        col = T[:m, j]
        rows = np.flatnonzero(col > tol)
        if rows.size == 0:
            raise ValueError("linear program is unbounded")
        ratios = T[rows, n] / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best + tol * max(1.0, abs(best))]
        r = min(tied, key=lambda i: basic[i])
        p = T[r, j]
        prow = T[r].copy()
        pcol = T[:, j].copy()
        T -= np.outer(pcol, prow / p)
        T[r] = prow / p
        T[:, j] = -pcol / p
        T[r, j] = 1.0 / p
        basic[r], nonbasic[j] = nonbasic[j], basic[r]
    else:
        raise RuntimeError("simplex pivot limit reached")
    x = np.zeros(n + m)
    for i, lab in enumerate(basic):
        x[lab] = T[i, n]
    return float(T[m, n]), x[:n]


def _flat_norm_real(points: np.ndarray, masses: np.ndarray) -> float:
    keep = masses != 0
    points, masses = points[keep], masses[keep]
    n = points.shape[0]
    if n == 0:
        return 0.0
    # canonical input (sorted points, first mass positive) makes FN(a - b) == FN(b - a) bitwise
    order = np.lexsort(points.T)
    points, masses = points[order], masses[order]
    if masses[0] < 0:
        masses = -masses
    D = pairwise_torus_distances(points, points)
    # with g = f + 1: 0 <= g <= 2 and g_i - g_j <= d_ij, so the origin is feasible
    ii, jj = np.nonzero(~np.eye(n, dtype=bool))
    A = np.zeros((n + ii.size, n))
    A[np.arange(n), np.arange(n)] = 1.0
    A[n + np.arange(ii.size), ii] = 1.0
    A[n + np.arange(ii.size), jj] -= 1.0
    b = np.concatenate([np.full(n, 2.0), D[ii, jj]])
    val, _ = simplex_max(masses, A, b)
    return max(val - float(masses.sum()), 0.0)


def flat_norm(m1: DiscreteMeasure, m2: DiscreteMeasure) -> float:
    """Flat (bounded-Lipschitz) distance ``sup {int f d(m1 - m2): |f| <= 1, Lip f <= 1}``.

    The supremum is an LP over the values of ``f`` on the union support with
    the torus geodesic distance.  Complex amplitudes are handled part-wise
    and combined as ``sqrt(FN(Re)^2 + FN(Im)^2)``.
    """
    if m1.dim != m2.dim:
        raise ValueError("dimension mismatch")
    diff = m1 - m2
    if len(diff) > FLAT_NORM_GATE:
        raise ValueError(f"union support has {len(diff)} points, above the gate {FLAT_NORM_GATE}")
    pts = np.asarray(diff.positions)
    re = _flat_norm_real(pts, diff.amplitudes.real.copy())
    if np.all(diff.amplitudes.imag == 0):
        return re
    im = _flat_norm_real(pts, diff.amplitudes.imag.copy())
    return float(np.hypot(re, im))


def support_relative_error(x0, xr, delta: float | None = None) -> float:
    """``||x_r - x_0||_F / ||x_0||_F`` over optimally matched atoms.

    Differences are lifted to ``[-1/2, 1/2)`` per coordinate.  Both supports
    must have the same size; with ``delta`` every matched pair must also be
    within that distance.
    """
    A = _points(x0)
    B = _points(xr, A.shape[1] if A.size else None)
    if A.shape[0] != B.shape[0]:
        raise ValueError(
            f"{A.shape[0]} true vs {B.shape[0]} recovered atoms; report the Jaccard index instead"
        )
    if A.shape[0] == 0:
        return 0.0
    D = pairwise_torus_distances(A, B)
    rows, cols = linear_sum_assignment(D)
    if delta is not None and np.any(D[rows, cols] > delta):
        raise ValueError("some atoms are unmatched at the given tolerance; report the Jaccard index instead")
    lifted = np.mod(B[cols] - A[rows] + 0.5, 1.0) - 0.5
    return float(np.linalg.norm(lifted) / np.linalg.norm(A))
