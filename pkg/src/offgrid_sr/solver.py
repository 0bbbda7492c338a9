"""FFT-based Frank-Wolfe solver for the Toeplitz-penalized SDP relaxation.

The variable is the bordered Hermitian matrix ``[[R, z~], [z~^h, tau]]``
stored as ``U U^h`` with ``U = [U1; zeta^T]``, so ``R = U1 U1^h``,
``z~ = U1 conj(zeta)`` and ``tau = ||zeta||^2``.  Only ``U`` is stored.  The
normalized objective is::

    f = C0 * ( (Tr R / m + tau) / 2
               + ||y - A z||_H^2 / (2 lam)
               + ||R - P_T R||_F^2 / (2 rho) )

with ``z`` the restriction of ``z~`` to the observed frequencies and
``C0 = 2 lam / ||y||_H^2`` (so the empty iterate has ``f = 1``).

Each outer iteration runs a power-iteration linear minimization oracle, an
exact line search over ``{alpha, beta >= 0, alpha + beta <= 1}``, then an
L-BFGS descent on ``U -> f(U U^h)``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.optimize as sopt

from .indexset import IndexSet
from .measures import make_rng
from .operators import HilbertNorm, SpectralOperator
from .toeplitz import ToeplitzCoeffs, diagonal_counts, project_gram, toeplitz_matvec

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("iter", "objective", "lambda1", "rank", "fft_calls", "wall_ms")


@dataclass
class SolverConfig:
    """Parameters of :func:`ffw_solve`.  ``level`` defaults to ``fc``."""

    fc: int
    level: int | None = None
    lambda0: float = 1e-2
    rho: float = 1.0
    eps_stop: float = 1e-8
    power_tol: float = 1e-8
    power_maxit: int = 2000
    bfgs_tol: float = 1e-11
    bfgs_maxit: int = 500
    max_outer_iters: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.level is None:
            self.level = self.fc
        if self.fc < 1:
            raise ValueError("fc must be >= 1")
        if self.level < self.fc:
            raise ValueError(f"level {self.level} must be >= fc {self.fc}")
        if self.lambda0 <= 0 or self.rho <= 0:
            raise ValueError("lambda0 and rho must be positive")
        for name in ("eps_stop", "power_tol", "bfgs_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.power_maxit < 1 or self.bfgs_maxit < 1 or self.max_outer_iters < 1:
            raise ValueError("iteration caps must be >= 1")


class FFTCounter:
    """Tally of multidimensional FFTs executed during a solve."""

    def __init__(self):
        self.count = 0

    def add(self, n: int):
        self.count += int(n)


def trig_poly_grid(coeffs: np.ndarray, idx: IndexSet, n: int) -> np.ndarray:
    """Values of ``sum_k a_k exp(2i pi <k, x>)`` on the grid ``x = j / n``.

    Returned as a ``(n,)*d`` array whose axis ``i`` carries ``x_i``.
    """
    d = idx.dim
    buf = np.zeros((n,) * d, dtype=complex)
    ks = np.mod(idx.indices, n)
    buf[tuple(ks[:, i] for i in range(d))] = coeffs
    return sfft.ifftn(buf) * float(n) ** d


def trig_poly_sup(coeffs: np.ndarray, idx: IndexSet, oversample: int = 16, polish: int = 8) -> float:
    """Supremum over the torus of ``|sum_k a_k exp(2i pi <k, x>)|``.

    A grid of ``oversample * (2f + 1)`` points per axis locates the peaks and
    the best ``polish`` grid points are refined by bounded quasi-Newton
    steps on the exact polynomial.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    if not np.any(coeffs):
        return 0.0
    d = idx.dim
    n = oversample * idx.side
    vals = np.abs(trig_poly_grid(coeffs, idx, n)).reshape(-1)
    best = float(vals.max())
    order = np.argsort(vals)[::-1][:polish]
    ks = idx.indices.astype(float)

    def neg_sq(x):
        e = np.exp(2j * np.pi * (ks @ x))
        p = np.dot(coeffs, e)
        dp = (2j * np.pi * ks * (coeffs * e)[:, None]).sum(axis=0)
        return -abs(p) ** 2, -2 * np.real(np.conj(p) * dp)

    for flat in order:
        x0 = np.array(np.unravel_index(flat, (n,) * d), dtype=float) / n
        bounds = [(xi - 1.0 / n, xi + 1.0 / n) for xi in x0]
        res = sopt.minimize(neg_sq, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                            options={"ftol": 1e-15, "gtol": 1e-14, "maxiter": 50})
        best = max(best, float(np.sqrt(max(-res.fun, 0.0))))
    return best


class Problem:
    """A BLASSO instance: operator, observation, regularization and relaxation order.

    Parameters
    ----------
    op : SpectralOperator
    y : array
        Observation, length ``op.output_dim``.
    lam : float
        Regularization weight (already resolved, see :func:`resolve_lambda`).
    level : int, optional
        Relaxation order ``l >= fc``; defaults to ``fc``.
    hnorm : HilbertNorm, optional
        Defaults to the operator's observation norm.
    """

    def __init__(self, op: SpectralOperator, y, lam: float, level: int | None = None,
                 hnorm: HilbertNorm | None = None):
        self.op = op
        self.y = op._check_y(y)
        self.hnorm = hnorm if hnorm is not None else op.hnorm
        self.lam = float(lam)
        self.level = op.fc if level is None else int(level)
        if self.level < op.fc:
            raise ValueError(f"level {self.level} must be >= fc {op.fc}")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        self.ynorm_sq = self.hnorm.norm(self.y) ** 2
        if not self.ynorm_sq > 0:
            raise ValueError("observation is zero")
        self.C0 = 2 * self.lam / self.ynorm_sq
        self.s2 = self.hnorm.scale**2
        self.dim = op.dim
        self.fc = op.fc
        self.index_set = IndexSet(self.dim, self.level)
        self.m = self.index_set.size
        self.obs_mask = self.index_set.subset_mask(op.index_set)
        self.counts = diagonal_counts(self.level, self.dim)

    @classmethod
    def from_lambda0(cls, op: SpectralOperator, y, lambda0: float, level: int | None = None,
                     hnorm: HilbertNorm | None = None) -> Problem:
        return cls(op, y, resolve_lambda(op, y, lambda0, hnorm), level, hnorm)

    def restrict(self, zt: np.ndarray) -> np.ndarray:
        """Coefficients on ``Omega_c`` of a vector over ``Omega_l``."""
        return zt[self.obs_mask]

    def extend(self, z: np.ndarray) -> np.ndarray:
        out = np.zeros(self.m, dtype=complex)
        out[self.obs_mask] = z
        return out


def resolve_lambda(op: SpectralOperator, y, lambda0: float, hnorm: HilbertNorm | None = None) -> float:
    """``lam = lambda0 * sup_x |(Phi^* y)(x)|`` with ``Phi^* y`` a trigonometric polynomial."""
    y = op._check_y(y)
    if not np.any(y):
        raise ValueError("observation is zero")
    if lambda0 <= 0:
        raise ValueError("lambda0 must be positive")
    hn = hnorm if hnorm is not None else op.hnorm
    return float(lambda0) * trig_poly_sup(hn.scale**2 * op.adjoint(y), op.index_set)


@dataclass
class LowRankState:
    """Factor ``U = [U1; zeta^T]`` of shape ``(m_l + 1, r)``."""

    U: np.ndarray
    objective: float | None = None

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=complex)
        if self.U.ndim != 2:
            raise ValueError("factor must be two-dimensional")

    @classmethod
    def empty(cls, m: int) -> LowRankState:
        return cls(np.zeros((m + 1, 0), dtype=complex), 1.0)

    @property
    def U1(self) -> np.ndarray:
        return self.U[:-1]

    @property
    def zeta(self) -> np.ndarray:
        return self.U[-1]

    @property
    def z_tilde(self) -> np.ndarray:
        return self.U1 @ np.conj(self.zeta)

    @property
    def tau(self) -> float:
        return float(np.real(np.vdot(self.zeta, self.zeta)))

    @property
    def ncols(self) -> int:
        return self.U.shape[1]

    def rank(self, rtol: float = 1e-6) -> int:
        return gram_rank(self.U1, rtol)


def gram_rank(U: np.ndarray, rtol: float = 1e-6) -> int:
    """Numerical rank of ``U U^h``: eigenvalues above ``rtol`` times the largest."""
    if U.size == 0:
        return 0
    s = np.linalg.svd(U, compute_uv=False) ** 2
    if s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


class _Local:
    """Quantities derived from one factor, shared by objective, gradient and line search."""

    def __init__(self, U: np.ndarray, prob: Problem, rho: float, counter: FFTCounter):
        self.U = U
        self.prob = prob
        self.rho = rho
        self.counter = counter
        U1, zeta = U[:-1], U[-1]
        self.U1 = U1
        self.zeta = zeta
        self.zt = U1 @ np.conj(zeta)
        self.tau = float(np.real(np.vdot(zeta, zeta)))
        self.trace = float(np.real(np.vdot(U1, U1)))
        op = prob.op
        self.Az = op.apply(prob.restrict(self.zt))
        self.resid = self.Az - prob.y
        self.g = prob.extend(prob.s2 * op.adjoint(self.resid))
        counter.add(2 * op.ffts_per_call)
        self.gram = U1.conj().T @ U1
        self.toep = project_gram(U1, prob.level, prob.dim)
        if U1.shape[1]:
            counter.add(U1.shape[1] + 1)
        self.R_fro_sq = float(np.real(np.vdot(self.gram, self.gram)))
        self.PR_fro_sq = float(np.dot(prob.counts, np.abs(self.toep.coeffs) ** 2))

    @property
    def penalty(self) -> float:
        """``||R - P_T R||_F^2`` from factored quantities."""
        return self.R_fro_sq - self.PR_fro_sq

    @property
    def value(self) -> float:
        p = self.prob
        data = p.s2 * float(np.real(np.vdot(self.resid, self.resid)))
        return p.C0 * (0.5 * (self.trace / p.m + self.tau) + data / (2 * p.lam)
                       + self.penalty / (2 * self.rho))

    def grad_apply(self, W: np.ndarray) -> np.ndarray:
        """``(grad f) W`` for a vector or a block of columns ``W`` of height ``m + 1``."""
        p = self.prob
        vec = W.ndim == 1
        W = W[:, None] if vec else W
        W1, om = W[:-1], W[-1]
        top = W1 / (2 * p.m)
        top = top + (self.U1 @ (self.U1.conj().T @ W1) - toeplitz_matvec(self.toep, W1)) / self.rho
        self.counter.add(2 * W1.shape[1])
        top = top + np.outer(self.g, om) / (2 * p.lam)
        bottom = (self.g.conj() @ W1) / (2 * p.lam) + om / 2
        out = p.C0 * np.vstack([top, bottom[None, :]])
        return out[:, 0] if vec else out

    def factor_grad(self) -> np.ndarray:
        """Gradient ``2 (grad f) U`` of ``U -> f(U U^h)``."""
        return 2 * self.grad_apply(self.U)


def _local(state, prob: Problem, rho: float, counter: FFTCounter | None = None) -> _Local:
    U = state.U if isinstance(state, LowRankState) else np.asarray(state, dtype=complex)
    return _Local(U, prob, rho, counter or FFTCounter())


def objective_value(state: LowRankState, prob: Problem, rho: float) -> float:
    """Normalized objective evaluated from the factor only."""
    return _local(state, prob, rho).value


def toeplitz_residual(state: LowRankState, prob: Problem) -> float:
    """``||R - P_T R||_F`` computed from the factor (clamped at zero)."""
    loc = _local(state, prob, 1.0)
    return float(np.sqrt(max(loc.penalty, 0.0)))


def gradient_apply(state: LowRankState, prob: Problem, rho: float, w: np.ndarray) -> np.ndarray:
    """Product of the objective gradient with ``w = [w1; omega]``."""
    w = np.asarray(w, dtype=complex)
    if w.shape[0] != prob.m + 1:
        raise ValueError(f"vector has length {w.shape[0]}, expected {prob.m + 1}")
    return _local(state, prob, rho).grad_apply(w)


@dataclass
class EigPair:
    value: float
    vector: np.ndarray
    converged: bool
    iterations: int


def _power_run(matvec, n: int, tol: float, maxit: int, rng: np.random.Generator):
    v = rng.uniform(-1, 1, n) + 1j * rng.uniform(-1, 1, n)
    v /= np.linalg.norm(v)
    lam, mv_norm = 0.0, 0.0
    for it in range(1, maxit + 1):
        w = matvec(v)
        lam = float(np.real(np.vdot(v, w)))
        mv_norm = float(np.linalg.norm(w))
        if mv_norm == 0.0:
            return lam, v, True, it, mv_norm
        w /= mv_norm
        # stop when consecutive iterates span the same line
        if 1.0 - abs(np.vdot(v, w)) < tol:
            return lam, v, True, it, mv_norm
        v = w
    return lam, v, False, maxit, mv_norm


def power_min_eig(matvec, n: int, tol: float = 1e-8, maxit: int = 2000, rng=None) -> EigPair:
    """Smallest eigenpair of a Hermitian operator by two power-iteration runs.

    The first run finds the eigenvalue of largest magnitude.  If that one is
    negative it is the minimum; otherwise the operator is shifted by it and a
    second run finds the minimum of the shifted operator.
    """
    rng = rng if rng is not None else make_rng(0)
    lam_a, v_a, conv_a, it_a, norm_a = _power_run(matvec, n, tol, maxit, rng)
    if conv_a and lam_a < 0:
        return EigPair(lam_a, v_a, True, it_a)
    # an unconverged first run may sit between +/- eigenvalues of equal size;
    # ||M v|| then still bounds the top of the spectrum from above
    sigma = lam_a if conv_a else max(lam_a, norm_a)
    lam_b, v_b, conv_b, it_b, _ = _power_run(lambda x: matvec(x) - sigma * x, n, tol, maxit, rng)
    return EigPair(lam_b + sigma, v_b, conv_b, it_a + it_b)


def _scaled_matvec(loc: _Local):
    """``J^{-1/2} grad f J^{-1/2}`` with ``J = diag(I / m, 1)``."""
    sq = np.sqrt(loc.prob.m)
    scale = np.full(loc.prob.m + 1, sq)
    scale[-1] = 1.0

    def mv(v):
        return scale * loc.grad_apply(scale * v)

    return mv


def min_eigpair(state: LowRankState, prob: Problem, rho: float, tol: float = 1e-8,
                maxit: int = 2000, rng=None, counter: FFTCounter | None = None,
                _loc: _Local | None = None) -> EigPair:
    """Minimum eigenpair of the ``J``-scaled objective gradient at ``state``."""
    loc = _loc if _loc is not None else _local(state, prob, rho, counter)
    return power_min_eig(_scaled_matvec(loc), prob.m + 1, tol, maxit, rng)


def lmo(lambda1: float, e1: np.ndarray, D0: float, m: int) -> np.ndarray | None:
    """Linear minimization oracle over ``{S >= 0, <S, J> <= D0}``.

    Returns the rank-one factor ``v = sqrt(D0) J^{-1/2} e1``, or ``None``
    (the zero candidate) when ``lambda1 >= 0``.
    """
    if not lambda1 < 0:
        return None
    v = np.sqrt(D0) * np.asarray(e1, dtype=complex).copy()
    v[:-1] *= np.sqrt(m)
    return v


def _quad1d_min(a: float, b: float, c: float) -> list[float]:
    """Candidate minimizers of ``a t^2 + b t + c`` on ``[0, 1]``."""
    out = [0.0, 1.0]
    if a > 0:
        out.append(min(max(-b / (2 * a), 0.0), 1.0))
    return out


def minimize_quadratic_simplex(c11, c22, c12, c1, c2, c0=0.0) -> tuple[float, float]:
    """Exact minimizer of ``c11 a^2 + c22 b^2 + c12 a b + c1 a + c2 b + c0`` over the triangle.

    The minimum of a quadratic over a polygon is reached at an interior
    stationary point, at a critical point of an edge, or at a vertex; all are
    enumerated and the best kept (first one on ties).
    """

    def q(a, b):
        return c11 * a * a + c22 * b * b + c12 * a * b + c1 * a + c2 * b + c0

    cands = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
    det = 4 * c11 * c22 - c12 * c12
    if c11 > 0 and det > 0:
        a = (c12 * c2 - 2 * c22 * c1) / det
        b = (c12 * c1 - 2 * c11 * c2) / det
        if a >= 0 and b >= 0 and a + b <= 1:
            cands.append((a, b))
    # edges b = 0, a = 0, a + b = 1 (a = t, b = 1 - t)
    cands += [(t, 0.0) for t in _quad1d_min(c11, c1, 0.0)]
    cands += [(0.0, t) for t in _quad1d_min(c22, c2, 0.0)]
    cands += [(t, 1.0 - t) for t in _quad1d_min(c11 + c22 - c12, c12 - 2 * c22 + c1 - c2, 0.0)]
    vals = [q(a, b) for a, b in cands]
    k = int(np.argmin(vals))
    return cands[k]


@dataclass
class LineSearchCoeffs:
    c11: float
    c22: float
    c12: float
    c1: float
    c2: float
    c0: float

    def value(self, a, b):
        return (self.c11 * a * a + self.c22 * b * b + self.c12 * a * b
                + self.c1 * a + self.c2 * b + self.c0)


def line_search_coeffs(state, v: np.ndarray | None, prob: Problem, rho: float,
                       _loc: _Local | None = None) -> LineSearchCoeffs:
    """Coefficients of ``(alpha, beta) -> f(alpha R + beta v v^h)``."""
    loc = _loc if _loc is not None else _local(state, prob, rho)
    p = prob
    k = p.C0
    dat = p.s2 / (2 * p.lam)
    Az = loc.Az
    c11 = k * (dat * float(np.real(np.vdot(Az, Az))) + loc.penalty / (2 * rho))
    c1 = k * (0.5 * (loc.tau + loc.trace / p.m) - 2 * dat * float(np.real(np.vdot(p.y, Az))))
    c0 = k * dat * float(np.real(np.vdot(p.y, p.y)))
    if v is None:
        return LineSearchCoeffs(c11, 0.0, 0.0, c1, 0.0, c0)
    w1, om = v[:-1], v[-1]
    Av = p.op.apply(p.restrict(w1) * np.conj(om))
    loc.counter.add(p.op.ffts_per_call)
    nw = float(np.real(np.vdot(w1, w1)))
    tw = project_gram(w1[:, None], p.level, p.dim)
    loc.counter.add(2)
    pen_ww = nw * nw - float(np.dot(p.counts, np.abs(tw.coeffs) ** 2))
    Uw = loc.U1.conj().T @ w1
    inner_RW = float(np.real(np.vdot(Uw, Uw)))
    inner_PRPW = float(np.real(np.dot(p.counts, np.conj(loc.toep.coeffs) * tw.coeffs)))
    c22 = k * (dat * float(np.real(np.vdot(Av, Av))) + pen_ww / (2 * rho))
    c12 = k * (2 * dat * float(np.real(np.vdot(Az, Av))) + (inner_RW - inner_PRPW) / rho)
    c2 = k * (0.5 * (abs(om) ** 2 + nw / p.m) - 2 * dat * float(np.real(np.vdot(p.y, Av))))
    return LineSearchCoeffs(c11, c22, c12, c1, c2, c0)


def line_search(state, v: np.ndarray | None, prob: Problem, rho: float,
                _loc: _Local | None = None) -> tuple[float, float]:
    """Exact minimizer ``(alpha, beta)`` of ``f(alpha R + beta v v^h)`` over the triangle.

    A zero candidate (``v is None``) forces ``beta = 0``.
    """
    c = line_search_coeffs(state, v, prob, rho, _loc)
    if v is None:
        a = min(_quad1d_min(c.c11, c.c1, 0.0), key=lambda t: c.value(t, 0.0))
        return float(a), 0.0
    both_zero = c.c11 == 0 and c.c22 == 0
    singular = c.c11 != 0 and c.c22 != 0 and 4 * c.c11 * c.c22 - c.c12**2 == 0
    if both_zero or singular:
        log.warning("degenerate line search (c11=%g, c22=%g, c12=%g); enumerating faces",
                    c.c11, c.c22, c.c12)
    a, b = minimize_quadratic_simplex(c.c11, c.c22, c.c12, c.c1, c.c2, c.c0)
    return float(a), float(b)


@dataclass
class BFGSInfo:
    iterations: int
    evaluations: int
    success: bool
    message: str


def _realify(U: np.ndarray) -> np.ndarray:
    return np.concatenate([U.real.ravel(), U.imag.ravel()])


def _complexify(x: np.ndarray, shape) -> np.ndarray:
    n = x.size // 2
    return (x[:n] + 1j * x[n:]).reshape(shape)


def corrective_bfgs(state: LowRankState, prob: Problem, rho: float, tol: float = 1e-11,
                    maxit: int = 500, counter: FFTCounter | None = None) -> tuple[LowRankState, BFGSInfo]:
    """Limited-memory BFGS descent on ``U -> f(U U^h)`` started at ``state``.

    Complex factors are optimized through their stacked real and imaginary
    parts.  The returned state never has a larger objective than the input.
    """
    counter = counter or FFTCounter()
    U0 = np.asarray(state.U, dtype=complex)
    shape = U0.shape
    if shape[1] == 0:
        return LowRankState(U0.copy(), objective_value(state, prob, rho)), BFGSInfo(0, 0, True, "empty")
    best = {"f": np.inf, "x": None}

    def fun(x):
        loc = _Local(_complexify(x, shape), prob, rho, counter)
        f = loc.value
        if f < best["f"]:
            best["f"], best["x"] = f, x.copy()
        return f, _realify(loc.factor_grad())

    x0 = _realify(U0)
    f0, _ = fun(x0)
    res = sopt.minimize(fun, x0, jac=True, method="L-BFGS-B",
                        options={"maxcor": 10, "ftol": tol, "gtol": 1e-14, "maxiter": maxit,
                                 "maxls": 40})
    x, f = best["x"], best["f"]
    info = BFGSInfo(int(res.nit), int(res.nfev), bool(res.success) or res.status == 0,
                    str(res.message))
    if not info.success and "ABNORMAL" in info.message.upper():
        log.debug("L-BFGS line search stopped early: %s", res.message)
    if f > f0:
        x, f = x0, f0
    return LowRankState(_complexify(x, shape), float(f)), info


@dataclass
class Trace:
    """Per-iteration log of a solve and its termination status."""

    rows: list = field(default_factory=list)
    status: str = ""
    productive_iterations: int = 0
    total_iterations: int = 0
    fft_calls: int = 0
    flags: list = field(default_factory=list)

    def add(self, it, objective, lambda1, rank, fft_calls, wall_ms):
        self.rows.append({"iter": it, "objective": objective, "lambda1": lambda1, "rank": rank,
                          "fft_calls": fft_calls, "wall_ms": wall_ms})

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r["objective"] for r in self.rows])


def ffw_solve(prob: Problem, config: SolverConfig) -> tuple[LowRankState, Trace]:
    """Run the FFT-based Frank-Wolfe algorithm.

    Iterates linear minimization, line search and corrective descent until
    the objective decreases by less than ``config.eps_stop``, the oracle
    returns the zero candidate, or ``config.max_outer_iters`` is reached.
    A final step whose decrease falls below the tolerance is not applied, so
    the returned rank counts productive iterations only.
    """
    if config.level != prob.level:
        raise ValueError(f"config level {config.level} differs from problem level {prob.level}")
    rho = config.rho
    counter = FFTCounter()
    rng = make_rng(config.seed)
    m = prob.m
    D0 = 2.0  # twice f(0)
    state = LowRankState.empty(m)
    f = 1.0
    trace = Trace()
    t0 = time.perf_counter()
    trace.add(0, f, float("nan"), 0, 0, 0.0)
    trace.status = "max_outer"
    for it in range(1, config.max_outer_iters + 1):
        loc = _Local(state.U, prob, rho, counter)
        eig = min_eigpair(state, prob, rho, config.power_tol, config.power_maxit, rng, _loc=loc)
        if not eig.converged:
            trace.flags.append(f"power iteration hit {config.power_maxit} steps at iteration {it}")
        v = lmo(eig.value, eig.vector, D0, m)
        trace.total_iterations = it
        wall = 1e3 * (time.perf_counter() - t0)
        if v is None:
            trace.status = "zero_lmo"
            trace.add(it, f, eig.value, state.rank(), counter.count, wall)
            break
        alpha, beta = line_search(state, v, prob, rho, _loc=loc)
        cols = [np.sqrt(alpha) * state.U] if alpha > 0 else []
        if beta > 0:
            cols.append(np.sqrt(beta) * v[:, None])
        U_hat = np.hstack(cols) if cols else np.zeros((m + 1, 0), complex)
        new, info = corrective_bfgs(LowRankState(U_hat), prob, rho, config.bfgs_tol,
                                    config.bfgs_maxit, counter)
        if not info.success:
            trace.flags.append(f"bfgs at iteration {it}: {info.message}")
        decrease = f - new.objective
        wall = 1e3 * (time.perf_counter() - t0)
        if abs(decrease) < config.eps_stop:
            trace.status = "converged"
            trace.add(it, f, eig.value, state.rank(), counter.count, wall)
            break
        state, f = new, float(new.objective)
        trace.productive_iterations += 1
        trace.add(it, f, eig.value, state.rank(), counter.count, wall)
    if trace.status == "max_outer":
        trace.flags.append(f"reached max_outer_iters={config.max_outer_iters}")
    trace.fft_calls = counter.count
    state.objective = f
    return state, trace


def certificate_sup(prob: Problem, z: np.ndarray) -> float:
    """``sup_x |eta(x)|`` for ``eta = Phi^* p`` and ``p = (y - A z) / lam``.

    ``z`` holds coefficients on ``Omega_c`` (use :meth:`Problem.restrict` on
    a solver state's ``z_tilde``, or the Fourier moments of a measure).
    """
    z = prob.op._check_z(z)
    p = (prob.y - prob.op.apply(z)) / prob.lam
    return trig_poly_sup(prob.s2 * prob.op.adjoint(p), prob.op.index_set)


def state_certificate(state: LowRankState, prob: Problem) -> float:
    return certificate_sup(prob, prob.restrict(state.z_tilde))
