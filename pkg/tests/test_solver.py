import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from offgrid_sr.indexset import IndexSet
from offgrid_sr.measures import DiscreteMeasure, fourier_coefficients, generate_synthetic, observe
from offgrid_sr.operators import (
    build_dirichlet,
    build_gaussian,
    build_subsampled,
    gaussian_coefficients,
)
from offgrid_sr.solver import (
    LowRankState,
    Problem,
    SolverConfig,
    certificate_sup,
    corrective_bfgs,
    ffw_solve,
    gradient_apply,
    line_search,
    line_search_coeffs,
    lmo,
    min_eigpair,
    minimize_quadratic_simplex,
    objective_value,
    power_min_eig,
    resolve_lambda,
    state_certificate,
    toeplitz_residual,
    trig_poly_grid,
    trig_poly_sup,
)
from offgrid_sr.toeplitz import materialize, moment_toeplitz

import oracles


def _cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def make_problem(kind="gauss", d=1, fc=2, level=None, seed=0, lambda0=0.05):
    if kind == "dirichlet":
        op = build_dirichlet(fc, d)
    elif kind == "gauss":
        op = build_gaussian(fc, d, 0.1)
    else:
        op = build_subsampled(fc, d, 4, gaussian_coefficients(fc, d, 0.1))
    m = generate_synthetic(2, d, seed=seed)
    y = observe(m, op, 1e-2, seed=seed)
    return Problem.from_lambda0(op, y, lambda0, level)


PROBLEMS = [
    ("gauss", 1, 2, None),
    ("dirichlet", 1, 2, None),
    ("subsampled", 1, 2, None),
    ("gauss", 1, 1, 2),
    ("subsampled", 2, 1, None),
    ("dirichlet", 2, 1, 2),
]


def random_state(prob, r, rng, scale=0.3):
    return LowRankState(scale * _cplx(rng, prob.m + 1, r))


# ---------------------------------------------------------------- problem set-up

def test_config_validation():
    c = SolverConfig(fc=3)
    assert c.level == 3 and c.eps_stop == 1e-8 and c.power_maxit == 2000
    for bad in [dict(level=2), dict(lambda0=0), dict(rho=-1), dict(power_tol=0), dict(bfgs_maxit=0)]:
        with pytest.raises(ValueError):
            SolverConfig(fc=3, **bad)


def test_zero_observation_rejected():
    op = build_dirichlet(3, 1)
    with pytest.raises(ValueError):
        Problem(op, np.zeros(7), 1.0)
    with pytest.raises(ValueError):
        resolve_lambda(op, np.zeros(7), 0.1)
    with pytest.raises(ValueError):
        Problem(op, np.ones(7), 1.0, level=2)


def test_resolve_lambda_dirichlet_peak():
    for d, fc in [(1, 5), (2, 3)]:
        op = build_dirichlet(fc, d)
        y = fourier_coefficients(DiscreteMeasure(np.zeros((1, d)), [1.0], d), op.index_set)
        assert resolve_lambda(op, y, 1e-3) == pytest.approx(1e-3 * (2 * fc + 1) ** d, rel=1e-12)
        assert resolve_lambda(op, 2 * y, 1e-3) == pytest.approx(2e-3 * (2 * fc + 1) ** d, rel=1e-12)


def test_trig_sup_refinement():
    rng = np.random.default_rng(0)
    idx = IndexSet(1, 3)
    for _ in range(5):
        c = _cplx(rng, idx.size)
        # a 2^20-point grid pins the sup down to ~1e-9
        fine = np.abs(trig_poly_grid(c, idx, 2**20)).max()
        coarse = np.abs(trig_poly_grid(c, idx, 16 * idx.side)).max()
        sup = trig_poly_sup(c, idx)
        assert sup == pytest.approx(fine, abs=1e-6)
        assert sup >= coarse


def test_trig_grid_matches_direct_sum():
    rng = np.random.default_rng(1)
    idx = IndexSet(2, 1)
    c = _cplx(rng, idx.size)
    g = trig_poly_grid(c, idx, 6)
    x = np.array([2 / 6, 5 / 6])
    ref = np.sum(c * np.exp(2j * np.pi * idx.indices @ x))
    assert g[2, 5] == pytest.approx(ref, abs=1e-12)


# ---------------------------------------------------------------- objective

@pytest.mark.parametrize("case", PROBLEMS)
def test_empty_objective_is_one(case):
    prob = make_problem(*case)
    assert abs(objective_value(LowRankState.empty(prob.m), prob, 1.0) - 1.0) <= 1e-14


def test_state_blocks():
    rng = np.random.default_rng(2)
    prob = make_problem()
    s = random_state(prob, 3, rng)
    M = s.U @ s.U.conj().T
    np.testing.assert_allclose(s.z_tilde, M[:-1, -1], atol=1e-14)
    assert s.tau == pytest.approx(M[-1, -1].real)
    assert s.rank() == 3 and LowRankState.empty(4).rank() == 0


@pytest.mark.parametrize("case", PROBLEMS)
def test_objective_matches_dense(case):
    prob = make_problem(*case)
    rng = np.random.default_rng(3)
    for _ in range(20):
        s = random_state(prob, int(rng.integers(1, 4)), rng)
        rho = float(rng.choice([0.1, 1.0, 10.0]))
        ref = oracles.dense_objective(s.U, prob, rho)
        assert objective_value(s, prob, rho) == pytest.approx(ref, rel=1e-10)


def test_toeplitz_state_has_no_penalty():
    prob = make_problem("dirichlet", 1, 3)
    m = generate_synthetic(2, 1, "positive", seed=1)
    from offgrid_sr.extraction import moment_factor

    U = moment_factor(m, prob.level)
    s = LowRankState(U)
    assert toeplitz_residual(s, prob) <= 1e-6
    R = U[:-1] @ U[:-1].conj().T
    c = fourier_coefficients(m, IndexSet(1, 2 * prob.level))
    np.testing.assert_allclose(R, materialize(moment_toeplitz(c, prob.level, 1)), atol=1e-12)
    f1 = objective_value(s, prob, 1.0)
    f2 = objective_value(s, prob, 1e-6)
    assert f1 == pytest.approx(f2, abs=1e-9)


# ---------------------------------------------------------------- gradient

@pytest.mark.parametrize("case", PROBLEMS)
def test_gradient_matches_dense(case):
    prob = make_problem(*case)
    rng = np.random.default_rng(4)
    for _ in range(20):
        s = random_state(prob, 2, rng)
        G = oracles.dense_gradient(s.U, prob, 0.7)
        w = _cplx(rng, prob.m + 1)
        ref = G @ w
        np.testing.assert_allclose(gradient_apply(s, prob, 0.7, w), ref, atol=1e-10 * np.abs(ref).max())
    assert np.all(gradient_apply(s, prob, 0.7, np.zeros(prob.m + 1)) == 0)
    with pytest.raises(ValueError):
        gradient_apply(s, prob, 0.7, np.zeros(prob.m))


def test_gradient_central_difference():
    rng = np.random.default_rng(5)
    for case in PROBLEMS[:4]:
        prob = make_problem(*case)
        s = random_state(prob, 2, rng)
        Rhat = s.U @ s.U.conj().T
        n = prob.m + 1
        G = np.column_stack([gradient_apply(s, prob, 1.0, e) for e in np.eye(n)])
        for _ in range(3):
            H = oracles.random_hermitian(n, rng)
            eps = 1e-5
            fd = (oracles.dense_objective_matrix(Rhat + eps * H, prob, 1.0)
                  - oracles.dense_objective_matrix(Rhat - eps * H, prob, 1.0)) / (2 * eps)
            an = np.real(np.vdot(G, H))
            assert abs(fd - an) <= 1e-5 * max(abs(an), 1e-3)


# ---------------------------------------------------------------- eigenpairs and oracle

def test_power_two_runs_on_diagonal():
    M = np.diag([3.0, -1.0]).astype(complex)
    e = power_min_eig(lambda v: M @ v, 2, 1e-12, 5000)
    assert e.converged
    assert e.value == pytest.approx(-1.0, abs=1e-9)
    assert abs(abs(e.vector[1]) - 1) <= 1e-6


def test_power_negative_dominant_single_run():
    M = np.diag([1.0, -5.0]).astype(complex)
    e = power_min_eig(lambda v: M @ v, 2, 1e-12, 5000)
    assert e.value == pytest.approx(-5.0, abs=1e-9)


def test_power_psd_nonnegative():
    rng = np.random.default_rng(6)
    X = _cplx(rng, 8, 3)
    M = X @ X.conj().T
    e = power_min_eig(lambda v: M @ v, 8, 1e-10, 20000, rng)
    assert e.value >= -1e-8 * np.linalg.norm(M, 2)


def test_power_flags_non_convergence():
    M = np.diag([1.0, 0.999999, -0.2]).astype(complex)
    e = power_min_eig(lambda v: M @ v, 3, 1e-14, 3)
    assert not e.converged


@pytest.mark.parametrize("case", PROBLEMS[:4])
def test_min_eigpair_matches_eigh(case):
    prob = make_problem(*case)
    rng = np.random.default_rng(7)
    for r in (0, 1, 2):
        s = random_state(prob, r, rng, 0.2)
        M = oracles.scaled_gradient(s.U, prob, 1.0)
        ev, V = np.linalg.eigh(M)
        e = min_eigpair(s, prob, 1.0, tol=1e-12, maxit=20000, rng=np.random.default_rng(0))
        nrm = np.abs(ev).max()
        assert abs(e.value - ev[0]) <= 1e-6 * nrm
        if ev[1] - ev[0] > 1e-3 * nrm:
            assert abs(abs(np.vdot(V[:, 0], e.vector)) - 1) <= 1e-4


def test_lmo_cases():
    assert lmo(0.5, np.array([1.0, 0.0]), 2.0, 1) is None
    assert lmo(0.0, np.array([1.0, 0.0]), 2.0, 1) is None
    e = np.array([0.6, 0.8j])
    np.testing.assert_allclose(lmo(-1.0, e, 2.0, 1), np.sqrt(2) * e)
    v = lmo(-1.0, e, 2.0, 4)
    np.testing.assert_allclose(v, np.sqrt(2) * np.array([0.6 * 2, 0.8j]))


def test_lmo_beats_feasible_samples():
    rng = np.random.default_rng(8)
    m, D0 = 4, 2.0
    J = np.full(m + 1, 1.0 / m)
    J[-1] = 1.0
    for _ in range(5):
        G = oracles.random_hermitian(m + 1, rng)
        Ms = G / np.sqrt(np.outer(J, J))
        ev, V = np.linalg.eigh(Ms)
        v = lmo(ev[0], V[:, 0], D0, m)
        val = np.real(np.vdot(G, np.outer(v, v.conj()))) if v is not None else 0.0
        assert np.real(np.sum(J * np.abs(v) ** 2)) == pytest.approx(D0)
        for _ in range(100):
            X = _cplx(rng, m + 1, int(rng.integers(1, 4)))
            S = X @ X.conj().T
            S *= D0 * rng.random() / np.real(np.sum(J * np.diag(S)))
            assert val <= np.real(np.vdot(G, S)) + 1e-12


# ---------------------------------------------------------------- line search

def test_simplex_minimizer_cases():
    # c22 = 0, c11 > 0: minimizer on the alpha axis at -c1 / (2 c11)
    assert minimize_quadratic_simplex(2.0, 0.0, 0.0, -1.0, 0.5) == (0.25, 0.0)
    assert minimize_quadratic_simplex(2.0, 0.0, 0.0, -10.0, 0.5) == (1.0, 0.0)
    a, b = minimize_quadratic_simplex(1.0, 1.0, 0.0, -0.4, -0.6)
    assert (a, b) == pytest.approx((0.2, 0.3))


def _grid_min(q, n=1001):
    t = np.linspace(0, 1, n)
    A, B = np.meshgrid(t, t, indexing="ij")
    V = q(A, B)
    V[A + B > 1 + 1e-12] = np.inf
    return V.min()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=5, max_size=5))
def test_simplex_minimizer_vs_grid(c):
    c11, c22, c12, c1, c2 = c

    def q(a, b):
        return c11 * a * a + c22 * b * b + c12 * a * b + c1 * a + c2 * b

    a, b = minimize_quadratic_simplex(c11, c22, c12, c1, c2)
    assert a >= 0 and b >= 0 and a + b <= 1 + 1e-12
    assert q(a, b) <= _grid_min(q, 201) + 1e-12


def test_line_search_coeffs_match_dense():
    rng = np.random.default_rng(9)
    for case in PROBLEMS:
        prob = make_problem(*case)
        s = random_state(prob, 2, rng)
        v = 0.5 * _cplx(rng, prob.m + 1)
        c = line_search_coeffs(s, v, prob, 1.0)
        for a, b in rng.random((6, 2)):
            Rhat = a * s.U @ s.U.conj().T + b * np.outer(v, v.conj())
            ref = oracles.dense_objective_matrix(Rhat, prob, 1.0)
            assert c.value(a, b) == pytest.approx(ref, rel=1e-10)


def test_line_search_vs_fine_grid():
    rng = np.random.default_rng(10)
    for trial in range(20):
        prob = make_problem(*PROBLEMS[trial % len(PROBLEMS)], seed=trial)
        s = random_state(prob, 2, rng, 0.2)
        v = 0.3 * _cplx(rng, prob.m + 1)
        c = line_search_coeffs(s, v, prob, 1.0)
        a, b = line_search(s, v, prob, 1.0)
        assert a >= 0 and b >= 0 and a + b <= 1 + 1e-12
        # the closed-form quadratic has been checked against dense evaluations above
        assert c.value(a, b) <= _grid_min(c.value) + 1e-6


def test_line_search_zero_candidate():
    rng = np.random.default_rng(11)
    prob = make_problem()
    s = random_state(prob, 2, rng)
    a, b = line_search(s, None, prob, 1.0)
    assert b == 0.0
    c = line_search_coeffs(s, None, prob, 1.0)
    assert a == pytest.approx(min(max(-c.c1 / (2 * c.c11), 0), 1))


def test_line_search_from_empty_state_is_quiet(caplog):
    # first iteration: c11 = 0 but c22 > 0, which is not a degenerate case
    prob = make_problem("dirichlet", 1, 3)
    s = LowRankState.empty(prob.m)
    e = min_eigpair(s, prob, 1.0, rng=np.random.default_rng(0))
    v = lmo(e.value, e.vector, 2.0, prob.m)
    with caplog.at_level(logging.WARNING):
        a, b = line_search(s, v, prob, 1.0)
    assert b > 0
    assert not caplog.records


# ---------------------------------------------------------------- corrective step

def test_bfgs_never_increases():
    rng = np.random.default_rng(12)
    for trial in range(20):
        prob = make_problem(*PROBLEMS[trial % len(PROBLEMS)], seed=trial)
        s = random_state(prob, 2, rng, 0.2)
        f0 = objective_value(s, prob, 1.0)
        out, _ = corrective_bfgs(s, prob, 1.0, maxit=30)
        assert out.objective <= f0 + 1e-14
        assert out.objective == pytest.approx(objective_value(out, prob, 1.0), rel=1e-12)


def test_bfgs_reaches_stationarity_and_is_fixed_point():
    from offgrid_sr.solver import _local

    rng = np.random.default_rng(13)
    prob = make_problem("dirichlet", 1, 2)
    s = random_state(prob, 2, rng, 0.2)
    g0 = np.linalg.norm(_local(s, prob, 1.0).factor_grad())
    out, _ = corrective_bfgs(s, prob, 1.0, tol=1e-15, maxit=2000)
    g1 = np.linalg.norm(_local(out, prob, 1.0).factor_grad())
    assert g1 <= 1e-6 * max(1.0, g0)
    again, _ = corrective_bfgs(out, prob, 1.0)
    assert again.objective == pytest.approx(out.objective, abs=1e-12)
    R1 = out.U @ out.U.conj().T
    R2 = again.U @ again.U.conj().T
    assert np.abs(R1 - R2).max() <= 1e-5


def test_bfgs_empty_state():
    prob = make_problem()
    out, info = corrective_bfgs(LowRankState.empty(prob.m), prob, 1.0)
    assert out.objective == pytest.approx(1.0) and info.success


# ---------------------------------------------------------------- full solves

def test_single_spike_one_iteration():
    op = build_dirichlet(10, 1)
    y = fourier_coefficients(DiscreteMeasure([0.5], [1.0]), op.index_set)
    prob = Problem.from_lambda0(op, y, 1e-3)
    state, trace = ffw_solve(prob, SolverConfig(fc=10, lambda0=1e-3, rho=1.0))
    assert state.rank() == 1
    assert trace.productive_iterations == 1
    assert trace.total_iterations == 2
    assert trace.status in ("converged", "zero_lmo")
    assert trace.rows[0]["objective"] == 1.0 and np.isnan(trace.rows[0]["lambda1"])
    assert state_certificate(state, prob) <= 1 + 1e-3


def test_three_spikes_rank_three_monotone():
    op = build_dirichlet(15, 1)
    m = generate_synthetic(3, 1, seed=3, min_sep=1 / 15)
    y = observe(m, op, 1e-4, seed=3)
    prob = Problem.from_lambda0(op, y, 2e-3)
    for rho in (1.0, 10.0):
        state, trace = ffw_solve(prob, SolverConfig(fc=15, lambda0=2e-3, rho=rho))
        assert state.rank() == 3
        f = trace.objectives
        assert np.all(np.diff(f) <= 1e-12)
        ranks = [r["rank"] for r in trace.rows]
        assert np.all(np.diff(ranks) <= 1)
        ffts = [r["fft_calls"] for r in trace.rows]
        assert np.all(np.diff(ffts) >= 0) and trace.fft_calls == ffts[-1]


def test_solve_is_deterministic():
    prob = make_problem("gauss", 1, 4, seed=2)
    cfg = SolverConfig(fc=4, lambda0=0.05, max_outer_iters=4, seed=5)
    s1, t1 = ffw_solve(prob, cfg)
    s2, t2 = ffw_solve(prob, cfg)
    np.testing.assert_array_equal(s1.U, s2.U)
    assert [r["objective"] for r in t1.rows] == [r["objective"] for r in t2.rows]


def test_max_outer_flagged():
    op = build_dirichlet(8, 1)
    m = generate_synthetic(4, 1, seed=1, min_sep=1 / 8)
    prob = Problem.from_lambda0(op, observe(m, op), 1e-3)
    state, trace = ffw_solve(prob, SolverConfig(fc=8, lambda0=1e-3, max_outer_iters=1))
    assert trace.status == "max_outer" and trace.flags
    assert state.ncols >= 1
    with pytest.raises(ValueError):
        ffw_solve(prob, SolverConfig(fc=8, level=9))


def test_fw_gap_nonnegative_along_run():
    # <R - S, grad f(R)> with S the oracle output bounds f(R) - f* from above
    op = build_dirichlet(6, 1)
    m = generate_synthetic(2, 1, seed=4, min_sep=1 / 6)
    prob = Problem.from_lambda0(op, observe(m, op, 1e-3, seed=1), 1e-2)
    state = LowRankState.empty(prob.m)
    for _ in range(2):
        e = min_eigpair(state, prob, 1.0, 1e-10, 5000, np.random.default_rng(0))
        v = lmo(e.value, e.vector, 2.0, prob.m)
        if v is None:
            break
        gR = np.real(np.vdot(state.U, gradient_apply(state, prob, 1.0, state.U))) if state.ncols else 0.0
        gS = np.real(np.vdot(v, gradient_apply(state, prob, 1.0, v)))
        assert gR - gS >= -1e-10
        a, b = line_search(state, v, prob, 1.0)
        U = np.hstack([np.sqrt(a) * state.U, np.sqrt(b) * v[:, None]])
        state, _ = corrective_bfgs(LowRankState(U), prob, 1.0)


# ---------------------------------------------------------------- certificate

def test_certificate_scaling_and_refinement():
    op = build_dirichlet(5, 1)
    rng = np.random.default_rng(14)
    y = _cplx(rng, 11)
    z = np.zeros(11, complex)
    sups = [certificate_sup(Problem(op, y, lam), z) for lam in (1.0, 1e3, 1e6)]
    assert sups[2] < sups[1] < sups[0] and sups[2] < 1e-4
    prob = Problem(op, y, 1.0)
    c = prob.s2 * op.adjoint(prob.y / prob.lam)
    assert trig_poly_sup(c, op.index_set) == pytest.approx(trig_poly_sup(c, op.index_set, 32), abs=1e-6)


def test_certificate_of_truth_with_weak_regularization_is_large():
    # far from the BLASSO optimum the certificate is not bounded by one
    op = build_dirichlet(5, 1)
    m = DiscreteMeasure([0.3], [1.0])
    y = observe(m, op)
    prob = Problem(op, y, 1e-6)
    assert certificate_sup(prob, np.zeros(11)) > 1


def test_line_search_degenerate_warns(monkeypatch, caplog):
    import offgrid_sr.solver as solver

    from offgrid_sr.solver import LineSearchCoeffs

    fake = LineSearchCoeffs(0.0, 0.0, 0.3, -0.2, -0.5, 1.0)
    monkeypatch.setattr(solver, "line_search_coeffs", lambda *a, **k: fake)
    prob = make_problem()
    v = np.ones(prob.m + 1, complex)
    with caplog.at_level(logging.WARNING):
        a, b = line_search(LowRankState.empty(prob.m), v, prob, 1.0)
    assert any("degenerate" in r.message for r in caplog.records)
    assert fake.value(a, b) <= _grid_min(fake.value, 101) + 1e-12
