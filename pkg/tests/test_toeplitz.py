import numpy as np
import pytest
import scipy.signal

from offgrid_sr.indexset import IndexSet
from offgrid_sr.measures import DiscreteMeasure, fourier_coefficients, generate_synthetic
from offgrid_sr.toeplitz import (
    ToeplitzCoeffs,
    diagonal_counts,
    fft_length,
    materialize,
    moment_toeplitz,
    project_gram,
    theta_matrix,
    toeplitz_matvec,
)

import oracles


def _cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# ---------------------------------------------------------------- counts

def test_counts_closed_form():
    np.testing.assert_array_equal(diagonal_counts(1, 1), [1, 2, 3, 2, 1])
    c = diagonal_counts(1, 2)
    assert c[IndexSet(2, 2).position((0, 0))] == 9
    assert c.min() >= 1


def test_counts_equal_indicator_self_convolution():
    ind = np.ones((5, 5))
    conv = scipy.signal.fftconvolve(ind, ind)
    ref = np.rint(conv).astype(int).reshape(-1, order="F")  # axis 0 carries k_1
    np.testing.assert_array_equal(diagonal_counts(2, 2), ref)


def test_fft_length_is_alias_free():
    for level in range(1, 20):
        assert fft_length(level) >= 4 * level + 1


# ---------------------------------------------------------------- basis matrices

def test_theta_worked_example():
    # d=2, side 2, k=(-1,0): ones at (2,1) and (4,3) in 1-based indexing
    T = theta_matrix((-1, 0), 2)
    ref = np.zeros((4, 4))
    ref[1, 0] = ref[3, 2] = 1
    np.testing.assert_array_equal(T, ref)


def test_materialize_single_coefficient_is_theta():
    for k in [(-1, 0), (2, -1), (0, 0), (-2, 2)]:
        u = np.zeros(25, complex)
        u[IndexSet(2, 2).position(k)] = 1
        np.testing.assert_array_equal(materialize(ToeplitzCoeffs(2, 1, u)).real, theta_matrix(k, 3))


def test_materialize_matches_kron_assembly():
    rng = np.random.default_rng(0)
    for d, level in [(1, 3), (2, 1), (2, 2), (3, 1)]:
        u = _cplx(rng, (4 * level + 1) ** d)
        np.testing.assert_allclose(materialize(ToeplitzCoeffs(d, level, u)),
                                   oracles.dense_toeplitz(u, d, level), atol=1e-14)


def test_materialize_hermitian_input():
    rng = np.random.default_rng(1)
    u = _cplx(rng, 25)
    u = (u + u[::-1].conj()) / 2
    t = ToeplitzCoeffs(2, 1, u)
    assert t.is_hermitian()
    M = materialize(t)
    np.testing.assert_array_equal(M, M.conj().T)


def test_coeff_length_and_gate():
    with pytest.raises(ValueError):
        ToeplitzCoeffs(1, 2, np.zeros(8))
    with pytest.raises(ValueError):
        materialize(ToeplitzCoeffs(2, 32, np.zeros(129**2)))


# ---------------------------------------------------------------- projection

def test_project_all_ones():
    t = project_gram(np.ones((3, 1)), 1, 1)
    np.testing.assert_allclose(t.coeffs, np.ones(5), atol=1e-15)


@pytest.mark.parametrize("d,level,r", [(1, 2, 2), (2, 1, 3), (1, 4, 1), (2, 2, 4), (3, 1, 2)])
def test_project_matches_diagonal_means(d, level, r):
    rng = np.random.default_rng(d * 10 + level)
    for _ in range(4):
        U = _cplx(rng, (2 * level + 1) ** d, r)
        t = project_gram(U, level, d)
        _, coeffs = oracles.diag_mean_projection(U @ U.conj().T, d, level)
        np.testing.assert_allclose(t.coeffs, oracles.coeff_vector(coeffs, d, level), atol=1e-12)
        assert t.is_hermitian(1e-12)


def test_project_idempotent_and_orthogonal():
    rng = np.random.default_rng(5)
    d, level = 2, 1
    m = (2 * level + 1) ** d
    U = _cplx(rng, m, 3)
    R = U @ U.conj().T
    t = project_gram(U, level, d)
    P = materialize(t)
    # re-project the projection: coefficients unchanged
    _, c2 = oracles.diag_mean_projection(P, d, level)
    np.testing.assert_allclose(oracles.coeff_vector(c2, d, level), t.coeffs, atol=1e-12)
    for _ in range(20):
        T = materialize(ToeplitzCoeffs(d, level, _cplx(rng, (4 * level + 1) ** d)))
        assert abs(np.vdot(T, R - P)) <= 1e-10 * np.linalg.norm(T) * np.linalg.norm(R)


def test_project_frobenius_identity():
    rng = np.random.default_rng(6)
    t = project_gram(_cplx(rng, 5, 2), 2, 1)
    P = materialize(t)
    assert t.frobenius_sq() == pytest.approx(np.linalg.norm(P) ** 2, rel=1e-12)


def test_project_errors_and_empty():
    with pytest.raises(ValueError):
        project_gram(np.ones((4, 1)), 1, 1)
    t = project_gram(np.zeros((9, 0)), 1, 2)
    assert np.all(t.coeffs == 0)


# ---------------------------------------------------------------- products

def test_matvec_identity_and_shift():
    u = np.zeros(5, complex)
    u[2] = 1
    w = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(toeplitz_matvec(ToeplitzCoeffs(1, 1, u), w), w, atol=1e-15)
    u = np.array([0, 1, 0, 0, 0], complex)  # u_{-1} = 1
    np.testing.assert_allclose(toeplitz_matvec(ToeplitzCoeffs(1, 1, u), w), [0, 1, 2], atol=1e-15)


@pytest.mark.parametrize("d,level", [(1, 1), (1, 5), (2, 1), (2, 2), (2, 3), (3, 1)])
def test_matvec_matches_dense(d, level):
    rng = np.random.default_rng(d + 7 * level)
    for _ in range(3):
        u = _cplx(rng, (4 * level + 1) ** d)
        t = ToeplitzCoeffs(d, level, u)
        w = _cplx(rng, (2 * level + 1) ** d)
        dense = oracles.dense_toeplitz(u, d, level)
        ref = dense @ w
        np.testing.assert_allclose(toeplitz_matvec(t, w), ref, atol=1e-12 * np.abs(ref).max())
        np.testing.assert_allclose(materialize(t) @ w, toeplitz_matvec(t, w), atol=1e-12 * np.abs(ref).max())


def test_matvec_block_and_shape_error():
    rng = np.random.default_rng(3)
    t = ToeplitzCoeffs(2, 1, _cplx(rng, 25))
    W = _cplx(rng, 9, 4)
    out = toeplitz_matvec(t, W)
    for j in range(4):
        np.testing.assert_allclose(out[:, j], toeplitz_matvec(t, W[:, j]), atol=1e-13)
    with pytest.raises(ValueError):
        toeplitz_matvec(t, np.ones(8))


# ---------------------------------------------------------------- moment matrices

def test_moment_matrix_toeplitz_and_psd():
    for d, level in [(1, 3), (2, 2)]:
        m = generate_synthetic(3, d, "positive", seed=4)
        c = fourier_coefficients(m, IndexSet(d, 2 * level))
        R = materialize(moment_toeplitz(c, level, d))
        idx = IndexSet(d, level).indices
        for s in (0, 3, len(idx) - 1):
            for t in (1, 4):
                k = tuple(idx[s] - idx[t])
                ref = np.sum(m.amplitudes * np.exp(-2j * np.pi * m.positions @ np.array(k)))
                assert R[s, t] == pytest.approx(ref, abs=1e-12)
        ev = np.linalg.eigvalsh(R)
        assert ev.min() >= -1e-10 * np.abs(ev).max()


def test_moment_matrix_of_single_atom_is_rank_one():
    m = DiscreteMeasure([0.3], [1.0])
    c = fourier_coefficients(m, IndexSet(1, 4))
    R = materialize(moment_toeplitz(c, 2, 1))
    assert np.linalg.matrix_rank(R, tol=1e-10) == 1
    v = np.exp(-2j * np.pi * np.arange(-2, 3) * 0.3)
    np.testing.assert_allclose(R, np.outer(v, v.conj()), atol=1e-13)
