"""Independent dense reference implementations used by the tests.

Nothing here calls the FFT code paths under test: Toeplitz projections are
brute-force diagonal means, objectives are assembled from full matrices.
"""

from __future__ import annotations

import itertools

import numpy as np

from offgrid_sr.indexset import IndexSet


def colex_indices(d, f):
    """Multi-indices of [-f, f]^d in colex order, by explicit sorting."""
    pts = list(itertools.product(range(-f, f + 1), repeat=d))
    pts.sort(key=lambda k: tuple(reversed(k)))
    return np.array(pts, dtype=int)


def diag_mean_projection(R, d, level):
    """Replace each generalized diagonal of R (fixed t - s) by its mean."""
    idx = colex_indices(d, level)
    n = len(idx)
    groups = {}
    for s in range(n):
        for t in range(n):
            groups.setdefault(tuple(idx[t] - idx[s]), []).append((s, t))
    P = np.zeros_like(R, dtype=complex)
    coeffs = {}
    for k, entries in groups.items():
        mean = np.mean([R[s, t] for s, t in entries])
        coeffs[k] = mean
        for s, t in entries:
            P[s, t] = mean
    return P, coeffs


def coeff_vector(coeffs, d, level):
    big = colex_indices(d, 2 * level)
    return np.array([coeffs[tuple(k)] for k in big])


def dense_objective_matrix(Rhat, prob, rho):
    """Objective on a full bordered Hermitian matrix."""
    m = prob.m
    R = Rhat[:m, :m]
    zt = Rhat[:m, m]
    tau = Rhat[m, m].real
    A = prob.op.to_dense()
    z = zt[prob.obs_mask]
    P, _ = diag_mean_projection(R, prob.dim, prob.level)
    data = prob.s2 * np.linalg.norm(prob.y - A @ z) ** 2
    pen = np.linalg.norm(R - P) ** 2
    return prob.C0 * (0.5 * (np.trace(R).real / m + tau) + data / (2 * prob.lam) + pen / (2 * rho))


def dense_objective(U, prob, rho):
    return dense_objective_matrix(U @ U.conj().T, prob, rho)


def dense_gradient(U, prob, rho):
    """Full gradient matrix of the objective at U U^h."""
    m = prob.m
    Rhat = U @ U.conj().T
    R = Rhat[:m, :m]
    z = Rhat[:m, m][prob.obs_mask]
    A = prob.op.to_dense()
    g = np.zeros(m, complex)
    g[prob.obs_mask] = prob.s2 * A.conj().T @ (A @ z - prob.y)
    P, _ = diag_mean_projection(R, prob.dim, prob.level)
    G = np.zeros((m + 1, m + 1), complex)
    G[:m, :m] = np.eye(m) / (2 * m) + (R - P) / rho
    G[:m, m] = g / (2 * prob.lam)
    G[m, :m] = g.conj() / (2 * prob.lam)
    G[m, m] = 0.5
    return prob.C0 * G


def scaled_gradient(U, prob, rho):
    J = np.full(prob.m + 1, np.sqrt(prob.m))
    J[-1] = 1.0
    G = dense_gradient(U, prob, rho)
    return J[:, None] * G * J[None, :]


def random_hermitian(n, rng):
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (X + X.conj().T) / 2


def dense_toeplitz(u, d, level):
    """sum_k u_k Theta_k assembled from Kronecker products of shifted identities."""
    side = 2 * level + 1
    T = np.zeros((side**d, side**d), complex)
    for c, k in zip(u, colex_indices(d, 2 * level)):
        if c == 0:
            continue
        M = np.ones((1, 1))
        for kj in k:
            M = np.kron(np.eye(side, k=int(kj)), M)
        T += c * M
    return T


def naive_fourier(positions, amps, d, f):
    out = []
    for k in colex_indices(d, f):
        s = 0j
        for x, a in zip(positions, amps):
            s += a * np.exp(-2j * np.pi * sum(ki * xi for ki, xi in zip(k, x)))
        out.append(s)
    return np.array(out)


def transport_flat_norm(points, masses):
    """Flat norm through the dual transport LP (creation/destruction at unit cost)."""
    from scipy.optimize import linprog

    from offgrid_sr.measures import pairwise_torus_distances

    n = len(masses)
    if n == 0:
        return 0.0
    D = pairwise_torus_distances(points, points)
    c = np.concatenate([D.ravel(), np.ones(2 * n)])
    Aeq = np.zeros((n, n * n + 2 * n))
    for i in range(n):
        for j in range(n):
            Aeq[i, i * n + j] += 1
            Aeq[j, i * n + j] -= 1
        Aeq[i, n * n + i] = 1
        Aeq[i, n * n + n + i] = -1
    res = linprog(c, A_eq=Aeq, b_eq=masses, bounds=(0, None), method="highs")
    assert res.status == 0
    return float(res.fun)


def vertex_flat_norm(points, masses):
    """Flat norm by enumerating every vertex of the constraint polytope (n <= 5)."""
    from offgrid_sr.measures import pairwise_torus_distances

    n = len(masses)
    D = pairwise_torus_distances(points, points)
    rows, rhs = [], []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1
        rows += [e, -e]
        rhs += [1.0, 1.0]
    for i in range(n):
        for j in range(n):
            if i != j:
                e = np.zeros(n)
                e[i], e[j] = 1, -1
                rows.append(e)
                rhs.append(D[i, j])
    A = np.array(rows)
    b = np.array(rhs)
    best = -np.inf
    for sub in itertools.combinations(range(len(b)), n):
        As = A[list(sub)]
        if abs(np.linalg.det(As)) < 1e-12:
            continue
        f = np.linalg.solve(As, b[list(sub)])
        if np.all(A @ f <= b + 1e-9):
            best = max(best, float(masses @ f))
    return best


def brute_max_matching(D, delta):
    """Largest matching size by trying every injective assignment."""
    n0, nr = D.shape
    best = 0
    if n0 <= nr:
        for perm in itertools.permutations(range(nr), n0):
            best = max(best, sum(D[i, perm[i]] <= delta for i in range(n0)))
    else:
        for perm in itertools.permutations(range(n0), nr):
            best = max(best, sum(D[perm[j], j] <= delta for j in range(nr)))
    return best


def full_index(d, level):
    return IndexSet(d, level)
