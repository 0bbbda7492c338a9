"""Discrete measures on the torus ``[0, 1)^d`` and their Fourier moments."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .indexset import IndexSet

if TYPE_CHECKING:
    from .operators import SpectralOperator


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; all randomness in the package goes through this."""
    return np.random.Generator(np.random.PCG64(seed))


def wrap(x: np.ndarray) -> np.ndarray:
    """Reduce coordinates modulo 1 into ``[0, 1)``."""
    x = np.mod(np.asarray(x, dtype=float), 1.0)
    # mod of tiny negatives rounds up to exactly 1.0
    x[x >= 1.0] = 0.0
    return x


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finite sum of weighted Dirac masses on the torus.

    Positions are reduced modulo 1 and bitwise-identical positions are merged
    by summing their amplitudes.
    """

    positions: np.ndarray
    amplitudes: np.ndarray
    dim: int = field(default=0)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        dim = self.dim
        if pos.ndim == 1:
            # a flat list is read as r points when dim is 1 or unknown
            pos = pos.reshape(-1, max(dim, 1))
        if pos.size == 0:
            pos = pos.reshape(0, max(dim, pos.shape[1] if pos.ndim == 2 else 1))
        if dim == 0:
            dim = pos.shape[1]
        if pos.shape[1] != dim:
            raise ValueError(f"positions have dimension {pos.shape[1]}, expected {dim}")
        if pos.shape[0] != amps.shape[0]:
            raise ValueError(
                f"{pos.shape[0]} positions but {amps.shape[0]} amplitudes"
            )
        pos = wrap(pos)
        merged: dict[tuple, int] = {}
        keep_pos, keep_amp = [], []
        for p, a in zip(pos, amps):
            key = tuple(p.tolist())
            if key in merged:
                keep_amp[merged[key]] += a
            else:
                merged[key] = len(keep_pos)
                keep_pos.append(p)
                keep_amp.append(a)
        pos = np.array(keep_pos, dtype=float).reshape(-1, dim)
        amps = np.array(keep_amp, dtype=complex)
        pos.flags.writeable = False
        amps.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "dim", dim)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.amplitudes.imag == 0))

    def total_variation(self) -> float:
        return float(np.sum(np.abs(self.amplitudes)))

    def __add__(self, other: DiscreteMeasure) -> DiscreteMeasure:
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return DiscreteMeasure(
            np.vstack([self.positions, other.positions]),
            np.concatenate([self.amplitudes, other.amplitudes]),
            self.dim,
        )

    def __neg__(self) -> DiscreteMeasure:
        return DiscreteMeasure(self.positions, -self.amplitudes, self.dim)

    def __sub__(self, other: DiscreteMeasure) -> DiscreteMeasure:
        return self + (-other)

    def translate(self, t) -> DiscreteMeasure:
        return DiscreteMeasure(self.positions + np.asarray(t, float), self.amplitudes, self.dim)

    @classmethod
    def empty(cls, dim: int) -> DiscreteMeasure:
        return cls(np.zeros((0, dim)), np.zeros(0, complex), dim)


def torus_distance(x, y) -> float:
    """Geodesic distance between two points of the flat torus."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    delta = np.abs(x - y) % 1.0
    delta = np.minimum(delta, 1.0 - delta)
    return float(np.sqrt(np.sum(delta**2)))


def pairwise_torus_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix of torus distances between the rows of ``a`` and ``b``."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.shape[1] != b.shape[1]:
        raise ValueError("dimension mismatch")
    delta = np.abs(a[:, None, :] - b[None, :, :]) % 1.0
    delta = np.minimum(delta, 1.0 - delta)
    return np.sqrt(np.sum(delta**2, axis=-1))


def min_separation(m: DiscreteMeasure) -> float:
    if len(m) < 2:
        raise ValueError("separation needs at least two atoms")
    dist = pairwise_torus_distances(m.positions, m.positions)
    iu = np.triu_indices(len(m), k=1)
    return float(dist[iu].min())


def fourier_coefficients(m: DiscreteMeasure, idx: IndexSet) -> np.ndarray:
    """Moments ``c_k = sum_j a_j exp(-2i pi <k, x_j>)`` for ``k`` in ``idx``."""
    if idx.dim != m.dim:
        raise ValueError(f"index set has dimension {idx.dim}, measure {m.dim}")
    if len(m) == 0:
        return np.zeros(idx.size, dtype=complex)
    phase = idx.indices @ m.positions.T
    return np.exp(-2j * np.pi * phase) @ m.amplitudes


def generate_synthetic(
    r: int,
    d: int,
    amplitude_mode: str = "signed",
    seed: int = 0,
    min_sep: float | None = None,
    max_tries: int = 100_000,
) -> DiscreteMeasure:
    """Random ``r``-sparse measure with uniform positions.

    Amplitudes are uniform on ``[-1, 1]`` (``signed``) or ``[0.1, 1]``
    (``positive``).  With ``min_sep``, position draws are repeated until the
    minimal torus separation exceeds it; the result stays a function of
    ``seed``.
    """
    if r < 0 or d < 1:
        raise ValueError("need r >= 0 and d >= 1")
    if amplitude_mode not in ("signed", "positive"):
        raise ValueError(f"unknown amplitude mode {amplitude_mode!r}")
    rng = make_rng(seed)
    if r == 0:
        return DiscreteMeasure.empty(d)
    for _ in range(max_tries):
        pos = rng.random((r, d))
        if min_sep is None or r < 2:
            break
        dist = pairwise_torus_distances(pos, pos)
        if dist[np.triu_indices(r, 1)].min() > min_sep:
            break
    else:
        raise RuntimeError(f"no {r}-point configuration with separation > {min_sep}")
    if amplitude_mode == "signed":
        amps = rng.uniform(-1.0, 1.0, r)
    else:
        amps = rng.uniform(0.1, 1.0, r)
    return DiscreteMeasure(pos, amps, d)


def observe(
    m: DiscreteMeasure,
    op: SpectralOperator,
    noise_level: float = 0.0,
    seed: int = 0,
) -> np.ndarray:
    """Noisy observation ``A F_c m + w`` with ``|w| / |A F_c m| = noise_level``."""
    if noise_level < 0:
        raise ValueError("noise level must be nonnegative")
    if op.index_set.dim != m.dim:
        raise ValueError("operator and measure dimensions differ")
    y0 = op.apply(fourier_coefficients(m, op.index_set))
    if noise_level == 0:
        return y0
    rng = make_rng(seed)
    w = rng.standard_normal(y0.shape) + 1j * rng.standard_normal(y0.shape)
    w *= noise_level * np.linalg.norm(y0) / np.linalg.norm(w)
    return y0 + w
