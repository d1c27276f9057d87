"""All-to-all ZZ dephasing: trajectory sampler, exact dense channel, and
exact Renyi-2 correlators.

Each unordered pair (i, j) independently suffers Z_i Z_j with probability
mu / N.  Because all Kraus operators are diagonal and commute, a trajectory
only matters through the parity of flips on each site.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from .errors import DimensionError
from .quantum_core import (
    DensityMatrix,
    ModelParams,
    StateVector,
    apply_z_string,
    conjugate_by,
    overlap,
    purity,
    z_signs,
)

CHANNEL_LIMIT = 10
SWAP_LIMIT = 5


@lru_cache(maxsize=None)
def pair_list(n_qubits: int) -> tuple[tuple[int, int], ...]:
    """All unordered pairs (i, j), i < j, 1-based, lexicographic."""
    return tuple(combinations(range(1, n_qubits + 1), 2))


@lru_cache(maxsize=None)
def pair_incidence(n_qubits: int) -> np.ndarray:
    """(n_pairs, N) 0/1 matrix; row p marks the two sites of pair p."""
    pairs = pair_list(n_qubits)
    inc = np.zeros((len(pairs), n_qubits), dtype=np.int64)
    for row, (i, j) in enumerate(pairs):
        inc[row, i - 1] = inc[row, j - 1] = 1
    inc.flags.writeable = False
    return inc


@dataclass(frozen=True)
class TrajectoryMask:
    n_qubits: int
    flipped_pairs: frozenset

    def __post_init__(self):
        for i, j in self.flipped_pairs:
            if not 1 <= i < j <= self.n_qubits:
                raise ValueError(f"invalid pair ({i}, {j}) for N={self.n_qubits}")

    def parities(self) -> np.ndarray:
        """Net number of Z flips on each site, mod 2."""
        par = np.zeros(self.n_qubits, dtype=np.int64)
        for i, j in self.flipped_pairs:
            par[i - 1] ^= 1
            par[j - 1] ^= 1
        return par


def sample_trajectory(params: ModelParams, rng: np.random.Generator) -> TrajectoryMask:
    pairs = pair_list(params.n_qubits)
    keep = rng.random(len(pairs)) < params.pair_probability
    return TrajectoryMask(params.n_qubits, frozenset(p for p, k in zip(pairs, keep) if k))


def sample_parities(n_qubits: int, p: float, rng: np.random.Generator, shape) -> np.ndarray:
    """Vectorized trajectory draw: site parities of ``shape`` independent masks.

    Equivalent to calling :func:`sample_trajectory` once per mask and taking
    :meth:`TrajectoryMask.parities`; the pair draws happen in the same
    lexicographic pair order.
    """
    shape = tuple(np.atleast_1d(shape))
    n_pairs = len(pair_list(n_qubits))
    flips = (rng.random(shape + (n_pairs,)) < p).astype(np.int64)
    return (flips @ pair_incidence(n_qubits)) & 1


def apply_trajectory(state: StateVector, mask: TrajectoryMask) -> StateVector:
    if mask.n_qubits != state.n_qubits:
        raise ValueError("mask and state disagree on N")
    return apply_z_string(state, mask.parities())


def dephase_pairs(entries: np.ndarray, n_qubits: int, p: float) -> np.ndarray:
    """Apply prod_{i<j} [(1-p) s + p Z_iZ_j s Z_iZ_j] to a raw matrix.

    Conjugation by a diagonal sign vector d is the Schur product with d d^T,
    so each pair channel is one elementwise multiply.
    """
    z = z_signs(n_qubits).astype(float)
    out = np.array(entries, dtype=complex)
    for i, j in pair_list(n_qubits):
        d = z[:, i - 1] * z[:, j - 1]
        out *= (1 - p) + p * np.outer(d, d)
    return out


def apply_channel_exact(rho: DensityMatrix, params: ModelParams) -> DensityMatrix:
    n = rho.n_qubits
    if n != params.n_qubits:
        raise ValueError("params and rho disagree on N")
    if n > CHANNEL_LIMIT:
        raise DimensionError(f"dense channel limited to N<={CHANNEL_LIMIT}, got {n}")
    return DensityMatrix(n, dephase_pairs(rho.entries, n, params.pair_probability))


def renyi2_correlator_exact(rho: DensityMatrix, j: int, k: int) -> float:
    """tr[Z_jZ_k rho Z_kZ_j rho] / tr[rho^2]."""
    if j == k:
        raise ValueError("j and k must differ")
    p = purity(rho)
    if p <= 0:
        raise ValueError("purity vanished")
    return overlap(conjugate_by(rho, (j, k)), rho) / p


def averaged_renyi2_exact(rho: DensityMatrix) -> float:
    """Mean of the Renyi-2 correlator over all unordered pairs."""
    n = rho.n_qubits
    weights = np.abs(rho.entries) ** 2
    z = z_signs(n).astype(float)
    total = 0.0
    for i, j in pair_list(n):
        d = z[:, i - 1] * z[:, j - 1]
        total += d @ weights @ d
    return float(total / len(pair_list(n)) / weights.sum())


def swap_operator(n_qubits: int) -> np.ndarray:
    """Permutation matrix V|m>|n> = |n>|m> on the doubled 4**N space."""
    dim = 2**n_qubits
    m, k = np.divmod(np.arange(dim * dim), dim)
    v = np.zeros((dim * dim, dim * dim))
    v[k * dim + m, m * dim + k] = 1.0
    return v


def swap_overlap(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """tr[V (rho x sigma)], built literally on the doubled space."""
    if rho.n_qubits != sigma.n_qubits:
        raise ValueError("dimension mismatch")
    if rho.n_qubits > SWAP_LIMIT:
        raise DimensionError(f"swap oracle limited to N<={SWAP_LIMIT}, got {rho.n_qubits}")
    v = swap_operator(rho.n_qubits)
    return float(np.trace(v @ np.kron(rho.entries, sigma.entries)).real)
