"""Pure-state and dense mixed-state linear algebra for small qubit chains.

Conventions used throughout the package:

* qubits are labelled 1..N in every public interface;
* basis index ``b`` has qubit ``i`` in bit ``N - i`` (qubit 1 is the most
  significant bit, matching ``np.kron`` ordering);
* computational ``|0>`` is outcome ``+1`` and ``|1>`` is outcome ``-1``;
* a measurement basis is a string over ``"xyz"``, one letter per qubit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sparse
from scipy.sparse.linalg import eigsh

from .errors import ConvergenceError, DimensionError

DENSE_LIMIT = 14
_FULL_EIGH_LIMIT = 10
AXES = "xyz"

_SQ2 = 1 / np.sqrt(2)
PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
# Rotations taking each axis eigenbasis onto the computational basis.
# y: S^dagger then H, so (|0> + i|1>)/sqrt2 -> |0> and (|0> - i|1>)/sqrt2 -> |1>.
BASIS_ROTATIONS = np.array(
    [
        [[_SQ2, _SQ2], [_SQ2, -_SQ2]],
        [[_SQ2, -1j * _SQ2], [_SQ2, 1j * _SQ2]],
        [[1, 0], [0, 1]],
    ],
    dtype=complex,
)


@lru_cache(maxsize=None)
def bit_table(n_qubits: int) -> np.ndarray:
    """Return the (2**n, n) table of bits; row b, column i-1 is qubit i."""
    idx = np.arange(2**n_qubits)
    shifts = n_qubits - 1 - np.arange(n_qubits)
    table = ((idx[:, None] >> shifts) & 1).astype(np.uint8)
    table.flags.writeable = False
    return table


@lru_cache(maxsize=None)
def z_signs(n_qubits: int) -> np.ndarray:
    """Eigenvalues of Z_i on every basis state, shape (2**n, n), entries +-1."""
    signs = 1 - 2 * bit_table(n_qubits).astype(np.int8)
    signs.flags.writeable = False
    return signs


def axes_to_codes(basis: str) -> np.ndarray:
    try:
        return np.array([AXES.index(a) for a in basis], dtype=np.uint8)
    except ValueError:
        raise ValueError(f"basis must be a string over 'xyz', got {basis!r}") from None


def codes_to_axes(codes) -> str:
    return "".join(AXES[int(c)] for c in codes)


@dataclass(frozen=True)
class ModelParams:
    """Chain size, transverse field, decoherence strength and boundary."""

    n_qubits: int
    g: float
    mu: float
    boundary: str = "open"
    require_paramagnet: bool = True

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"boundary must be 'open' or 'periodic', got {self.boundary!r}")
        if self.require_paramagnet and not self.g > 1:
            raise ValueError(f"g must exceed 1 (paramagnetic phase), got {self.g}")
        if not self.g > 0:
            raise ValueError(f"g must be positive, got {self.g}")
        if not 0 <= self.mu <= self.n_qubits:
            raise ValueError(f"mu must lie in [0, N={self.n_qubits}], got {self.mu}")

    @property
    def pair_probability(self) -> float:
        return self.mu / self.n_qubits


@dataclass(frozen=True, eq=False)
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != 2**self.n_qubits:
            raise ValueError(f"expected {2**self.n_qubits} amplitudes, got {amps.size}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1) > 1e-10:
            raise ValueError(f"state is not normalized (norm={norm})")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, amplitudes, normalize=True) -> StateVector:
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        n = int(round(np.log2(amps.size)))
        if normalize:
            amps = amps / np.linalg.norm(amps)
        return cls(n, amps)

    @classmethod
    def basis_state(cls, n_qubits: int, bits: str | int = 0) -> StateVector:
        index = int(bits, 2) if isinstance(bits, str) else int(bits)
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[index] = 1
        return cls(n_qubits, amps)

    @classmethod
    def plus_state(cls, n_qubits: int) -> StateVector:
        return cls(n_qubits, np.full(2**n_qubits, 2 ** (-n_qubits / 2), dtype=complex))

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    n_qubits: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        rho = np.array(self.entries, dtype=complex)
        dim = 2**self.n_qubits
        if rho.shape != (dim, dim):
            raise ValueError(f"expected a {dim}x{dim} matrix, got {rho.shape}")
        if not np.allclose(rho, rho.conj().T, atol=1e-12, rtol=0):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1) > 1e-12 * max(1, dim / 64):
            raise ValueError(f"density matrix trace is {np.trace(rho).real}, expected 1")
        rho.flags.writeable = False
        object.__setattr__(self, "entries", rho)

    @classmethod
    def from_state(cls, state: StateVector) -> DensityMatrix:
        a = state.amplitudes
        return cls(state.n_qubits, np.outer(a, a.conj()))

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> DensityMatrix:
        return cls(n_qubits, np.eye(2**n_qubits, dtype=complex) / 2**n_qubits)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])

    def is_physical(self, atol: float = 1e-10) -> bool:
        return self.min_eigenvalue() >= -atol


def _check_site(site: int, n_qubits: int):
    if not 1 <= site <= n_qubits:
        raise IndexError(f"site {site} outside [1, {n_qubits}]")


def tfim_hamiltonian(n_qubits: int, g: float, boundary: str = "open") -> sparse.csr_matrix:
    """Sparse H = -sum Z_i Z_{i+1} - g sum X_i in the computational basis."""
    dim = 2**n_qubits
    z = z_signs(n_qubits).astype(float)
    bonds = [(i, i + 1) for i in range(n_qubits - 1)]
    if boundary == "periodic" and n_qubits > 2:
        bonds.append((n_qubits - 1, 0))
    diag = np.zeros(dim)
    for i, j in bonds:
        diag -= z[:, i] * z[:, j]
    idx = np.arange(dim)
    rows = [idx]
    cols = [idx]
    vals = [diag]
    for i in range(n_qubits):
        rows.append(idx)
        cols.append(idx ^ (1 << (n_qubits - 1 - i)))
        vals.append(np.full(dim, -g))
    return sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    )


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    k = np.argmax(np.abs(vec))
    return vec * (abs(vec[k]) / vec[k])


def parity_expectation(state: StateVector) -> float:
    """<psi| prod_i X_i |psi>; prod X maps index b to its bitwise complement."""
    a = state.amplitudes
    return float(np.vdot(a, a[::-1]).real)


def ground_state(params: ModelParams, dense_limit: int = DENSE_LIMIT) -> StateVector:
    """Ground state of the transverse-field Ising chain for ``params``.

    The returned vector has its largest-magnitude amplitude real and positive.
    When the low-lying spectrum is (nearly) degenerate the result is projected
    onto the even sector of prod_i X_i, so it is always strongly symmetric.
    """
    n = params.n_qubits
    if n > dense_limit:
        raise DimensionError(f"N={n} exceeds the dense limit {dense_limit}")
    ham = tfim_hamiltonian(n, params.g, params.boundary)
    if n <= _FULL_EIGH_LIMIT:
        energies, vecs = np.linalg.eigh(ham.toarray())
        energy, vec = energies[0], vecs[:, 0]
    else:
        energies, vecs = eigsh(ham, k=1, which="SA", tol=1e-13, maxiter=20000)
        energy, vec = energies[0], vecs[:, 0]
    vec = vec.astype(complex)
    parity = np.vdot(vec, vec[::-1]).real
    if abs(abs(parity) - 1) > 1e-9:
        even = vec + vec[::-1]
        vec = even if np.linalg.norm(even) > 1e-6 else vec - vec[::-1]
    vec = _fix_phase(vec / np.linalg.norm(vec))
    residual = np.linalg.norm(ham @ vec - energy * vec)
    if residual > 1e-8 * max(1.0, abs(energy)):
        raise ConvergenceError(f"ground state residual {residual:.3e} too large", residual)
    return StateVector(n, vec)


def energy(state: StateVector, params: ModelParams) -> float:
    ham = tfim_hamiltonian(state.n_qubits, params.g, params.boundary)
    a = state.amplitudes
    return float(np.vdot(a, ham @ a).real)


def _apply_1q(amps: np.ndarray, matrix: np.ndarray, qubit: int, n: int) -> np.ndarray:
    # qubit is 0-based here
    t = amps.reshape(2**qubit, 2, 2 ** (n - qubit - 1))
    return np.einsum("ab,ibj->iaj", matrix, t).reshape(-1)


def apply_pauli(state: StateVector, site: int, axis: str) -> StateVector:
    _check_site(site, state.n_qubits)
    if axis not in PAULI:
        raise ValueError(f"axis must be one of 'xyz', got {axis!r}")
    return StateVector(state.n_qubits, _apply_1q(state.amplitudes, PAULI[axis], site - 1, state.n_qubits))


def apply_z_string(state: StateVector, parities) -> StateVector:
    """Apply prod_i Z_i^{parities[i-1]} (a diagonal sign pattern)."""
    par = np.asarray(parities, dtype=np.int64) & 1
    signs = 1 - 2 * ((bit_table(state.n_qubits) @ par) & 1)
    return StateVector(state.n_qubits, state.amplitudes * signs)


def rotate_to_measurement_basis(state: StateVector, basis: str) -> StateVector:
    """Rotate so that computational-basis Born probabilities are those of
    measuring qubit ``i`` along ``basis[i-1]``."""
    n = state.n_qubits
    if len(basis) != n:
        raise ValueError(f"basis has length {len(basis)}, expected {n}")
    amps = state.amplitudes
    for q, code in enumerate(axes_to_codes(basis)):
        if code != 2:
            amps = _apply_1q(amps, BASIS_ROTATIONS[code], q, n)
    return StateVector(n, amps)


def index_to_bits(index, n_qubits: int) -> np.ndarray:
    """Convert basis indices to +-1 outcome vectors (last axis has length n)."""
    index = np.asarray(index)
    shifts = n_qubits - 1 - np.arange(n_qubits)
    bits = (index[..., None] >> shifts) & 1
    return (1 - 2 * bits).astype(np.int8)


def bits_to_index(bits) -> np.ndarray:
    bits = np.asarray(bits)
    n = bits.shape[-1]
    weights = 1 << (n - 1 - np.arange(n))
    return ((1 - bits) // 2).astype(np.int64) @ weights


def born_sample(state: StateVector, rng: np.random.Generator, shots: int | None = None) -> np.ndarray:
    """Draw outcome bitstrings (+-1 entries) with probability |amplitude|^2.

    Returns shape (n,) when ``shots`` is None, otherwise (shots, n).
    """
    cdf = np.cumsum(state.probabilities)
    u = rng.random(1 if shots is None else shots) * cdf[-1]
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)
    bits = index_to_bits(idx, state.n_qubits)
    return bits[0] if shots is None else bits


def _check_pair(a: DensityMatrix, b: DensityMatrix):
    if a.n_qubits != b.n_qubits:
        raise ValueError(f"dimension mismatch: {a.n_qubits} vs {b.n_qubits} qubits")


def purity(rho: DensityMatrix) -> float:
    return float(np.sum(np.abs(rho.entries) ** 2))


def overlap(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """tr[rho sigma]; real for Hermitian arguments."""
    _check_pair(rho, sigma)
    return float(np.sum(rho.entries * sigma.entries.T).real)


def conjugate_by(rho: DensityMatrix, sites, axis: str = "z") -> DensityMatrix:
    """Return Z_j Z_k rho Z_k Z_j for ``sites = (j, k)``."""
    if axis != "z":
        raise ValueError("only the Z charge operator is supported")
    j, k = sites
    for s in (j, k):
        _check_site(s, rho.n_qubits)
    z = z_signs(rho.n_qubits)
    d = (z[:, j - 1] * z[:, k - 1]).astype(float)
    return DensityMatrix(rho.n_qubits, rho.entries * np.outer(d, d))
