"""Randomized Pauli-measurement protocol for purity and ZZ-twisted overlap.

A campaign repeats: draw a uniformly random basis in {x, y, z}^N; take
``shots_rho`` shots of rho and ``shots_tilde`` shots of Z_jZ_k rho Z_kZ_j in
that basis, each from a freshly sampled decoherence trajectory.  Pairs of
outcomes (s, s') in the same basis give the unbiased statistic

    F = 2^N (-2)^(-D(s, s')) = (-1)^D 2^(N - D),

whose mean over rho x rho-tilde pairs estimates tr[rho rho-tilde] and over
distinct rho x rho pairs estimates tr[rho^2].
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.linalg import hadamard
from scipy.special import kl_div

from .decoherence import sample_parities
from .errors import DimensionError, IncompatibleSupportError
from .quantum_core import (
    BASIS_ROTATIONS,
    DensityMatrix,
    ModelParams,
    StateVector,
    codes_to_axes,
    index_to_bits,
    z_signs,
)

BLOCK_ROUNDS = 4096
TABLE_LIMIT = 9
EXHAUSTIVE_LIMIT = 4
WORKERS_ENV = "SWSSB_WORKERS"


@dataclass(frozen=True)
class CampaignConfig:
    """Sampling budget and target pair of one measurement campaign.

    ``apply_charge=False`` skips the Z_jZ_k gates on the tilde shots, which
    turns the overlap experiment into a second purity experiment.
    """

    n_rounds: int
    shots_rho: int = 2
    shots_tilde: int = 1
    pair: tuple[int, int] | None = None
    seed: int = 0
    engine: str = "auto"
    apply_charge: bool = True

    def __post_init__(self):
        if self.n_rounds < 0:
            raise ValueError("n_rounds must be non-negative")
        if self.shots_rho < 1 or self.shots_tilde < 1:
            raise ValueError("shots per basis must be at least 1")
        if self.engine not in ("auto", "table", "statevector"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.pair is not None:
            object.__setattr__(self, "pair", tuple(int(s) for s in self.pair))

    def resolved_pair(self, n_qubits: int) -> tuple[int, int]:
        j, k = self.pair if self.pair is not None else (1, n_qubits)
        if j == k or not (1 <= j <= n_qubits and 1 <= k <= n_qubits):
            raise ValueError(f"invalid target pair ({j}, {k}) for N={n_qubits}")
        return j, k

    def resolved_engine(self, n_qubits: int) -> str:
        if self.engine == "auto":
            return "table" if n_qubits <= TABLE_LIMIT else "statevector"
        return self.engine


@dataclass(frozen=True)
class MeasurementRound:
    basis: str
    rho_outcomes: np.ndarray
    tilde_outcomes: np.ndarray


@dataclass(eq=False)
class MeasurementDataset:
    """Outcomes of a campaign stored as dense arrays.

    ``bases`` holds axis codes (0=x, 1=y, 2=z) with shape (rounds, N); the
    outcome arrays hold +-1 with shapes (rounds, shots, N).
    """

    params: ModelParams
    config: CampaignConfig
    bases: np.ndarray = field(repr=False)
    rho_outcomes: np.ndarray = field(repr=False)
    tilde_outcomes: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = self.params.n_qubits
        rounds = self.bases.shape[0]
        if self.bases.shape != (rounds, n):
            raise ValueError("bases array has the wrong shape")
        if self.rho_outcomes.shape != (rounds, self.config.shots_rho, n):
            raise ValueError("rho outcome array has the wrong shape")
        if self.tilde_outcomes.shape != (rounds, self.config.shots_tilde, n):
            raise ValueError("tilde outcome array has the wrong shape")

    def __len__(self):
        return self.bases.shape[0]

    def round(self, index: int) -> MeasurementRound:
        return MeasurementRound(
            codes_to_axes(self.bases[index]), self.rho_outcomes[index], self.tilde_outcomes[index]
        )

    @property
    def rounds(self):
        return [self.round(i) for i in range(len(self))]


@dataclass(frozen=True)
class EstimatorSummary:
    estimate: float
    std_error: float
    n_pairs: int


@dataclass(frozen=True)
class HammingHistogram:
    counts: np.ndarray

    @property
    def n_qubits(self) -> int:
        return self.counts.size - 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def frequencies(self) -> np.ndarray:
        return self.counts / self.counts.sum()


def basis_probability_table(state: StateVector | DensityMatrix) -> np.ndarray:
    """Born probabilities for every basis, shape (3**N, 2**N).

    Row index is the base-3 number formed by the axis codes with qubit 1
    most significant.
    """
    n = state.n_qubits
    if n > TABLE_LIMIT:
        raise DimensionError(f"probability table limited to N<={TABLE_LIMIT}, got {n}")
    if isinstance(state, DensityMatrix):
        weights, vecs = np.linalg.eigh(state.entries)
        keep = weights > 1e-15
        return sum(w * _pure_table(v, n) for w, v in zip(weights[keep], vecs.T[keep]))
    return _pure_table(state.amplitudes, n)


def _pure_table(amplitudes: np.ndarray, n: int) -> np.ndarray:
    amps = np.asarray(amplitudes, dtype=complex)[None, :]
    for q in range(n):
        t = amps.reshape(amps.shape[0], 2**q, 2, 2 ** (n - q - 1))
        rotated = np.einsum("cab,ribj->rciaj", BASIS_ROTATIONS, t)
        amps = rotated.reshape(-1, 2**n)
    return np.abs(amps) ** 2


def _basis_row(codes: np.ndarray) -> np.ndarray:
    n = codes.shape[-1]
    return codes.astype(np.int64) @ (3 ** (n - 1 - np.arange(n)))


def _parity_to_mask(parities: np.ndarray) -> np.ndarray:
    n = parities.shape[-1]
    return parities.astype(np.int64) @ (1 << (n - 1 - np.arange(n)))


def _invert_cdf(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    # cdf_rows: (R, 2^N) per round; u: (R, M)
    idx = (cdf_rows[:, None, :] <= u[:, :, None]).sum(axis=-1)
    return np.minimum(idx, cdf_rows.shape[-1] - 1)


def _rotate_batch(amps: np.ndarray, codes: np.ndarray, n: int) -> np.ndarray:
    # amps: (S, 2^N); codes: (S, N) -- each shot rotated into its own basis
    for q in range(n):
        t = amps.reshape(amps.shape[0], 2**q, 2, 2 ** (n - q - 1))
        amps = np.einsum("sab,sibj->siaj", BASIS_ROTATIONS[codes[:, q]], t).reshape(amps.shape[0], -1)
    return amps


_WORKER_STATE: dict = {}


def _init_worker(state):
    _WORKER_STATE.clear()
    _WORKER_STATE.update(state)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _simulate_block(block: int):
    s = _WORKER_STATE
    n, count = s["n"], min(BLOCK_ROUNDS, s["n_rounds"] - block * BLOCK_ROUNDS)
    rng = _block_rng(s["seed"], block)
    # fixed draw order: bases, rho trajectories, rho uniforms, tilde trajectories, tilde uniforms
    codes = rng.integers(0, 3, size=(count, n), dtype=np.uint8)
    par_rho = sample_parities(n, s["p"], rng, (count, s["shots_rho"]))
    u_rho = rng.random((count, s["shots_rho"]))
    par_tilde = sample_parities(n, s["p"], rng, (count, s["shots_tilde"]))
    u_tilde = rng.random((count, s["shots_tilde"]))
    par_tilde ^= s["charge"]

    if s["engine"] == "table":
        # Z on a qubit measured along x or y flips that outcome bit; along z it
        # is a phase.  So every trajectory reuses the undecohered Born table.
        cdf = s["cdf"][_basis_row(codes)]
        moved = (codes != 2)[:, None, :]
        out = []
        for par, u in ((par_rho, u_rho), (par_tilde, u_tilde)):
            idx = _invert_cdf(cdf, u) ^ _parity_to_mask(par * moved)
            out.append(index_to_bits(idx, n))
        return codes, out[0], out[1]

    amps0 = s["amplitudes"]
    signs = z_signs(n)
    out = []
    for par, u in ((par_rho, u_rho), (par_tilde, u_tilde)):
        shots = par.shape[1]
        flat_par = par.reshape(-1, n)
        flip = np.prod(np.where(flat_par[:, None, :] == 1, signs[None, :, :], 1), axis=-1)
        amps = _rotate_batch(amps0[None, :] * flip, np.repeat(codes, shots, axis=0), n)
        cdf = np.cumsum(np.abs(amps) ** 2, axis=-1)
        cdf /= cdf[:, -1:]
        idx = _invert_cdf(cdf, u.reshape(-1, 1))[:, 0].reshape(count, shots)
        out.append(index_to_bits(idx, n))
    return codes, out[0], out[1]


def default_workers() -> int:
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def run_campaign(
    params: ModelParams,
    config: CampaignConfig,
    ground: StateVector | DensityMatrix,
    workers: int | None = None,
) -> MeasurementDataset:
    """Simulate a measurement campaign starting from ``ground``.

    Randomness is derived from ``config.seed`` per block of BLOCK_ROUNDS
    rounds, so the dataset does not depend on ``workers``.
    """
    n = params.n_qubits
    if ground.n_qubits != n:
        raise ValueError("ground state and params disagree on N")
    j, k = config.resolved_pair(n)
    engine = config.resolved_engine(n)
    charge = np.zeros(n, dtype=np.int64)
    if config.apply_charge:
        charge[[j - 1, k - 1]] = 1
    state = dict(
        n=n,
        n_rounds=config.n_rounds,
        seed=config.seed,
        p=params.pair_probability,
        shots_rho=config.shots_rho,
        shots_tilde=config.shots_tilde,
        charge=charge,
        engine=engine,
    )
    if engine == "table":
        cdf = np.cumsum(basis_probability_table(ground), axis=-1)
        state["cdf"] = cdf / cdf[:, -1:]
    else:
        if not isinstance(ground, StateVector):
            raise TypeError("the statevector engine needs a pure initial state")
        state["amplitudes"] = ground.amplitudes

    n_blocks = -(-config.n_rounds // BLOCK_ROUNDS)
    workers = default_workers() if workers is None else workers
    if workers > 1 and n_blocks > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(state,)) as pool:
            blocks = list(pool.map(_simulate_block, range(n_blocks)))
    else:
        _init_worker(state)
        blocks = [_simulate_block(b) for b in range(n_blocks)]

    if blocks:
        bases, rho, tilde = (np.concatenate(parts) for parts in zip(*blocks))
    else:
        bases = np.zeros((0, n), dtype=np.uint8)
        rho = np.zeros((0, config.shots_rho, n), dtype=np.int8)
        tilde = np.zeros((0, config.shots_tilde, n), dtype=np.int8)
    return MeasurementDataset(params, config, bases, rho, tilde)


def hamming_distance(s, t) -> int:
    s, t = np.asarray(s), np.asarray(t)
    if s.shape != t.shape:
        raise ValueError(f"length mismatch: {s.shape} vs {t.shape}")
    return int(np.count_nonzero(s != t))


def pair_statistic(distance, n_qubits: int) -> np.ndarray:
    """Integer-valued F = (-1)^D 2^(N-D)."""
    d = np.asarray(distance, dtype=np.int64)
    return np.where(d & 1, -1, 1) * (np.int64(1) << (n_qubits - d))


def _cross_distances(dataset: MeasurementDataset) -> np.ndarray:
    a = dataset.rho_outcomes[:, :, None, :]
    b = dataset.tilde_outcomes[:, None, :, :]
    return (a != b).sum(axis=-1).reshape(len(dataset), -1)


def _purity_distances(dataset: MeasurementDataset) -> np.ndarray:
    m = dataset.config.shots_rho
    if m < 2:
        raise ValueError("purity needs at least two rho shots per basis")
    ia, ib = np.triu_indices(m, k=1)
    rho = dataset.rho_outcomes
    return (rho[:, ia, :] != rho[:, ib, :]).sum(axis=-1)


def _summarize(distances: np.ndarray, n_qubits: int) -> EstimatorSummary:
    rounds = distances.shape[0]
    if rounds == 0:
        raise ValueError("empty dataset")
    per_round = pair_statistic(distances, n_qubits).mean(axis=1)
    se = per_round.std(ddof=1) / np.sqrt(rounds) if rounds > 1 else float("inf")
    return EstimatorSummary(float(per_round.mean()), float(se), int(distances.size))


def estimate_overlap(dataset: MeasurementDataset) -> EstimatorSummary:
    """Unbiased estimate of tr[rho-tilde rho] (P_ZZ)."""
    return _summarize(_cross_distances(dataset), dataset.params.n_qubits)


def estimate_purity(dataset: MeasurementDataset) -> EstimatorSummary:
    """Unbiased estimate of tr[rho^2] (P_I) from distinct rho-shot pairs."""
    return _summarize(_purity_distances(dataset), dataset.params.n_qubits)


def hamming_histogram(dataset: MeasurementDataset, kind: str) -> HammingHistogram:
    """Histogram of D over the pairs used by the matching estimator.

    ``kind`` is ``"purity_pairs"`` (unordered distinct rho-shot pairs) or
    ``"cross_pairs"`` (every rho-shot x tilde-shot pair).
    """
    if kind == "purity_pairs":
        distances = _purity_distances(dataset)
    elif kind == "cross_pairs":
        distances = _cross_distances(dataset)
    else:
        raise ValueError(f"unknown pair population {kind!r}")
    if distances.size == 0:
        raise ValueError("empty pair population")
    n = dataset.params.n_qubits
    return HammingHistogram(np.bincount(distances.ravel(), minlength=n + 1).astype(np.int64))


def kl_divergence(p: HammingHistogram, q: HammingHistogram, smoothing: float = 0.5) -> float:
    """S_KL(p|q) = sum_D p(D) ln(p(D)/q(D)) after adding ``smoothing`` to
    every bin of both histograms and renormalizing."""
    if p.counts.size != q.counts.size:
        raise ValueError("histograms cover different N")
    if smoothing < 0:
        raise ValueError("smoothing must be non-negative")
    pc = p.counts + smoothing
    qc = q.counts + smoothing
    if pc.sum() <= 0 or qc.sum() <= 0:
        raise ValueError("empty histogram")
    pf, qf = pc / pc.sum(), qc / qc.sum()
    bad = (pf > 0) & (qf == 0)
    if bad.any():
        raise IncompatibleSupportError(f"q is empty at D={np.flatnonzero(bad).tolist()} where p is not")
    # kl_div terms x ln(x/y) - x + y are each >= 0 and sum to the KL divergence
    return float(kl_div(pf, qf).sum())


def _hamming_matrix(n: int) -> np.ndarray:
    idx = np.arange(2**n)
    x = idx[:, None] ^ idx[None, :]
    return np.array([bin(v).count("1") for v in x.ravel()]).reshape(x.shape)


def exhaustive_expectation(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Exact mean of 2^N (-2)^(-D) over all 3^N bases and all outcome pairs.

    Born probabilities are taken from the full rotation unitary of each
    basis, independent of the fast probability table.
    """
    n = rho.n_qubits
    if sigma.n_qubits != n:
        raise ValueError("dimension mismatch")
    if n > EXHAUSTIVE_LIMIT:
        raise DimensionError(f"exhaustive check limited to N<={EXHAUSTIVE_LIMIT}, got {n}")
    weight = 2.0**n * (-2.0) ** (-_hamming_matrix(n))
    total = 0.0
    for codes in product(range(3), repeat=n):
        u = np.array([[1.0 + 0j]])
        for c in codes:
            u = np.kron(u, BASIS_ROTATIONS[c])
        p_rho = np.real(np.diag(u @ rho.entries @ u.conj().T))
        p_sigma = np.real(np.diag(u @ sigma.entries @ u.conj().T))
        total += p_rho @ weight @ p_sigma
    return float(total / 3**n)


def hamming_distribution_exact(rho: StateVector | DensityMatrix, sigma: StateVector | DensityMatrix) -> np.ndarray:
    """Exact distribution of D(s, s') for s ~ rho, s' ~ sigma in a shared
    uniformly random basis; length N + 1."""
    n = rho.n_qubits
    p_tab = basis_probability_table(rho)
    q_tab = p_tab if sigma is rho else basis_probability_table(sigma)
    h = hadamard(2**n).astype(float)
    # XOR autocorrelation A(m) = sum_s P(s) Q(s ^ m) via the Walsh-Hadamard transform
    spectrum = ((p_tab @ h) * (q_tab @ h)).mean(axis=0)
    xor_weight = spectrum @ h / 2**n
    popcount = np.array([bin(m).count("1") for m in range(2**n)])
    return np.bincount(popcount, weights=xor_weight, minlength=n + 1)
