"""Analytic layer: Ising ZZ correlators, critical dephasing strength,
saddle-point order parameter and the exact infinite-field result.

Free-fermion conventions (0-based sites, open chain of ``size`` sites):
Majoranas a_i = c_i + c_i^dag and b_i = i(c_i^dag - c_i) are interleaved as
gamma_{2i} = a_i, gamma_{2i+1} = b_i, so that

    X_i = -i gamma_{2i} gamma_{2i+1},   Z_i Z_{i+1} = -i gamma_{2i+1} gamma_{2i+2}.

With H = (i/4) gamma^T h gamma the ground state has
<gamma_m gamma_n> = delta_mn + sign(i h)_mn, and Wick's theorem turns
<Z_i Z_{i+r}> into the r x r determinant of -i <gamma_{2(i+p)+1} gamma_{2(i+q)+2}>.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import hadamard
from scipy.special import gammaln, logsumexp

from .decoherence import averaged_renyi2_exact, apply_channel_exact, dephase_pairs, pair_list
from .errors import ConvergenceError, DimensionError
from .quantum_core import (
    DENSE_LIMIT,
    DensityMatrix,
    ModelParams,
    StateVector,
    ground_state,
    z_signs,
)

DOUBLED_LIMIT = 12
IDENTITY_LIMIT = 8
DEFAULT_CHAIN = 200
# tanh(40) == 1.0 in double precision; stands in for an infinite coupling
_U_SATURATED = 40.0


@dataclass(frozen=True)
class CorrelatorTable:
    g: float
    distances: np.ndarray
    values: np.ndarray
    method: str
    size: int
    boundary: str = "open"


@dataclass(frozen=True)
class SaddleResult:
    phi_star: float
    converged: bool
    iterations: int
    residual: float

    @property
    def order_parameter(self) -> float:
        """Averaged Renyi-2 correlator predicted by the saddle, phi*^2."""
        return self.phi_star**2


@dataclass(frozen=True)
class EffectiveCoupling:
    u: float


def _majorana_sign(size: int, g: float, boundary: str = "open") -> np.ndarray:
    """Real matrix Im sign(i h) for the transverse-field Ising chain.

    On a ring the closing bond is Z_{L-1} Z_0 = i P gamma_{2L-1} gamma_0 with
    P = prod X; the ground state has P = +1, so that bond enters with the
    opposite sign (antiperiodic fermions).
    """
    h = np.zeros((2 * size, 2 * size))
    idx = np.arange(size)
    h[2 * idx, 2 * idx + 1] = 2 * g
    h[2 * idx[:-1] + 1, 2 * idx[:-1] + 2] = 2.0
    if boundary == "periodic":
        h[2 * size - 1, 0] = -2.0
    elif boundary != "open":
        raise ValueError(f"unknown boundary {boundary!r}")
    h -= h.T
    energies, vecs = np.linalg.eigh(1j * h)
    if np.min(np.abs(energies)) < 1e-12:
        raise ConvergenceError("fermionic spectrum has a zero mode; ground state is degenerate")
    sign = (vecs * np.sign(energies)) @ vecs.conj().T
    return sign.imag


def _start_site(size: int, r: int) -> int:
    # the pair (i0, i0 + r) is centred in the chain to keep away from the edges
    return (size - 1 - r) // 2


def _fermion_correlators(g: float, distances, size: int, boundary: str = "open") -> np.ndarray:
    s = _majorana_sign(size, g, boundary)
    out = []
    for r in distances:
        i0 = _start_site(size, r)
        rows = 2 * (i0 + np.arange(r)) + 1
        cols = 2 * (i0 + np.arange(r)) + 2
        out.append(np.linalg.det(s[np.ix_(rows, cols)]))
    return np.array(out)


def _exact_correlators(g: float, distances, size: int, boundary: str = "open") -> np.ndarray:
    psi = ground_state(ModelParams(size, g, 0.0, boundary, require_paramagnet=False))
    prob = psi.probabilities
    z = z_signs(size)
    out = []
    for r in distances:
        i0 = _start_site(size, r)
        out.append(prob @ (z[:, i0] * z[:, i0 + r]))
    return np.array(out, dtype=float)


def correlator_table(g: float, r_max: int | None = None, size: int = DEFAULT_CHAIN,
                     method: str = "free_fermion", boundary: str = "open") -> CorrelatorTable:
    """<Z_i Z_{i+r}> for r = 1..r_max, with the pair centred in the chain."""
    if not g > 0:
        raise ValueError("g must be positive")
    r_max = size // 2 if r_max is None else r_max
    if not 1 <= r_max < size:
        raise ValueError(f"r_max must lie in [1, {size - 1}]")
    distances = np.arange(1, r_max + 1)
    if method == "free_fermion":
        values = _fermion_correlators(g, distances, size, boundary)
    elif method == "exact_diag":
        if size > DENSE_LIMIT:
            raise DimensionError(f"exact diagonalization limited to {DENSE_LIMIT} sites")
        values = _exact_correlators(g, distances, size, boundary)
    else:
        raise ValueError(f"unknown method {method!r}")
    return CorrelatorTable(g, distances, values, method, size, boundary)


def zz_correlator(g: float, r: int, method: str = "free_fermion", size: int = DEFAULT_CHAIN,
                  boundary: str = "open") -> float:
    if r < 1:
        raise ValueError("r must be at least 1")
    if method == "free_fermion":
        value = float(_fermion_correlators(g, [r], size, boundary)[0])
        if 0 < abs(value) < 1e-14:
            warnings.warn(f"<Z0Z{r}> = {value:.1e} is below the determinant's resolution", RuntimeWarning)
        return value
    return float(correlator_table(g, r, size, method, boundary).values[-1])


def correlation_tail(values: np.ndarray, fit_points: int = 6) -> float:
    """Estimated sum of C(r)^2 beyond the table, from an exponential fit of
    the last ``fit_points`` squared values.  Returns inf if they do not decay."""
    sq = np.asarray(values, dtype=float) ** 2
    last = sq[-fit_points:]
    if last[-1] < 1e-30:
        return 0.0
    if np.any(last <= 0):
        return np.inf
    slope = np.polyfit(np.arange(last.size), np.log(last), 1)[0]
    if slope >= 0:
        return np.inf
    ratio = np.exp(slope)
    return float(last[-1] * ratio / (1 - ratio))


def critical_mu(table: CorrelatorTable, tol: float = 1e-6) -> float:
    """Critical dephasing strength 1 / (2 + 2 sum_{j != 0} <Z_j Z_0>^2).

    The sum runs over both signs of j, i.e. twice the table's sum over r >= 1.
    The fitted tail beyond the table is added, and its effect on mu_c must
    stay below ``tol``.  For g <= 1 the sum diverges and the boundary
    collapses to 0.
    """
    if table.g <= 1:
        warnings.warn("correlation sum diverges for g <= 1: boundary -> 0", RuntimeWarning)
        return 0.0
    tail = correlation_tail(table.values)
    total = np.sum(np.asarray(table.values) ** 2) + tail
    mu_c = 1.0 / (2.0 + 4.0 * total)
    if not 4.0 * tail * mu_c**2 <= tol:
        raise ConvergenceError(f"correlator table too short at g={table.g}: tail {tail:.2e}", tail)
    return float(mu_c)


def boundary_curve(g_grid, size: int = DEFAULT_CHAIN, tol: float = 1e-6) -> np.ndarray:
    """Rows (g, mu_c) from free-fermion correlators on an open chain."""
    g_grid = np.atleast_1d(np.asarray(g_grid, dtype=float))
    if g_grid.size == 0:
        raise ValueError("empty g grid")
    if np.any(g_grid <= 1):
        raise ValueError("boundary curve needs g > 1")
    mus = [critical_mu(correlator_table(g, size=size), tol) for g in g_grid]
    return np.column_stack([g_grid, mus])


def z_hamming_distribution(psi: StateVector) -> np.ndarray:
    """Distribution of D(s, t) for s, t drawn independently from |psi|^2."""
    n = psi.n_qubits
    h = hadamard(2**n).astype(float)
    xor_weight = ((psi.probabilities @ h) ** 2) @ h / 2**n
    popcount = np.array([bin(m).count("1") for m in range(2**n)])
    dist = np.bincount(popcount, weights=xor_weight, minlength=n + 1)
    return np.clip(dist, 0.0, None)


def log_doubled_overlap(psi: StateVector, a: float) -> float:
    """ln <<psi0| exp(a sum_i Z_i Z~_i) |psi0>> with |psi0>> = |psi> x |psi*>."""
    n = psi.n_qubits
    if n > DOUBLED_LIMIT:
        raise DimensionError(f"doubled overlap limited to N<={DOUBLED_LIMIT}")
    dist = z_hamming_distribution(psi)
    m = n - 2 * np.arange(n + 1)
    keep = dist > 0
    return float(logsumexp(np.log(dist[keep]) + a * m[keep]))


def doubled_overlap(psi: StateVector, a: float) -> float:
    """sum_{s,t} |psi_s|^2 |psi_t|^2 exp(a sum_i s_i t_i)."""
    return float(np.exp(log_doubled_overlap(psi, a)))


def _mean_field_rhs(source, n: int):
    """Return phi -> (1/N) <M e^{2 mu phi M}> / <e^{2 mu phi M}>, M = sum Z Z~."""
    if isinstance(source, str):
        if source != "product":
            raise ValueError(f"unknown closed form {source!r}")
        return lambda a: np.tanh(a)
    dist = z_hamming_distribution(source)
    m = n - 2 * np.arange(n + 1)
    keep = dist > 0
    logw, m = np.log(dist[keep]), m[keep]

    def rhs(a):
        w = logw + a * m
        w = np.exp(w - w.max())
        return float(w @ m / w.sum() / n)

    return rhs


def solve_saddle(source, mu: float, n_qubits: int | None = None, tol: float = 1e-12,
                 max_iter: int = 200) -> SaddleResult:
    """Largest non-negative solution of the mean-field equation
    phi = (1/N) <<M e^{2 mu phi M}>> / <<e^{2 mu phi M}>>.

    ``source`` is a StateVector (exact evaluation in the doubled space) or
    ``"product"`` for |+>^N, where the equation reduces to phi = tanh(2 mu phi).
    The root is bracketed on a grid over (0, 1] and refined by bisection.
    """
    if mu < 0:
        raise ValueError("mu must be non-negative")
    if isinstance(source, StateVector):
        if n_qubits is not None and n_qubits != source.n_qubits:
            raise ValueError("n_qubits disagrees with the state")
        n_qubits = source.n_qubits
    rhs = _mean_field_rhs(source, n_qubits or 1)

    def f(phi):
        return rhs(2 * mu * phi) - phi

    grid = np.concatenate([np.geomspace(1e-10, 1e-3, 64), np.linspace(1e-3, 1.0, 2000)[1:]])
    values = np.array([f(x) for x in grid])
    positive = np.flatnonzero(values > 0)
    if positive.size == 0 or positive[-1] == grid.size - 1:
        if positive.size and positive[-1] == grid.size - 1:
            return SaddleResult(1.0, True, 0, abs(float(values[-1])))
        return SaddleResult(0.0, True, 0, 0.0)
    lo, hi = grid[positive[-1]], grid[positive[-1] + 1]
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            phi = 0.5 * (lo + hi)
            return SaddleResult(phi, True, it, abs(f(phi)))
    phi = 0.5 * (lo + hi)
    raise ConvergenceError(f"bisection did not converge in {max_iter} steps", abs(f(phi)))


def effective_coupling(mu: float, n_qubits: int) -> EffectiveCoupling:
    """u with tanh u = mu / (N - mu); infinite at mu = N/2.

    For N/2 < mu < N no real u exists; the channel there equals the
    mu -> N - mu channel followed by a fixed Z string, which leaves every
    Renyi-2 correlator unchanged, so the reflected coupling is returned.
    """
    if not 0 <= mu < n_qubits:
        raise ValueError(f"mu must lie in [0, N={n_qubits})")
    mu = min(mu, n_qubits - mu)
    if 2 * mu == n_qubits:
        return EffectiveCoupling(np.inf)
    return EffectiveCoupling(float(np.arctanh(mu / (n_qubits - mu))))


def c2_exact_g_inf(n_qubits: int, mu: float) -> float:
    """Averaged Renyi-2 correlator of the dephased |+>^N, exact for any N.

    C = [ -N + <(N-2m)^2> ] / (N(N-1)) with weights binom(N, m) e^{u (N-2m)^2}.
    """
    if n_qubits < 2:
        raise ValueError("need at least two qubits")
    u = effective_coupling(mu, n_qubits).u
    n = n_qubits
    m = np.arange(n + 1)
    sq = (n - 2 * m) ** 2.0
    if np.isinf(u):
        return 1.0
    logw = gammaln(n + 1) - gammaln(m + 1) - gammaln(n - m + 1) + u * sq
    mean_sq = np.exp(logsumexp(logw, b=sq) - logsumexp(logw))
    return float((mean_sq - n) / (n * (n - 1)))


def c2_large_n_limit(mu: float, n_ref: int = 2000) -> float:
    """N -> infinity limit of :func:`c2_exact_g_inf`.

    Second-order Richardson extrapolation in 1/N from N = n_ref, 2 n_ref and
    4 n_ref; the finite-N value itself is off by about 1/N.
    """
    c1, c2, c4 = (c2_exact_g_inf(k * n_ref, mu) for k in (1, 2, 4))
    return (8 * c4 - 6 * c2 + c1) / 3


def _log_doubled_norm(rho0: np.ndarray, n: int, u: float) -> float:
    """ln tr[rho_u^2] - 2 n_pairs u for rho_u = prod_{i<j} [cosh u + sinh u Ad(Z_iZ_j)] rho0.

    Each pair factor equals e^u [(1-p) + p Ad(Z_iZ_j)] with p = (1 - e^{-2u})/2,
    so the prefactors contribute exactly 2 n_pairs u; that linear part is left
    out here and differentiated analytically by the caller.
    """
    p = -np.expm1(-2 * u) / 2
    rho = dephase_pairs(rho0, n, p)
    return float(np.log(np.sum(np.abs(rho) ** 2)))


def verify_order_parameter_identity(n_qubits: int, mu: float, delta: float = 1e-4,
                                    psi: StateVector | None = None) -> tuple[float, float]:
    """Compare the averaged Renyi-2 correlator of the dephased state (lhs)
    with (1/(N(N-1))) d/du ln <<rho_u|rho_u>> by central differences (rhs).

    ``psi`` defaults to |+>^N, the infinite-field ground state.
    """
    if n_qubits > IDENTITY_LIMIT:
        raise DimensionError(f"identity check limited to N<={IDENTITY_LIMIT}")
    psi = StateVector.plus_state(n_qubits) if psi is None else psi
    rho0 = DensityMatrix.from_state(psi)
    lhs = averaged_renyi2_exact(apply_channel_exact(rho0, ModelParams(n_qubits, np.inf, mu)))
    u = min(effective_coupling(mu, n_qubits).u, _U_SATURATED)
    # five-point central stencil, truncation error O(delta^4)
    f = [_log_doubled_norm(rho0.entries, n_qubits, u + k * delta) for k in (-2, -1, 1, 2)]
    slope = 2 * len(pair_list(n_qubits)) + (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * delta)
    rhs = slope / (n_qubits * (n_qubits - 1))
    return lhs, float(rhs)
