import numpy as np
import pytest

from swssb import decoherence as dec
from swssb.quantum_core import DensityMatrix, ModelParams, StateVector


def random_state(n, rng):
    amps = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return StateVector.from_amplitudes(amps)


def random_density(n, rng, rank=None):
    rank = rank or 2**n
    g = rng.normal(size=(2**n, rank)) + 1j * rng.normal(size=(2**n, rank))
    rho = g @ g.conj().T
    return DensityMatrix(n, rho / np.trace(rho).real)


def trajectory_mixture(n, mu, rng, samples=6):
    """Mixed state built from a handful of sampled trajectories of a random
    pure state, the kind of input the protocol actually sees."""
    psi = random_state(n, rng)
    params = ModelParams(n, 2.0, mu)
    weights = rng.dirichlet(np.ones(samples))
    rho = np.zeros((2**n, 2**n), dtype=complex)
    for w in weights:
        a = dec.apply_trajectory(psi, dec.sample_trajectory(params, rng)).amplitudes
        rho += w * np.outer(a, a.conj())
    return DensityMatrix(n, rho)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results, key=int):
            terminalreporter.write_line(results[key])
