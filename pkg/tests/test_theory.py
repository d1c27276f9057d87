import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_state
from swssb import decoherence as dec
from swssb import theory as th
from swssb.errors import DimensionError
from swssb.quantum_core import DensityMatrix, ModelParams, StateVector, ground_state


def brute_doubled_overlap(psi, a):
    n = psi.n_qubits
    s = 1 - 2 * ((np.arange(2**n)[:, None] >> np.arange(n)[::-1]) & 1)
    p = psi.probabilities
    return float(np.sum(p[:, None] * p[None, :] * np.exp(a * (s @ s.T))))


def two_qubit_c2(mu):
    p = mu / 2
    return 2 * p * (1 - p) / ((1 - p) ** 2 + p**2)


class TestCorrelators:
    @pytest.mark.parametrize("g", [10.0, 2.0, 1.2, 1.0, 0.7])
    @pytest.mark.parametrize("boundary", ["open", "periodic"])
    def test_free_fermion_matches_exact_diag(self, g, boundary):
        ff = th.correlator_table(g, 6, size=12, boundary=boundary).values
        ed = th.correlator_table(g, 6, size=12, method="exact_diag", boundary=boundary).values
        np.testing.assert_allclose(ff, ed, atol=1e-8)

    def test_infinite_field_vanishes(self):
        # the nearest neighbour keeps its 1/(2g) perturbative tail
        assert th.zz_correlator(1e6, 1) == pytest.approx(5e-7, rel=1e-6)
        for r in (2, 3, 10):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                assert abs(th.zz_correlator(1e6, r)) < 1e-10

    def test_frozen_values(self):
        assert th.zz_correlator(10.0, 1) == pytest.approx(0.05006273560323045, abs=1e-12)
        assert th.zz_correlator(2.0, 3) == pytest.approx(0.04115985936224127, abs=1e-12)

    def test_perturbative_nearest_neighbour(self):
        # first order in 1/g: <Z0 Z1> = 1/(2g)
        assert th.zz_correlator(200.0, 1) == pytest.approx(1 / 400, rel=1e-3)

    def test_values_bounded_and_decaying(self):
        for g in (1.1, 2.0, 10.0):
            v = th.correlator_table(g, 30).values
            assert np.all(np.abs(v) <= 1)
            resolved = v[1:][v[1:] > 1e-13]
            assert np.all(np.diff(resolved) <= 0)

    def test_critical_power_law(self):
        table = th.correlator_table(1.0, 32, size=512, boundary="periodic")
        r = table.distances[3:]
        slope = np.polyfit(np.log(r), np.log(table.values[3:]), 1)[0]
        assert slope == pytest.approx(-0.25, abs=0.0125)

    def test_argument_checks(self):
        with pytest.raises(ValueError):
            th.zz_correlator(2.0, 0)
        with pytest.raises(ValueError):
            th.correlator_table(2.0, 5, method="mps")
        with pytest.raises(DimensionError):
            th.correlator_table(2.0, 3, size=20, method="exact_diag")

    def test_underflow_warns(self):
        with pytest.warns(RuntimeWarning):
            th.zz_correlator(1e3, 6)


class TestCriticalMu:
    def test_zero_correlators(self):
        table = th.CorrelatorTable(5.0, np.arange(1, 11), np.zeros(10), "free_fermion", 200)
        assert th.critical_mu(table) == 0.5

    def test_frozen_g10(self):
        assert th.critical_mu(th.correlator_table(10.0)) == pytest.approx(0.4974921560650236, abs=1e-10)

    def test_exact_diag_cross_check(self):
        ff = th.critical_mu(th.correlator_table(10.0))
        ed = th.critical_mu(th.correlator_table(10.0, size=12, method="exact_diag"))
        assert ed == pytest.approx(ff, rel=0.01)

    def test_vanishes_toward_g_one(self):
        values = [th.critical_mu(th.correlator_table(g)) for g in (1.5, 1.2, 1.1, 1.05)]
        assert np.all(np.diff(values) < 0)
        assert values[-1] < 0.15

    def test_ordered_phase_warns(self):
        with pytest.warns(RuntimeWarning):
            assert th.critical_mu(th.correlator_table(0.9, 10, size=40)) == 0.0

    def test_large_field_gap(self):
        # 1/mu_c - 2 = 4 sum_r <Z0Zr>^2 is dominated by (1/(2g))^2 from r = 1
        for g in (20.0, 200.0, 1000.0):
            gap = 1 / th.critical_mu(th.correlator_table(g)) - 2
            assert g**2 * gap == pytest.approx(1, abs=1 / g)

    def test_curve(self):
        curve = th.boundary_curve([1.5, 3.0, 1000.0])
        assert curve.shape == (3, 2)
        assert np.all((0 < curve[:, 1]) & (curve[:, 1] <= 0.5))
        assert abs(curve[-1, 1] - 0.5) < 0.02
        with pytest.raises(ValueError):
            th.boundary_curve([])
        with pytest.raises(ValueError):
            th.boundary_curve([0.9])

    def test_size_convergence(self):
        grid = [1.2, 2.0, 10.0, 100.0]
        a = th.boundary_curve(grid, size=200)[:, 1]
        b = th.boundary_curve(grid, size=400)[:, 1]
        np.testing.assert_allclose(a, b, atol=1e-6)


class TestDoubledSpace:
    def test_normalization(self, rng):
        assert th.doubled_overlap(random_state(3, rng), 0.0) == pytest.approx(1, abs=1e-14)

    @pytest.mark.parametrize("a", [0.1, 0.7, 2.0])
    def test_product_state(self, a):
        assert th.doubled_overlap(StateVector.plus_state(5), a) == pytest.approx(np.cosh(a) ** 5, rel=1e-12)

    def test_brute_force(self, rng):
        psi = random_state(3, rng)
        for a in (-0.4, 0.3, 1.5):
            assert th.doubled_overlap(psi, a) == pytest.approx(brute_doubled_overlap(psi, a), rel=1e-12)

    def test_no_overflow(self):
        assert np.isfinite(th.log_doubled_overlap(StateVector.plus_state(8), 500.0))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(-2, 2), st.floats(0.01, 1))
    def test_log_convex(self, seed, a, h):
        psi = random_state(3, np.random.default_rng(seed))
        f = th.log_doubled_overlap
        assert f(psi, a + h) + f(psi, a - h) - 2 * f(psi, a) >= -1e-10


class TestSaddle:
    def test_below_threshold(self):
        assert th.solve_saddle("product", 0.3).phi_star == 0.0

    def test_product_equation(self):
        res = th.solve_saddle("product", 0.7)
        assert res.converged
        assert res.phi_star == pytest.approx(np.tanh(1.4 * res.phi_star), abs=1e-10)
        assert res.phi_star == pytest.approx(0.8145285312123673, abs=1e-9)

    def test_continuity_at_threshold(self):
        phis = [th.solve_saddle("product", mu).phi_star for mu in (0.6, 0.52, 0.505, 0.5005)]
        assert np.all(np.diff(phis) < 0)
        assert phis[-1] < 0.06

    def test_large_n_limit_of_closed_form(self):
        res = th.solve_saddle("product", 0.7)
        assert th.c2_large_n_limit(0.7) == pytest.approx(res.order_parameter, abs=1e-6)

    def test_finite_n_gap_scales_as_inverse_n(self):
        target = th.solve_saddle("product", 0.7).order_parameter
        gaps = [n * abs(th.c2_exact_g_inf(n, 0.7) - target) for n in (1000, 2000, 4000)]
        np.testing.assert_allclose(gaps, gaps[-1], rtol=0.01)

    def test_state_source(self):
        psi = StateVector.plus_state(6)
        res = th.solve_saddle(psi, 0.9)
        # for |+>^N the doubled-space equation collapses to the tanh form exactly
        assert res.phi_star == pytest.approx(th.solve_saddle("product", 0.9).phi_star, abs=1e-10)

    def test_ground_state_source_smaller_threshold(self):
        psi = ground_state(ModelParams(6, 1.5, 0.0))
        assert th.solve_saddle(psi, 0.45).phi_star > 0
        assert th.solve_saddle(StateVector.plus_state(6), 0.45).phi_star == 0

    def test_negative_mu(self):
        with pytest.raises(ValueError):
            th.solve_saddle("product", -0.1)


class TestClosedForm:
    def test_mu_zero(self):
        for n in (2, 5, 40):
            assert th.c2_exact_g_inf(n, 0.0) == pytest.approx(0, abs=1e-12)

    @pytest.mark.parametrize("mu", [0.1, 0.5, 1.0, 1.4, 1.9])
    def test_two_qubits(self, mu):
        u = th.effective_coupling(mu, 2).u
        assert th.c2_exact_g_inf(2, mu) == pytest.approx(two_qubit_c2(mu), abs=1e-12)
        if np.isfinite(u):
            assert np.tanh(2 * u) == pytest.approx(two_qubit_c2(mu), abs=1e-12)

    def test_effective_coupling_definition(self):
        assert np.tanh(th.effective_coupling(0.8, 4).u) == pytest.approx(0.8 / 3.2)
        assert th.effective_coupling(2.0, 4).u == np.inf
        with pytest.raises(ValueError):
            th.effective_coupling(4.0, 4)

    @pytest.mark.parametrize("mu", [0.2, 0.8, 2.0, 2.7])
    def test_matches_dense_channel(self, mu):
        plus = DensityMatrix.from_state(StateVector.plus_state(4))
        dense = dec.averaged_renyi2_exact(dec.apply_channel_exact(plus, ModelParams(4, np.inf, mu)))
        assert th.c2_exact_g_inf(4, mu) == pytest.approx(dense, abs=1e-10)

    def test_monotone_then_reflected(self):
        n = 8
        grid = np.linspace(0, n / 2, 41)
        values = [th.c2_exact_g_inf(n, mu) for mu in grid]
        assert np.all(np.diff(values) >= -1e-15)
        for mu in (0.5, 2.0, 3.5):
            assert th.c2_exact_g_inf(n, n - mu) == pytest.approx(th.c2_exact_g_inf(n, mu), abs=1e-13)

    def test_large_n_stable(self):
        assert 0 <= th.c2_exact_g_inf(20_000, 0.3) < 1e-3
        assert 0 < th.c2_exact_g_inf(20_000, 0.9) <= 1


class TestIdentity:
    @pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
    @pytest.mark.parametrize("mu", [0.25, 0.5, 1.0])
    def test_agrees(self, n, mu):
        lhs, rhs = th.verify_order_parameter_identity(n, mu)
        assert lhs == pytest.approx(rhs, abs=1e-6)

    def test_two_qubit_saturation(self):
        lhs, rhs = th.verify_order_parameter_identity(2, 1.0)
        assert lhs == pytest.approx(1, abs=1e-6) and rhs == pytest.approx(1, abs=1e-6)

    def test_mu_zero(self):
        lhs, rhs = th.verify_order_parameter_identity(4, 0.0)
        assert abs(lhs) < 1e-8 and abs(rhs) < 1e-8

    def test_three_oracles_close(self):
        for n in (2, 3, 4):
            for mu in (0.3, 0.9):
                lhs, rhs = th.verify_order_parameter_identity(n, mu)
                assert th.c2_exact_g_inf(n, mu) == pytest.approx(lhs, abs=1e-10)
                assert rhs == pytest.approx(lhs, abs=1e-6)

    def test_size_limit(self):
        with pytest.raises(DimensionError):
            th.verify_order_parameter_identity(9, 0.5)
