"""Randomized-measurement detection of strong-to-weak symmetry breaking in
a dephased transverse-field Ising chain."""

from .decoherence import (
    TrajectoryMask,
    apply_channel_exact,
    apply_trajectory,
    averaged_renyi2_exact,
    renyi2_correlator_exact,
    sample_trajectory,
    swap_overlap,
)
from .protocol import (
    CampaignConfig,
    EstimatorSummary,
    HammingHistogram,
    MeasurementDataset,
    estimate_overlap,
    estimate_purity,
    exhaustive_expectation,
    hamming_distance,
    hamming_histogram,
    kl_divergence,
    run_campaign,
)
from .quantum_core import DensityMatrix, ModelParams, StateVector, ground_state
from .theory import (
    boundary_curve,
    c2_exact_g_inf,
    critical_mu,
    correlator_table,
    doubled_overlap,
    solve_saddle,
    verify_order_parameter_identity,
    zz_correlator,
)

__version__ = "0.1.0"
