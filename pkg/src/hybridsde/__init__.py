"""Sampled-data linear control systems driven by small noise.

Simulation of the hybrid SDE, its deterministic and fluctuation limits, and
Monte Carlo tools for measuring how fast the approximations converge.
"""

from .dynamics import (
    PathBundle,
    SystemModel,
    TimeGrid,
    closed_loop_state,
    closed_loop_trajectory,
    effective_drift,
    first_order_approx,
    floor_to_sample,
    rescaled_fluctuation,
    sampled_data_state,
    simulate_bundle,
    simulate_hybrid_sde,
    simulate_limit_Z,
    solve_limit_U,
)
from .errors import (
    ConvergenceError,
    DimensionError,
    DomainError,
    GridError,
    HybridSDEError,
    SingularMatrixError,
    StabilizabilityError,
)
from .harness import (
    McErrorReport,
    diagnose_ladder,
    fit_loglog,
    gaussian_transition_check,
    mc_sup_error,
    scaling_study,
    verify_lemma_decomposition,
    verify_sol_diff_identity,
)
from .matrix_kernels import expm, gram_integral, operator_norm, phi1, solve_linear
from .noise import NoisePaths, coarsen, generate_batch, generate_noise
from .regimes import DeltaRule, Regime, ScalingRegime, classify, regime_at, snap_delta
from .riccati import LqrSpec, RiccatiSolution, care_residual, closed_loop_eigen_check, solve_care

__version__ = "0.1.0"
