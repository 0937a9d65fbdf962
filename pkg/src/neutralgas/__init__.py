"""Neutral Coulomb gases on tori: ideal-gas Bessel quantities, the Gaussian
lower bound Xi_2 and exact small-lattice partition functions."""
from .errors import (
    ConfigError,
    CutoffRequired,
    DegenerateSystem,
    DimensionUnsupported,
    InvalidCutoff,
    InvalidGeometry,
    InvalidU0,
    NeutralGasError,
    NoRoot,
    NonConvergence,
    NotNeutral,
    NotSymmetrizable,
    NumericalError,
    TooLarge,
    WorkBudgetExceeded,
)
from .gaussian import GaussianBound, debye_huckel_limit, gaussian_bound, gaussian_bound_determinant
from .ideal import (
    PartitionResult,
    correlation_length,
    eta_hat,
    eta_hat_series,
    ideal_partition_quadrature,
    ideal_partition_series,
    suppressed_density,
)
from .model import (
    Ensemble,
    Geometry,
    KernelConfig,
    Species,
    System,
    build_system,
    check_charge_symmetry,
    dual_modes,
    regularized_energy,
    self_energy_constant,
    solve_tilt,
)
from .oracle import (
    BoundReport,
    configuration_energy,
    exact_partition,
    lattice_kernel,
    tilt_invariance_check,
    verify_bound,
)

__version__ = "0.1.0"
