"""Mean-field pricing game between petrol stations.

Each station sets tomorrow's price by minimising an expected cost built from
competition, customer fidelity, reputation (price stability) and an absolute
price penalty, against a noisy view of today's market average.
"""

from .calibration import (
    ClusterAssignment,
    FitConfig,
    FitResult,
    PricePanel,
    estimate_sigmas,
    fit,
    kmeans,
    model_residuals,
    panel_from_trajectory,
    params_from_vector,
    params_to_vector,
    station_features,
)
from .dynamics import (
    ContractionReport,
    EquilibriumResult,
    Trajectory,
    best_reply,
    closed_form_equilibrium,
    contraction_bound,
    degenerate_drift,
    jacobian,
    jacobian_row,
    simulate,
    solve_equilibrium,
    transition_map,
)
from .errors import (
    AccuracyError,
    BracketError,
    ConvergenceError,
    CoverageError,
    DegenerateModeError,
    FormatError,
    InvalidArgumentError,
    PetrolGameError,
    ValidationError,
)
from .kernels import BACKEND
from .model import (
    Agent,
    ClusterParams,
    MarketState,
    Population,
    expected_cost,
    phi_prime,
    phi_second,
    total_cost,
)
from .numerics import (
    Bracket,
    find_root_increasing,
    quadrature_expectation,
    std_normal_cdf,
    std_normal_pdf,
    std_normal_ppf,
)

__version__ = "0.1.0"
