"""Numerical spectral theory of the dissipative slab transport operator.

Discretizes the Birman-Schwinger family Q(z), evaluates the characteristic
function S(z), locates eigenvalues and spectral singularities, classifies the
singularity at z = 0, and cross-validates everything against a direct
time-domain simulation of the evolution group.
"""

from .specfun import (
    EULER_GAMMA,
    BranchCutError,
    BranchedLog,
    ConvergenceError,
    ExpIntValue,
    exp_int,
    exp_int_family,
    exp_int_oracle,
    log_branch,
    theta_array,
    theta_series,
)
from .discretize import (
    Assembler,
    CollisionKernel,
    GridSpec,
    OperatorMatrix,
    Profile,
    build_grid,
    cell_abs_moment,
    cell_log_moment,
)
from .spectra import (
    SpectralReport,
    SpectralSolver,
    SingularValueProfile,
    ac_splitting_profile,
    admissible_delta_bound,
    asymptotics_fit,
    bc_set,
    classify_singularity,
    compressed_limit_spectrum,
    critical_kappas_exact,
    discrete_spectrum_general,
    discrete_spectrum_isotropic,
    eta_flow,
    kappa_scan,
    n_subspace,
    s_zero,
)
from .transport import (
    Field,
    Mode,
    TransportSim,
    deflate,
    deflate_and_measure,
    eigenmode_reconstruct,
    growth_fit,
    growth_study,
)

__version__ = "0.1.0"

__all__ = [
    "EULER_GAMMA", "BranchCutError", "BranchedLog", "ConvergenceError",
    "ExpIntValue", "exp_int", "exp_int_family", "exp_int_oracle", "log_branch",
    "theta_array", "theta_series",
    "Assembler", "CollisionKernel", "GridSpec", "OperatorMatrix", "Profile",
    "build_grid", "cell_abs_moment", "cell_log_moment",
    "SpectralReport", "SpectralSolver", "SingularValueProfile",
    "ac_splitting_profile", "admissible_delta_bound", "asymptotics_fit",
    "bc_set", "classify_singularity", "compressed_limit_spectrum",
    "critical_kappas_exact", "discrete_spectrum_general",
    "discrete_spectrum_isotropic", "eta_flow", "kappa_scan", "n_subspace",
    "s_zero",
    "Field", "Mode", "TransportSim", "deflate", "deflate_and_measure",
    "eigenmode_reconstruct", "growth_fit", "growth_study",
]
