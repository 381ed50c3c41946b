"""Linear-quadratic mean-field games on Hilbert spaces.

Galerkin-truncated coefficient solver for the Master equation and the
N-player Nash system, with a vintage-capital application, Monte Carlo
simulation and a command-line front end.
"""

from .hilbert import (
    GalerkinSpace,
    MatrixExponentialSemigroup,
    TabulatedSemigroup,
    TimePath,
    adjoint_apply,
    operator_norm,
    semigroup_apply,
)
from .master_nash import (
    convergence_sweep,
    eval_nash_value,
    eval_value,
    feedback_control,
    hamiltonian,
    value_function,
)
from .problem import (
    ParamVector,
    ProblemData,
    ProblemValidationError,
    make_problem,
    master_params,
    nash_params,
    validate,
)
from .riccati import (
    SolverConfig,
    SolverError,
    bound_constants,
    check_apriori,
    ode_oracle_xi,
    solve_coefficients,
    solve_mu,
    solve_psi_phi,
    solve_xi,
)
from .simulate import SimConfig, mean_flow, simulate_paths

__version__ = "0.1.0"

__all__ = [
    "GalerkinSpace",
    "MatrixExponentialSemigroup",
    "TabulatedSemigroup",
    "TimePath",
    "adjoint_apply",
    "operator_norm",
    "semigroup_apply",
    "convergence_sweep",
    "eval_nash_value",
    "eval_value",
    "feedback_control",
    "hamiltonian",
    "value_function",
    "ParamVector",
    "ProblemData",
    "ProblemValidationError",
    "make_problem",
    "master_params",
    "nash_params",
    "validate",
    "SolverConfig",
    "SolverError",
    "bound_constants",
    "check_apriori",
    "ode_oracle_xi",
    "solve_coefficients",
    "solve_mu",
    "solve_psi_phi",
    "solve_xi",
    "SimConfig",
    "mean_flow",
    "simulate_paths",
]
