"""Value functions of the Master equation and of the N-player Nash system.

Both are quadratic in the state and in the population mean,

    U(t, x, y) = <P x, x>/2 + <Upsilon y, x> + <Gamma y, y>/2 + <psi, x> + <phi, y> + mu,

with coefficient paths from :mod:`lqmfg.riccati`.  Player ``i`` of the
N-player game sees ``y = mean of the other players' states``.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .hilbert import TimePath
from .problem import ParamVector, ProblemData, calB_at, master_params, nash_params
from .riccati import CoefficientSolution, SolverConfig, SolverError, solve_coefficients, stack_norms

__all__ = [
    "ValueFunction",
    "MeanState",
    "SweepRow",
    "SweepReport",
    "value_function",
    "eval_value",
    "eval_nash_value",
    "gradient_x",
    "hamiltonian",
    "feedback_control",
    "running_cost_rate",
    "convergence_sweep",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MeanState:
    ybar: np.ndarray


@dataclass(frozen=True, eq=False)
class ValueFunction:
    """Assembled value function; ``N`` is None for the Master equation."""

    solution: CoefficientSolution
    pd: ProblemData
    N: int | None = None
    _paths: dict = field(init=False, repr=False)

    def __post_init__(self):
        sol = self.solution
        g = sol.grid
        paths = {
            "P": TimePath(g, sol.xi.P),
            "Upsilon": TimePath(g, sol.xi.Upsilon),
            "Gamma": TimePath(g, sol.xi.Gamma),
            "psi": TimePath(g, sol.psiphi.psi),
            "phi": TimePath(g, sol.psiphi.phi),
            "mu": TimePath(g, sol.mu.mu),
        }
        object.__setattr__(self, "_paths", paths)

    @property
    def kind(self):
        return "master" if self.N is None else f"nash({self.N})"

    @property
    def horizon(self):
        return float(self.solution.grid[-1])

    def coeff(self, name, t):
        """Coefficient ``name`` at time ``t`` (linear interpolation; grid points are exact)."""
        return self._paths[name](t)

    def sample(self, name, times):
        """Coefficient ``name`` on an array of times."""
        return self._paths[name].sample(times)


def value_function(pd: ProblemData, solution: CoefficientSolution, N=None):
    return ValueFunction(solution, pd, N)


def _vec(v, n, what):
    v = np.asarray(v, dtype=float)
    if isinstance(v, MeanState):
        v = v.ybar
    if v.shape != (n,):
        raise ValueError(f"{what} has shape {v.shape}, expected ({n},)")
    return v


def eval_value(vf: ValueFunction, t, x, ybar):
    """Evaluate ``U(t, x, ybar)``."""
    n = vf.pd.dim
    if isinstance(ybar, MeanState):
        ybar = ybar.ybar
    x = _vec(x, n, "x")
    y = _vec(ybar, n, "ybar")
    if not 0.0 <= t <= vf.horizon:
        raise ValueError(f"t={t} outside [0, {vf.horizon}]")
    c = vf.coeff
    return float(
        0.5 * x @ c("P", t) @ x
        + y @ c("Upsilon", t).T @ x
        + 0.5 * y @ c("Gamma", t) @ y
        + c("psi", t) @ x
        + c("phi", t) @ y
        + c("mu", t)
    )


def eval_nash_value(vf: ValueFunction, t, i, xs):
    """Value of player ``i`` given all players' states ``xs``."""
    if vf.N is None:
        raise ValueError("eval_nash_value needs a Nash value function")
    xs = np.asarray(xs, dtype=float)
    N = vf.N
    if xs.shape[0] != N:
        raise ValueError(f"expected {N} states, got {xs.shape[0]}")
    if not 0 <= i < N:
        raise IndexError(f"player index {i} out of range for N={N}")
    others = np.delete(xs, i, axis=0)
    return eval_value(vf, t, xs[i], others.mean(axis=0))


def gradient_x(vf: ValueFunction, t, x, ybar):
    """``D_x U = P x + Upsilon y + psi``."""
    return vf.coeff("P", t) @ x + vf.coeff("Upsilon", t) @ ybar + vf.coeff("psi", t)


def hamiltonian(pd: ProblemData, t, x, p):
    """``-<A x, p> + <calB(t) p, p>/2``; needs the generator as a matrix."""
    A = pd.sg_A.generator_matrix()
    if A is None:
        raise ValueError(f"Hamiltonian needs a generator matrix; semigroup kind is {pd.sg_A.kind!r}")
    x = _vec(x, pd.dim, "x")
    p = _vec(p, pd.dim, "p")
    Bt = calB_at(pd, [t])[0]
    return float(-(A @ x) @ p + 0.5 * p @ Bt @ p)


def feedback_control(vf: ValueFunction, pd: ProblemData, t, x, ybar):
    """Optimal control ``-R(t)^-1 B* D_x U(t, x, ybar)``."""
    if isinstance(ybar, MeanState):
        ybar = ybar.ybar
    x = _vec(x, pd.dim, "x")
    y = _vec(ybar, pd.dim, "ybar")
    g = gradient_x(vf, t, x, y)
    return -np.linalg.solve(pd.R(t), pd.B.T @ g)


def running_cost_rate(pd: ProblemData, t, x, p, alpha):
    """``<A x + B alpha, p> + <R alpha, alpha>/2``, minimised over ``alpha`` by the feedback."""
    A = pd.sg_A.generator_matrix()
    if A is None:
        raise ValueError("running_cost_rate needs a generator matrix")
    return float((A @ x + pd.B @ alpha) @ p + 0.5 * alpha @ pd.R(t) @ alpha)


# ---------------------------------------------------------------------------
# Nash -> Master sweep


@dataclass
class SweepRow:
    N: int
    params: tuple
    ok: bool
    d_xi: float = math.nan
    d_P: float = math.nan
    d_Upsilon: float = math.nan
    d_Gamma: float = math.nan
    d_psiphi: float = math.nan
    d_mu: float = math.nan
    d_value: float = math.nan
    admissible: bool = True
    error: str = ""


@dataclass
class SweepReport:
    rows: list
    slope: float
    intercept: float
    master_report: object = None
    reports: dict = field(default_factory=dict)

    def gaps(self):
        return np.array([r.d_xi for r in self.rows])


def _sup_op(a, b):
    return float(np.linalg.norm(a - b, 2, axis=(1, 2)).max())


def _value_probes(pd, n_probe=8, seed=0):
    rng = np.random.default_rng(seed)
    T = pd.horizon_T
    ts = np.linspace(0.0, T, n_probe)
    return [(t, rng.standard_normal(pd.dim), rng.standard_normal(pd.dim)) for t in ts]


def convergence_sweep(pd: ProblemData, Ns, cfg: SolverConfig = SolverConfig(), threads=None):
    """Distance between Nash and Master coefficient paths as N grows.

    ``d(N) = sup_t ||Xi^N(t) - Xi(t)||``.  A failed solve is recorded in its
    row and the sweep carries on.  The log-log slope is fitted over the
    successful rows with positive gaps (NaN when fewer than two).
    """
    master = solve_coefficients(pd, master_params(), cfg)
    vm = value_function(pd, master)
    probes = _value_probes(pd)

    def one(N):
        params = nash_params(N)
        row = SweepRow(N=int(N), params=tuple(params), ok=False)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                sol = solve_coefficients(pd, params, cfg)
        except SolverError as exc:
            row.error = str(exc)
            return row, None
        row.ok = True
        row.admissible = sol.report.admissible
        xi, xm = sol.xi, master.xi
        row.d_xi = float(stack_norms(xi.stack - xm.stack).max())
        row.d_P = _sup_op(xi.P, xm.P)
        row.d_Upsilon = _sup_op(xi.Upsilon, xm.Upsilon)
        row.d_Gamma = _sup_op(xi.Gamma, xm.Gamma)
        dpp = np.stack([sol.psiphi.psi - master.psiphi.psi, sol.psiphi.phi - master.psiphi.phi], axis=1)
        row.d_psiphi = float(stack_norms(dpp).max())
        row.d_mu = float(np.abs(sol.mu.mu - master.mu.mu).max())
        vn = value_function(pd, sol, N)
        row.d_value = max(abs(eval_value(vn, t, x, y) - eval_value(vm, t, x, y)) for t, x, y in probes)
        return row, sol.report

    Ns = [int(N) for N in Ns]
    if threads and threads > 1 and len(Ns) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, Ns))
    else:
        results = [one(N) for N in Ns]
    rows = [r for r, _ in results]
    reports = {r.N: rep for r, rep in results if rep is not None}
    good = [r for r in rows if r.ok and r.d_xi > 0]
    if len(good) >= 2:
        slope, intercept = np.polyfit(np.log([r.N for r in good]), np.log([r.d_xi for r in good]), 1)
    else:
        slope = intercept = math.nan
    return SweepReport(rows, float(slope), float(intercept), master.report, reports)
