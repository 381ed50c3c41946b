"""LQ mean-field problem data, standing-assumption checks and parameter vectors."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .hilbert import (
    GalerkinSpace,
    MatrixExponentialSemigroup,
    Semigroup,
    TimePath,
    check_growth_bound,
    sym,
)

__all__ = [
    "ProblemData",
    "DerivedOperators",
    "ParamVector",
    "ValidationReport",
    "ProblemValidationError",
    "make_problem",
    "validate",
    "derive_operators",
    "nash_params",
    "master_params",
]

_EIG_TOL = 1e-10


class ProblemValidationError(ValueError):
    """Raised when a problem violates a blocking assumption."""

    def __init__(self, report):
        self.report = report
        super().__init__("; ".join(report.fatal) or "invalid problem")


@dataclass(frozen=True, eq=False)
class ProblemData:
    """A full LQ mean-field instance in orthonormal coordinates of the state space.

    Time-dependent coefficients are :class:`TimePath` objects.  ``Z`` and
    ``Z_T`` only need to be symmetric; ``Q``, ``S``, ``Q_T`` and ``S_T`` must
    be positive semidefinite and ``R`` uniformly coercive.
    """

    state_space: GalerkinSpace
    control_space: GalerkinSpace
    noise_space: GalerkinSpace
    sg_A: Semigroup
    B: np.ndarray
    sigma: np.ndarray
    R: TimePath
    Q: TimePath
    S: TimePath
    Z: TimePath
    eta: TimePath
    zeta: TimePath
    lambda_run: TimePath
    Q_T: np.ndarray
    S_T: np.ndarray
    Z_T: np.ndarray
    eta_T: np.ndarray
    zeta_T: np.ndarray
    lambda_T: float
    horizon_T: float
    label: str = ""

    @property
    def dim(self):
        return self.state_space.dim

    @property
    def terminal_stack(self):
        return np.stack([self.Q_T, self.S_T, self.Z_T])

    def data_times(self):
        """Union of the time grids of all coefficient paths."""
        grids = [p.grid for p in (self.R, self.Q, self.S, self.Z, self.eta, self.zeta, self.lambda_run)]
        return np.unique(np.concatenate(grids + [np.array([0.0, self.horizon_T])]))


@dataclass(frozen=True, eq=False)
class DerivedOperators:
    calA: np.ndarray
    calB: TimePath


@dataclass(frozen=True)
class ParamVector:
    """Coupling parameters ``(a, b, c)`` of the generalized coefficient system."""

    a: float
    b: float
    c: float

    def __iter__(self):
        return iter((self.a, self.b, self.c))

    def __sub__(self, other):
        return ParamVector(self.a - other.a, self.b - other.b, self.c - other.c)

    @property
    def L(self):
        return 1.0 + abs(self.a) + abs(self.b) + abs(self.c)

    def admissible(self, eps):
        return 0.0 <= self.a <= eps and 1.0 - eps <= self.b <= 1.0 + eps and -eps <= self.c <= eps

    def check_admissible(self, eps):
        if not self.admissible(eps):
            warnings.warn(
                f"parameters {tuple(self)} lie outside the box "
                f"[0,{eps}]x[{1 - eps},{1 + eps}]x[{-eps},{eps}]; solving anyway",
                stacklevel=2,
            )
            return False
        return True


def master_params():
    return ParamVector(0.0, 1.0, 0.0)


def nash_params(N):
    if int(N) != N or N < 2:
        raise ValueError(f"N must be an integer >= 2, got {N}")
    k = N - 1.0
    return ParamVector(2.0 / k, (N - 2.0) / k, 1.0 / k)


def _as_path(value, shape, horizon, name):
    if isinstance(value, TimePath):
        path = value
    else:
        if value is None:
            value = np.zeros(shape)
        path = TimePath.constant(np.broadcast_to(np.asarray(value, dtype=float), shape), horizon)
    if path.item_shape != tuple(shape):
        raise ValueError(f"{name} has item shape {path.item_shape}, expected {tuple(shape)}")
    if abs(path.grid[0]) > 1e-12 or abs(path.grid[-1] - horizon) > 1e-12 * max(1.0, horizon):
        raise ValueError(f"{name} path must cover [0, {horizon}]")
    return path


def _as_matrix(value, shape, name):
    m = np.zeros(shape) if value is None else np.array(np.broadcast_to(np.asarray(value, dtype=float), shape))
    if m.shape != tuple(shape):
        raise ValueError(f"{name} has shape {m.shape}, expected {tuple(shape)}")
    return m


def make_problem(
    A=None,
    B=None,
    sigma=None,
    R=None,
    Q=None,
    S=None,
    Z=None,
    eta=None,
    zeta=None,
    lam=None,
    Q_T=None,
    S_T=None,
    Z_T=None,
    eta_T=None,
    zeta_T=None,
    lambda_T=0.0,
    T=1.0,
    dim=None,
    label="",
):
    """Build a :class:`ProblemData` from plain arrays.

    ``A`` is either a generator matrix or a :class:`Semigroup`.  Omitted
    coefficients are zero, except ``B`` (identity) and ``R`` (identity).
    Any time-dependent coefficient may be passed as a :class:`TimePath`.
    """
    if isinstance(A, Semigroup):
        sg = A
        n = sg.dim
    else:
        if A is None:
            if dim is None:
                for cand in (Q_T, S_T, Z_T, Q, B):
                    if cand is not None and not isinstance(cand, TimePath):
                        dim = np.atleast_2d(cand).shape[0]
                        break
                else:
                    dim = 1
            A = np.zeros((dim, dim))
        sg = MatrixExponentialSemigroup(np.atleast_2d(A))
        n = sg.dim
    if not sg.space.is_orthonormal:
        raise ValueError("the state space must be given in orthonormal coordinates")
    T = float(T)
    B = np.eye(n) if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] != n:
        raise ValueError(f"B has {B.shape[0]} rows, state dimension is {n}")
    m = B.shape[1]
    sigma = np.zeros((n, 1)) if sigma is None else np.atleast_2d(np.asarray(sigma, dtype=float))
    if sigma.shape[0] != n:
        raise ValueError(f"sigma has {sigma.shape[0]} rows, state dimension is {n}")
    k = sigma.shape[1]
    R = np.eye(m) if R is None else R
    return ProblemData(
        state_space=sg.space,
        control_space=GalerkinSpace(m),
        noise_space=GalerkinSpace(k),
        sg_A=sg,
        B=B,
        sigma=sigma,
        R=_as_path(R, (m, m), T, "R"),
        Q=_as_path(Q, (n, n), T, "Q"),
        S=_as_path(S, (n, n), T, "S"),
        Z=_as_path(Z, (n, n), T, "Z"),
        eta=_as_path(eta, (n,), T, "eta"),
        zeta=_as_path(zeta, (n,), T, "zeta"),
        lambda_run=_as_path(lam, (), T, "lambda"),
        Q_T=_as_matrix(Q_T, (n, n), "Q_T"),
        S_T=_as_matrix(S_T, (n, n), "S_T"),
        Z_T=_as_matrix(Z_T, (n, n), "Z_T"),
        eta_T=_as_matrix(eta_T, (n,), "eta_T"),
        zeta_T=_as_matrix(zeta_T, (n,), "zeta_T"),
        lambda_T=float(lambda_T),
        horizon_T=T,
        label=label,
    )


@dataclass
class ValidationReport:
    fatal: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    coercivity_R: float = 0.0
    coercivity_calB: float = 0.0
    delta_max: float = 0.0
    nash_coercivity_ok: bool | None = None

    @property
    def ok(self):
        return not self.fatal

    def as_dict(self):
        return {
            "ok": self.ok,
            "fatal": list(self.fatal),
            "warnings": list(self.warnings),
            "coercivity_R": self.coercivity_R,
            "coercivity_calB": self.coercivity_calB,
            "delta_max": self.delta_max,
            "nash_coercivity_ok": self.nash_coercivity_ok,
        }


def _min_eig(stack):
    stack = np.asarray(stack, dtype=float)
    return float(np.linalg.eigvalsh(sym(stack)).min())


def _is_sym(m):
    m = np.asarray(m, dtype=float)
    scale = max(1.0, float(np.abs(m).max()))
    return bool(np.abs(m - np.swapaxes(m, -1, -2)).max() <= 1e-10 * scale)


def validate(pd: ProblemData, check_nash_coercivity=False, delta=None, acknowledge_degenerate_control=False):
    """Check the standing assumptions on ``pd``.

    Returns a :class:`ValidationReport`; items in ``fatal`` block solving.
    With ``check_nash_coercivity`` the largest ``delta`` with ``Q(t), S(t) >=
    delta`` is reported and compared against ``delta`` (any positive value
    when ``delta`` is None).
    """
    rep = ValidationReport()
    n = pd.dim
    if not pd.state_space.is_orthonormal:
        rep.fatal.append("state space is not in orthonormal coordinates")
    if pd.B.shape != (n, pd.control_space.dim):
        rep.fatal.append(f"B has shape {pd.B.shape}")
    if pd.sigma.shape != (n, pd.noise_space.dim):
        rep.fatal.append(f"sigma has shape {pd.sigma.shape}")
    if pd.horizon_T <= 0:
        rep.fatal.append("horizon must be positive")
    if rep.fatal:
        return rep

    R = pd.R.values
    if not _is_sym(R):
        rep.fatal.append("R(t) is not symmetric")
    rep.coercivity_R = _min_eig(R)
    if rep.coercivity_R <= _EIG_TOL:
        rep.fatal.append(f"R(t) is not coercive (min eigenvalue {rep.coercivity_R:.3e})")

    for name, stack in (("Q(t)", pd.Q.values), ("S(t)", pd.S.values), ("Q_T", pd.Q_T), ("S_T", pd.S_T)):
        if not _is_sym(stack):
            rep.fatal.append(f"{name} is not symmetric")
        elif _min_eig(stack) < -_EIG_TOL * max(1.0, float(np.abs(stack).max())):
            rep.fatal.append(f"{name} is not positive semidefinite (min eigenvalue {_min_eig(stack):.3e})")
    for name, stack in (("Z(t)", pd.Z.values), ("Z_T", pd.Z_T)):
        if not _is_sym(stack):
            rep.fatal.append(f"{name} is not symmetric")

    if rep.coercivity_R > _EIG_TOL:
        calB = derive_operators(pd).calB
        rep.coercivity_calB = max(_min_eig(calB.values), 0.0)
        if rep.coercivity_calB <= _EIG_TOL:
            msg = f"B R^-1 B* is not coercive (constant {rep.coercivity_calB:.3e})"
            if acknowledge_degenerate_control:
                rep.warnings.append(msg + " [acknowledged]")
            else:
                rep.fatal.append(msg + "; pass acknowledge_degenerate_control to proceed")

    excess = check_growth_bound(pd.sg_A, pd.horizon_T)
    if excess > 0:
        rep.fatal.append(
            f"declared semigroup bound (M={pd.sg_A.bound_M}, omega={pd.sg_A.bound_omega}) "
            f"is exceeded by a relative {excess:.3e}"
        )

    qmin = min(_min_eig(pd.Q.values), _min_eig(pd.S.values))
    rep.delta_max = max(qmin, 0.0)
    if check_nash_coercivity:
        need = _EIG_TOL if delta is None else float(delta)
        rep.nash_coercivity_ok = rep.delta_max >= need and rep.delta_max > 0
        if not rep.nash_coercivity_ok:
            rep.warnings.append(f"Q and S are not uniformly coercive: largest delta is {rep.delta_max:.3e}")
    return rep


def derive_operators(pd: ProblemData):
    """Return ``calA = sigma sigma* / 2`` and ``calB(t) = B R(t)^-1 B*`` on the grid of ``R``."""
    calA = sym(0.5 * pd.sigma @ pd.sigma.T)
    vals = []
    for r in pd.R.values:
        try:
            fac = sla.cho_factor(sym(r))
        except np.linalg.LinAlgError as exc:
            raise ProblemValidationError(ValidationReport(fatal=["R(t) is numerically singular"])) from exc
        vals.append(sym(pd.B @ sla.cho_solve(fac, pd.B.T)))
    return DerivedOperators(calA, TimePath(pd.R.grid, np.array(vals), pd.R.interpolation))


def calB_at(pd: ProblemData, times):
    """``B R(t)^-1 B*`` evaluated at arbitrary times (``R`` interpolated first)."""
    Rs = pd.R.sample(times)
    out = np.empty((len(Rs), pd.dim, pd.dim))
    for k, r in enumerate(Rs):
        out[k] = sym(pd.B @ np.linalg.solve(sym(r), pd.B.T))
    return out
