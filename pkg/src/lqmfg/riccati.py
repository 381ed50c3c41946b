"""Mild solutions of the generalized coefficient system.

The Riccati triple ``Xi = (P, Upsilon, Gamma)`` is computed as a fixed point
of the variation-of-constants map

    Xi(t) = E*(T'-t) Xi(T') E(T'-t) + int_t^T' E*(s-t) [V(s) - B_L(Xi(s))] E(s-t) ds

on successive intervals ``[t0, T']`` glued backward from ``T``; ``E`` is the
state semigroup.  Integrals use the composite trapezoidal rule on a uniform
grid.  The linear pair ``(psi, phi)`` is handled by the same machinery and
``mu`` by direct quadrature.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .hilbert import sym
from .problem import (
    ParamVector,
    ProblemData,
    ProblemValidationError,
    calB_at,
    derive_operators,
    validate,
)

__all__ = [
    "SolverConfig",
    "XiPath",
    "PsiPhiPath",
    "MuPath",
    "IntervalRecord",
    "SolveReport",
    "BoundConstants",
    "BoundReport",
    "CoefficientSolution",
    "SolverError",
    "bound_constants",
    "riccati_forcing",
    "solve_xi",
    "solve_psi_phi",
    "solve_mu",
    "solve_coefficients",
    "check_apriori",
    "ode_oracle_xi",
    "stack_norms",
]

log = logging.getLogger(__name__)

_TINY = 1e-300


class SolverError(RuntimeError):
    """Picard iteration failed to contract; ``interval`` is ``(t_start, t_end)``."""

    def __init__(self, msg, interval=None, report=None):
        super().__init__(msg)
        self.interval = interval
        self.report = report


@dataclass(frozen=True)
class SolverConfig:
    grid: int = 400
    tol: float = 1e-10
    max_iter: int = 200
    faithful: bool = False
    strict: bool = False
    epsilon: float = 0.5
    initial_guess: str = "terminal"
    acknowledge_degenerate_control: bool = False
    bound_rtol: float = 1e-8
    eig_tol: float = 1e-8


@dataclass(frozen=True, eq=False)
class XiPath:
    grid: np.ndarray
    P: np.ndarray
    Upsilon: np.ndarray
    Gamma: np.ndarray

    @property
    def stack(self):
        return np.stack([self.P, self.Upsilon, self.Gamma], axis=1)

    def sup_norm(self):
        return float(stack_norms(self.stack).max())


@dataclass(frozen=True, eq=False)
class PsiPhiPath:
    grid: np.ndarray
    psi: np.ndarray
    phi: np.ndarray


@dataclass(frozen=True, eq=False)
class MuPath:
    grid: np.ndarray
    mu: np.ndarray


@dataclass
class IntervalRecord:
    t_start: float
    t_end: float
    picard_iterations: int
    final_residual: float
    max_contraction_ratio: float
    max_iterate_norm: float
    tau: float | None = None
    radius: float | None = None
    within_radius: bool | None = None


@dataclass
class BoundConstants:
    M_T: float
    L_a: float
    norm_V: float
    norm_V_T: float
    norm_calB: float
    r: float
    tau: float
    C_P: float
    C_Upsilon: float
    C_Gamma: float
    C_Xi: float
    C_Gamma_printed: float = 0.0

    def step_length(self, terminal_norm):
        """Interval length for a given terminal norm (``L_a <= 5`` folded into the factor 60)."""
        k = 12.0 * max(5.0, self.L_a)
        return 1.0 / (1.0 + k * self.M_T**4 * (terminal_norm + self.norm_V) * self.norm_calB)

    def radius(self, terminal_norm):
        return 2.0 * self.M_T**2 * (terminal_norm + self.norm_V)


@dataclass
class BoundReport:
    constants: BoundConstants
    sup_P: float
    sup_Upsilon: float
    sup_Gamma: float
    min_eig_P: float
    min_eig_Upsilon: float
    gate_P: bool
    gate_Upsilon: bool
    gate_Gamma: bool
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


@dataclass
class SolveReport:
    params: tuple
    mode: str
    grid: int
    intervals: list = field(default_factory=list)
    constants: BoundConstants | None = None
    bounds: BoundReport | None = None
    bound_violations: list = field(default_factory=list)
    mild_residual: float = 0.0
    symmetry_defect: float = 0.0
    discarded_skew_forcing: float = 0.0
    admissible: bool = True
    validation: dict = field(default_factory=dict)
    psi_phi_intervals: list = field(default_factory=list)

    def as_dict(self):
        d = asdict(self)
        return d


@dataclass(frozen=True, eq=False)
class CoefficientSolution:
    params: ParamVector
    xi: XiPath
    psiphi: PsiPhiPath
    mu: MuPath
    report: SolveReport

    @property
    def grid(self):
        return self.xi.grid


# ---------------------------------------------------------------------------
# norms and constants


def stack_norms(stack):
    """Per-node norm of a stacked path.

    ``stack`` is ``(K, 3, n, n)`` (operator triples, Euclidean norm over the
    spectral norms) or ``(K, 2, n)`` (vector pairs, Euclidean norm).
    """
    stack = np.asarray(stack)
    if stack.ndim == 4:
        if stack.shape[-1] == 1:
            comp = np.abs(stack[..., 0, 0])
        else:
            comp = np.abs(np.linalg.eigvalsh(sym(stack))).max(axis=-1)
        return np.sqrt((comp**2).sum(axis=1))
    return np.sqrt((stack**2).sum(axis=(1, 2)))


def _opnorm_sup(stack):
    stack = np.asarray(stack, dtype=float)
    if stack.ndim == 2:
        stack = stack[None]
    return float(np.linalg.norm(stack, 2, axis=(-2, -1)).max())


def _exp(x):
    # the Gronwall factors overflow quickly; an infinite bound is still a bound
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _times(prefactor, factor):
    # zero data give a zero bound whatever the Gronwall factor
    if prefactor == 0:
        return 0.0
    if math.isinf(factor) or math.isinf(prefactor):
        return math.inf
    with np.errstate(over="ignore"):
        return float(np.multiply(prefactor, factor, dtype=float))


def bound_constants(pd: ProblemData, params: ParamVector, times=None):
    """Constants of the small-time fixed point and of the a priori estimate.

    Data norms are taken over the union of the data grids (and ``times`` when
    given).  Piecewise-linear data attain their sup norms there.
    """
    T = pd.horizon_T
    ts = pd.data_times() if times is None else np.union1d(pd.data_times(), times)
    M_T = pd.sg_A.bound_M * math.exp(pd.sg_A.bound_omega * T)
    L_a = params.L
    Q = pd.Q.sample(ts)
    S = pd.S.sample(ts)
    Z = pd.Z.sample(ts)
    nQ = np.linalg.norm(Q, 2, axis=(1, 2))
    nS = np.linalg.norm(S, 2, axis=(1, 2))
    nZ = np.linalg.norm(Z, 2, axis=(1, 2))
    norm_V = float(np.sqrt(nQ**2 + nS**2 + nZ**2).max())
    nQT, nST, nZT = (_opnorm_sup(m) for m in (pd.Q_T, pd.S_T, pd.Z_T))
    norm_V_T = float(math.sqrt(nQT**2 + nST**2 + nZT**2))
    norm_calB = _opnorm_sup(calB_at(pd, ts))
    r = 2.0 * M_T**2 * (norm_V_T + norm_V)
    tau = 1.0 / (1.0 + 12.0 * M_T**4 * (norm_V_T + norm_V) * L_a * norm_calB)
    C_P = M_T**2 * (nQT + T * nQ.max())
    C_U = _times(M_T**2 * (nST + T * nS.max()), _exp(3.0 * T * M_T**2 * C_P * norm_calB))
    # Gronwall on [0, T] carries a factor T in the exponent; max(T, 1) keeps the
    # printed constant for T <= 1 and stays a valid bound for longer horizons
    growth = _exp(2.0 * max(T, 1.0) * M_T**2 * norm_calB * (C_P + 2.0 * C_U))
    C_G_printed = _times(M_T**2 * (nZT + T * nZ.max()), growth)
    # Gamma is not sign-definite, so the -Upsilon B Upsilon source cannot be
    # dropped when bounding its norm
    C_G = _times(M_T**2 * (nZT + T * nZ.max() + T * _times(C_U, C_U) * norm_calB), growth)
    return BoundConstants(
        M_T=M_T,
        L_a=L_a,
        norm_V=norm_V,
        norm_V_T=norm_V_T,
        norm_calB=norm_calB,
        r=r,
        tau=tau,
        C_P=C_P,
        C_Upsilon=C_U,
        C_Gamma=C_G,
        C_Xi=max(C_P, C_U, C_G),
        C_Gamma_printed=C_G_printed,
    )


# ---------------------------------------------------------------------------
# the nonlinearity


def riccati_forcing(stack, V, calB, params: ParamVector):
    """``V - B_L(Xi)`` at every node, symmetrized.

    ``stack`` and ``V`` are ``(K, 3, n, n)``; ``calB`` is ``(K, n, n)``.
    Returns the forcing and the norm of the skew part that symmetrization
    removed (non-zero only through the ``c`` term).
    """
    a, b, c = params
    P, U, G = stack[:, 0], stack[:, 1], stack[:, 2]
    BP, BU, BG = calB @ P, calB @ U, calB @ G
    PBP = P @ BP
    UBU = U @ BU
    UBP = U @ BP
    UBG = U @ BG
    GBP = G @ BP
    GBU = G @ BU
    PBU = np.swapaxes(UBP, -1, -2)
    PBG = np.swapaxes(GBP, -1, -2)
    out = np.empty_like(stack)
    out[:, 0] = V[:, 0] - (PBP + a * UBU)
    out[:, 1] = V[:, 1] - (UBP + PBU + b * UBU + c * sym(UBG))
    out[:, 2] = V[:, 2] - (GBP + b * GBU + PBG + b * np.swapaxes(GBU, -1, -2) + UBU)
    out = sym(out)
    skew = 0.0
    if c != 0.0:
        sk = 0.5 * (UBG - np.swapaxes(UBG, -1, -2))
        skew = abs(c) * float(np.abs(sk).max()) if sk.size else 0.0
    return out, skew


# ---------------------------------------------------------------------------
# semigroup propagation on the grid


class _Propagator:
    """Applies ``E*(m h) X E(m h)`` (matrices) or ``E*(m h) x`` (vectors).

    When the tabulated semigroup satisfies ``E(m h) = E(h)^m`` (always for a
    matrix exponential) the quadrature is evaluated by a backward recursion
    in O(K) work; otherwise the full double sum is used.
    """

    def __init__(self, sg, h, n_steps):
        self.h = h
        self.E1 = np.asarray(sg.matrix(h), dtype=float)
        self.table = None
        if sg.kind == "matrix-exponential":
            self.exact = True
        else:
            table = np.empty((n_steps + 1, sg.dim, sg.dim))
            table[0] = np.eye(sg.dim)
            for m in range(1, n_steps + 1):
                table[m] = sg.matrix(m * h)
            scale = max(1.0, float(np.abs(table).max()))
            defect = max(
                (float(np.abs(table[m] - table[m - 1] @ self.E1).max()) for m in range(2, n_steps + 1)),
                default=0.0,
            )
            self.exact = defect <= 1e-12 * scale
            self.table = table
        self.E1T = self.E1.T.copy()

    _matrix_mode = True

    def step(self, X):
        if self._matrix_mode:
            return self.E1T @ X @ self.E1
        return X @ self.E1

    def sweep(self, X_end, N, matrix_mode):
        """Discrete mild map on one interval; ``N`` holds the forcing at local nodes."""
        self._matrix_mode = matrix_mode
        L = N.shape[0] - 1
        h = self.h
        Y = np.empty_like(N)
        Y[L] = X_end
        if L == 0:
            return Y
        if self.exact:
            half = 0.5 * h
            for k in range(L - 1, -1, -1):
                Y[k] = self.step(Y[k + 1] + half * N[k + 1]) + half * N[k]
            return Y
        E = self.table
        w = np.ones(L + 1)
        for k in range(L - 1, -1, -1):
            ms = np.arange(0, L - k + 1)
            Ek = E[ms]
            ww = w[: L - k + 1].copy()
            ww[0] = ww[-1] = 0.5
            src = N[k:]
            if matrix_mode:
                terms = np.einsum("mji,m...jk,mkl->m...il", Ek, src, Ek)
                term_end = E[L - k].T @ X_end @ E[L - k]
            else:
                terms = np.einsum("mji,m...j->m...i", Ek, src)
                term_end = X_end @ E[L - k]
            Y[k] = term_end + h * np.tensordot(ww, terms, axes=(0, 0))
        return Y


@dataclass
class _PicardResult:
    path: np.ndarray
    converged: bool
    iterations: int
    residual: float
    max_ratio: float
    max_norm: float
    reason: str = ""


def _picard(prop, X_end, forcing, init, tol, max_iter, matrix_mode, symmetrize):
    Y = init.copy()
    changes = []
    max_norm = float(stack_norms(Y).max())
    blowup = 1e8 * (1.0 + max_norm)
    rising = 0
    for it in range(1, max_iter + 1):
        Ynew = prop.sweep(X_end, forcing(Y), matrix_mode)
        if symmetrize:
            Ynew = sym(Ynew)
        if not np.all(np.isfinite(Ynew)):
            return _PicardResult(Y, False, it, math.inf, math.inf, math.inf, "non-finite iterate")
        norms = stack_norms(Ynew)
        scale = float(norms.max())
        max_norm = max(max_norm, scale)
        change = float(stack_norms(Ynew - Y).max())
        rel = change / max(scale, _TINY)
        Y = Ynew
        if changes and change > changes[-1]:
            rising += 1
        else:
            rising = 0
        changes.append(change)
        if rel <= tol:
            return _PicardResult(Y, True, it, rel, _max_ratio(changes, scale), max_norm)
        if scale > blowup:
            return _PicardResult(Y, False, it, rel, _max_ratio(changes, scale), max_norm, "iterates blow up")
        if rising >= 8:
            return _PicardResult(Y, False, it, rel, _max_ratio(changes, scale), max_norm, "residual keeps growing")
    return _PicardResult(Y, False, max_iter, rel, _max_ratio(changes, scale), max_norm, "iteration limit")


def _max_ratio(changes, scale):
    # successive-change ratios, ignoring changes already at round-off level
    floor = 1e-13 * max(scale, _TINY)
    ratios = [c1 / c0 for c0, c1 in zip(changes, changes[1:]) if c0 > floor and c1 > floor]
    return max(ratios) if ratios else 0.0


def _grid(pd, cfg):
    M = int(cfg.grid)
    if M < 1:
        raise ValueError("grid must have at least one step")
    grid = np.linspace(0.0, pd.horizon_T, M + 1)
    return grid, pd.horizon_T / M


def _checked(pd, params, cfg):
    rep = validate(pd, acknowledge_degenerate_control=cfg.acknowledge_degenerate_control)
    if not rep.ok:
        raise ProblemValidationError(rep)
    return rep


def _initial(X_end, L, mode):
    if mode == "zero":
        return np.zeros((L + 1,) + X_end.shape)
    if mode == "terminal":
        return np.repeat(X_end[None], L + 1, axis=0)
    raise ValueError(f"unknown initial guess {mode!r}")


def _march(prop, grid, X_T, forcing_at, cfg, matrix_mode, symmetrize, schedule=None, radius_at=None):
    """Glue Picard solutions on intervals from ``T`` backward to ``0``.

    ``forcing_at(lo, hi)`` returns the forcing callable for nodes ``lo..hi``.
    ``schedule(terminal_norm)`` gives the faithful interval length; when it
    is None lengths are chosen adaptively by halving on failure.
    """
    h = grid[1] - grid[0]
    M = grid.size - 1
    path = np.empty((M + 1,) + X_T.shape)
    path[M] = X_T
    records = []
    end = M
    try_len = M
    first = True
    warned = False
    while end > 0:
        X_end = path[end]
        end_norm = float(stack_norms(X_end[None])[0])
        if schedule is not None:
            tau = schedule(end_norm, first)
            L = max(1, min(end, int(math.floor(tau / h * (1 + 1e-12)))))
            if tau < h and not warned:
                log.warning("faithful interval %.3e is shorter than the grid step %.3e", tau, h)
                warned = True
        else:
            tau = None
            L = min(end, try_len)
        lo = end - L
        res = _picard(
            prop,
            X_end,
            forcing_at(lo, end),
            _initial(X_end, L, cfg.initial_guess),
            cfg.tol,
            cfg.max_iter,
            matrix_mode,
            symmetrize,
        )
        if not res.converged:
            if schedule is None and L > 1:
                try_len = max(1, L // 2)
                log.debug("interval [%g, %g] failed (%s); halving", grid[lo], grid[end], res.reason)
                continue
            raise SolverError(
                f"Picard iteration did not contract on [{grid[lo]:.6g}, {grid[end]:.6g}]: {res.reason}",
                interval=(float(grid[lo]), float(grid[end])),
            )
        rec = IntervalRecord(
            t_start=float(grid[lo]),
            t_end=float(grid[end]),
            picard_iterations=res.iterations,
            final_residual=res.residual,
            max_contraction_ratio=res.max_ratio,
            max_iterate_norm=res.max_norm,
        )
        if schedule is not None:
            rec.tau = tau
            if radius_at is not None:
                rec.radius = radius_at(end_norm, first)
                rec.within_radius = bool(res.max_norm <= rec.radius * (1 + 1e-12))
        records.append(rec)
        path[lo:end] = res.path[:-1]
        end = lo
        try_len = min(M, 2 * L) if schedule is None else try_len
        first = False
    return path, records


# ---------------------------------------------------------------------------
# public solvers


def _node_data(pd, grid):
    V = np.stack([pd.Q.sample(grid), pd.S.sample(grid), pd.Z.sample(grid)], axis=1)
    return V, calB_at(pd, grid)


def solve_xi(pd: ProblemData, params: ParamVector, cfg: SolverConfig = SolverConfig()):
    """Solve for ``(P, Upsilon, Gamma)`` on ``[0, T]``.

    Returns ``(XiPath, SolveReport)``.  Raises :class:`SolverError` when the
    fixed-point iteration cannot be made to contract.
    """
    vrep = _checked(pd, params, cfg)
    admissible = params.check_admissible(cfg.epsilon)
    grid, h = _grid(pd, cfg)
    M = grid.size - 1
    V, calB = _node_data(pd, grid)
    consts = bound_constants(pd, params, grid)
    prop = _Propagator(pd.sg_A, h, M)
    skew = [0.0]

    def forcing_at(lo, hi):
        Vl, Bl = V[lo : hi + 1], calB[lo : hi + 1]

        def f(stack):
            out, sk = riccati_forcing(stack, Vl, Bl, params)
            skew[0] = max(skew[0], sk)
            return out

        return f

    schedule = radius_at = None
    if cfg.faithful:
        # first interval from the terminal datum, later ones from the a priori bound
        def schedule(end_norm, first):
            return consts.step_length(consts.norm_V_T if first else max(consts.C_Xi, end_norm))

        def radius_at(end_norm, first):
            return consts.radius(consts.norm_V_T if first else max(consts.C_Xi, end_norm))

    X_T = sym(pd.terminal_stack)
    path, records = _march(prop, grid, X_T, forcing_at, cfg, True, True, schedule, radius_at)
    path[M] = X_T

    # residual of the discrete mild map over the whole grid
    glob = sym(prop.sweep(X_T, forcing_at(0, M)(path), True))
    resid = float(stack_norms(glob - path).max() / max(float(stack_norms(path).max()), _TINY))
    sym_defect = float(np.abs(path - np.swapaxes(path, -1, -2)).max())
    xi = XiPath(grid, path[:, 0].copy(), path[:, 1].copy(), path[:, 2].copy())
    bounds = check_apriori(pd, params, xi, consts, cfg)
    report = SolveReport(
        params=tuple(params),
        mode="faithful" if cfg.faithful else "adaptive",
        grid=M,
        intervals=records,
        constants=consts,
        bounds=bounds,
        bound_violations=list(bounds.violations),
        mild_residual=resid,
        symmetry_defect=sym_defect,
        discarded_skew_forcing=skew[0],
        admissible=admissible,
        validation=vrep.as_dict(),
    )
    if bounds.violations:
        msg = "a priori bound violated: " + "; ".join(bounds.violations)
        if cfg.strict:
            raise SolverError(msg, report=report)
        log.warning(msg)
    return xi, report


def solve_psi_phi(pd: ProblemData, params: ParamVector, xi: XiPath, cfg: SolverConfig = SolverConfig()):
    """Solve the linear backward pair ``(psi, phi)`` given the Riccati triple."""
    grid, h = _grid(pd, cfg)
    if xi.grid.shape != grid.shape or not np.allclose(xi.grid, grid, rtol=0, atol=1e-12 * max(1.0, grid[-1])):
        raise ValueError("xi is not on the solver grid")
    M = grid.size - 1
    a, b, c = params
    calB = calB_at(pd, grid)
    eta, zeta = pd.eta.sample(grid), pd.zeta.sample(grid)
    K_psi = (xi.P + xi.Upsilon) @ calB
    K_cross = c * xi.Upsilon @ calB
    K_phi = (xi.P + b * xi.Upsilon) @ calB
    K_mix = (xi.Upsilon + xi.Gamma) @ calB
    prop = _Propagator(pd.sg_A, h, M)

    def forcing_at(lo, hi):
        sl = slice(lo, hi + 1)
        kp, kc, kf, km = K_psi[sl], K_cross[sl], K_phi[sl], K_mix[sl]
        e, z = eta[sl], zeta[sl]

        def f(v):
            psi, phi = v[:, 0], v[:, 1]
            out = np.empty_like(v)
            out[:, 0] = e - np.einsum("kij,kj->ki", kp, psi) - np.einsum("kij,kj->ki", kc, phi)
            out[:, 1] = z - np.einsum("kij,kj->ki", kf, phi) - np.einsum("kij,kj->ki", km, psi)
            return out

        return f

    X_T = np.stack([pd.eta_T, pd.zeta_T]).astype(float)
    path, records = _march(prop, grid, X_T, forcing_at, cfg, False, False)
    path[M] = X_T
    pp = PsiPhiPath(grid, path[:, 0].copy(), path[:, 1].copy())
    return pp, records


def solve_mu(pd: ProblemData, params: ParamVector, xi: XiPath, pp: PsiPhiPath):
    """``mu(t) = lambda_T + int_t^T [lambda + tr(calA(P + c Gamma)) - <calB psi, psi + 2 phi>/2] ds``."""
    grid = xi.grid
    if pp.grid.shape != grid.shape or not np.array_equal(pp.grid, grid):
        raise ValueError("psi/phi path and xi path are on different grids")
    c = params.c
    calA = derive_operators(pd).calA
    calB = calB_at(pd, grid)
    lam = pd.lambda_run.sample(grid)
    tr = np.einsum("ij,kji->k", calA, xi.P + c * xi.Gamma)
    Bpsi = np.einsum("kij,kj->ki", calB, pp.psi)
    quad = np.einsum("ki,ki->k", Bpsi, pp.psi + 2.0 * pp.phi)
    f = lam + tr - 0.5 * quad
    dt = np.diff(grid)
    seg = 0.5 * dt * (f[:-1] + f[1:])
    tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    mu = pd.lambda_T + tail
    mu[-1] = pd.lambda_T
    return MuPath(grid, mu)


def solve_coefficients(pd: ProblemData, params: ParamVector, cfg: SolverConfig = SolverConfig()):
    """Solve the whole coefficient system and return a :class:`CoefficientSolution`."""
    xi, report = solve_xi(pd, params, cfg)
    pp, pp_records = solve_psi_phi(pd, params, xi, cfg)
    report.psi_phi_intervals = pp_records
    mu = solve_mu(pd, params, xi, pp)
    return CoefficientSolution(params, xi, pp, mu, report)


def check_apriori(pd: ProblemData, params: ParamVector, xi: XiPath, consts: BoundConstants | None = None,
                  cfg: SolverConfig = SolverConfig()):
    """Compare the solved triple with the a priori constants.

    A bound is only enforced when the positivity chain behind it holds: for
    ``P`` the modified running cost ``Q - a Upsilon B Upsilon`` must be PSD
    along the path and ``a >= 0``; for ``Upsilon`` additionally
    ``S - c sym(Upsilon B Gamma)`` PSD, ``b >= 0`` and ``|c| sup|Gamma| <=
    C_P``; for ``Gamma`` additionally ``|b| <= 2``.
    """
    consts = consts or bound_constants(pd, params, xi.grid)
    a, b, c = params
    grid = xi.grid
    calB = calB_at(pd, grid)
    Q, S = pd.Q.sample(grid), pd.S.sample(grid)
    tol = cfg.eig_tol

    def min_eig(stack):
        return float(np.linalg.eigvalsh(sym(stack)).min())

    def sup(stack):
        return float(np.linalg.norm(stack, 2, axis=(1, 2)).max())

    U, G = xi.Upsilon, xi.Gamma
    Qa = Q - a * U @ calB @ U
    Sa = S - c * sym(U @ calB @ G)
    gate_P = a >= 0 and min_eig(Qa) >= -tol and min_eig(pd.Q_T[None]) >= -tol
    gate_U = (
        gate_P
        and b >= 0
        and min_eig(Sa) >= -tol
        and min_eig(pd.S_T[None]) >= -tol
        and abs(c) * sup(G) <= consts.C_P * (1 + cfg.bound_rtol) + tol
    )
    gate_G = gate_U and abs(b) <= 2.0
    rep = BoundReport(
        constants=consts,
        sup_P=sup(xi.P),
        sup_Upsilon=sup(U),
        sup_Gamma=sup(G),
        min_eig_P=min_eig(xi.P),
        min_eig_Upsilon=min_eig(U),
        gate_P=bool(gate_P),
        gate_Upsilon=bool(gate_U),
        gate_Gamma=bool(gate_G),
    )

    def exceeds(val, bound):
        return val > bound * (1 + cfg.bound_rtol) + 1e-12

    if gate_P:
        if rep.min_eig_P < -tol:
            rep.violations.append(f"P(t) not PSD (min eigenvalue {rep.min_eig_P:.3e})")
        if exceeds(rep.sup_P, consts.C_P):
            rep.violations.append(f"sup|P| = {rep.sup_P:.6g} > C_P = {consts.C_P:.6g}")
    if gate_U:
        if rep.min_eig_Upsilon < -tol:
            rep.violations.append(f"Upsilon(t) not PSD (min eigenvalue {rep.min_eig_Upsilon:.3e})")
        if exceeds(rep.sup_Upsilon, consts.C_Upsilon):
            rep.violations.append(f"sup|Upsilon| = {rep.sup_Upsilon:.6g} > C_Upsilon = {consts.C_Upsilon:.6g}")
    if gate_G and exceeds(rep.sup_Gamma, consts.C_Gamma):
        rep.violations.append(f"sup|Gamma| = {rep.sup_Gamma:.6g} > C_Gamma = {consts.C_Gamma:.6g}")
    return rep


def ode_oracle_xi(pd: ProblemData, params: ParamVector, cfg: SolverConfig = SolverConfig(), rtol=1e-12, atol=1e-14):
    """Integrate the differential Riccati triple backward with an adaptive 8th-order method.

    Independent cross-check of :func:`solve_xi`; needs an explicit generator.
    """
    A = pd.sg_A.generator_matrix()
    if A is None:
        raise ValueError(f"ODE oracle needs a generator matrix; semigroup kind is {pd.sg_A.kind!r}")
    n = pd.dim
    grid, _ = _grid(pd, cfg)
    a, b, c = params

    def rhs(t, y):
        X = y.reshape(3, n, n)
        P, U, G = X
        Bt = calB_at(pd, [t])[0]
        Q, S, Z = pd.Q(t), pd.S(t), pd.Z(t)
        dP = -(P @ A + A.T @ P - P @ Bt @ P - a * U @ Bt @ U + Q)
        dU = -(
            U @ (A - Bt @ P)
            + (A.T - P @ Bt) @ U
            - b * U @ Bt @ U
            - c * sym(U @ Bt @ G)
            + S
        )
        Gm = A - Bt @ (P + b * U)
        dG = -(G @ Gm + Gm.T @ G - U @ Bt @ U + Z)
        return np.stack([dP, dU, dG]).ravel()

    y0 = sym(pd.terminal_stack).ravel()
    sol = solve_ivp(rhs, (pd.horizon_T, 0.0), y0, method="DOP853", t_eval=grid[::-1], rtol=rtol, atol=atol)
    if not sol.success:
        raise SolverError(f"ODE oracle failed: {sol.message}")
    Y = sym(sol.y.T[::-1].reshape(-1, 3, n, n))
    Y[-1] = sym(pd.terminal_stack)
    return XiPath(grid, Y[:, 0].copy(), Y[:, 1].copy(), Y[:, 2].copy())
