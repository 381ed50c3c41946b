"""Age-structured (vintage) capital with a mean-dependent linear price.

The state is an age profile ``x in L^2(0, sbar)`` transported by
``A x = -x' - nu x`` with zero inflow at age 0.  Profiles are discretised by
piecewise-linear hat functions on a uniform age grid; the node at age 0 is
dropped (the boundary condition) and the last function is a half hat.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
from scipy.integrate import quad

from .hilbert import GalerkinSpace, Semigroup, TimePath
from .problem import ProblemData, make_problem

__all__ = [
    "VintageModel",
    "HatBasis",
    "TransportSemigroup",
    "build_problem",
    "compatible_grid",
    "transport_apply",
    "pde_mild_solution",
    "oracle_check",
    "OracleReport",
    "price_monitor",
    "profile_from_orthonormal",
]

log = logging.getLogger(__name__)

_GL2 = np.polynomial.legendre.leggauss(2)
_GL4 = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True, eq=False)
class VintageModel:
    """Parameters of the vintage capital model.

    Parameters
    ----------
    sbar : float
        Maximum age (finite truncation of the age half-line).
    nu, rho : float
        Depreciation and discount rates.
    a_fun, b_fun : callable
        Price coefficients ``a(tau, s)``, ``b(tau, s)``; vectorised in ``s``.
    g_fun : callable
        Terminal profit density ``g(s)``.
    horizon_T : float
    sigma : float
        Optional additive noise level (the model itself is deterministic).
    """

    sbar: float
    nu: float
    rho: float
    a_fun: Callable
    b_fun: Callable
    g_fun: Callable
    horizon_T: float
    sigma: float = 0.0

    def __post_init__(self):
        if not (self.sbar > 0 and math.isfinite(self.sbar)):
            raise ValueError("sbar must be positive and finite")
        if self.nu < 0 or self.rho < 0:
            raise ValueError("nu and rho must be non-negative")
        if self.horizon_T <= 0:
            raise ValueError("horizon must be positive")

    def a(self, tau, s):
        return np.broadcast_to(np.asarray(self.a_fun(tau, s), dtype=float), np.shape(s))

    def b(self, tau, s):
        return np.broadcast_to(np.asarray(self.b_fun(tau, s), dtype=float), np.shape(s))

    def g(self, s):
        return np.broadcast_to(np.asarray(self.g_fun(s), dtype=float), np.shape(s))


class HatBasis:
    """Hat functions at ages ``h, 2h, ..., n h = sbar``."""

    def __init__(self, sbar, n):
        if n < 2:
            raise ValueError("need at least two basis functions")
        self.sbar = float(sbar)
        self.n = int(n)
        self.h = self.sbar / self.n
        self.nodes = self.h * np.arange(1, self.n + 1)
        g = np.zeros((n, n))
        idx = np.arange(n)
        g[idx, idx] = 2 * self.h / 3
        g[-1, -1] = self.h / 3
        g[idx[:-1], idx[:-1] + 1] = g[idx[:-1] + 1, idx[:-1]] = self.h / 6
        self.gram = g
        self.chol = np.linalg.cholesky(g)

    def eval(self, s):
        """Values ``phi_i(s)`` as an ``(n, len(s))`` array; zero outside ``[0, sbar]``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        vals = np.clip(1.0 - np.abs(s[None, :] - self.nodes[:, None]) / self.h, 0.0, None)
        vals[:, (s < 0) | (s > self.sbar * (1 + 1e-14))] = 0.0
        return vals

    def quadrature(self, breaks=None, rule=_GL4):
        """Gauss points and weights on the element mesh (refined by ``breaks``)."""
        pts = np.arange(self.n + 1) * self.h
        if breaks is not None:
            pts = np.union1d(pts, np.clip(breaks, 0.0, self.sbar))
        pts = np.unique(pts)
        lo, hi = pts[:-1], pts[1:]
        keep = hi - lo > 1e-14 * self.sbar
        lo, hi = lo[keep], hi[keep]
        x, w = rule
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        s = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        ws = (half[:, None] * w[None, :]).ravel()
        return s, ws

    def load(self, f):
        """``int f phi_i ds`` for a vectorised ``f(s)``."""
        s, w = self.quadrature()
        return self.eval(s) @ (w * f(s))

    def mass(self, weight):
        """Weighted mass matrix ``int w(s) phi_i phi_j ds``."""
        s, w = self.quadrature()
        phi = self.eval(s)
        return (phi * (w * weight(s))) @ phi.T

    def project(self, f):
        """Coefficients of the L^2 projection of ``f``."""
        return sla.cho_solve((self.chol, True), self.load(f))

    def evaluate(self, coeffs, s):
        return np.asarray(coeffs) @ self.eval(s)

    def to_orthonormal(self, c):
        return self.chol.T @ c

    def from_orthonormal(self, z):
        return sla.solve_triangular(self.chol.T, z, lower=False)


class TransportSemigroup(Semigroup):
    """Galerkin projection of ``(e^{tA} x)(s) = e^{-nu t} x(s - t)`` (zero for ``s < t``).

    Matrices are exact integrals of products of shifted hats.  The family is
    a semigroup exactly on multiples of the age step (shifts by ``h`` map
    hats to hats); in between it carries the projection error.
    """

    kind = "transport-depreciation"

    def __init__(self, basis: HatBasis, nu, orthonormal=True):
        self.basis = basis
        self.nu = float(nu)
        self.orthonormal = bool(orthonormal)
        if orthonormal:
            space = GalerkinSpace(basis.n, "hat-orthonormal")
        else:
            space = GalerkinSpace(basis.n, "hat", basis.gram)
        super().__init__(space, 1.0, 0.0)
        self._cache = {}

    def shift_form(self, t):
        """``K[j, i] = e^{-nu t} int phi_j(s) phi_i(s - t) ds``."""
        b = self.basis
        grid = np.arange(b.n + 1) * b.h
        s, w = b.quadrature(grid + t, rule=_GL2)
        return math.exp(-self.nu * t) * (b.eval(s) * w) @ b.eval(s - t).T

    def matrix(self, t):
        if t < 0:
            raise ValueError(f"negative time {t}")
        key = round(float(t), 13)
        hit = self._cache.get(key)
        if hit is None:
            b = self.basis
            K = self.shift_form(t)
            if self.orthonormal:
                hit = sla.solve_triangular(b.chol, K, lower=True)
                hit = sla.solve_triangular(b.chol, hit.T, lower=True).T
            else:
                hit = sla.cho_solve((b.chol, True), K)
            if len(self._cache) < 4096:
                self._cache[key] = hit
        return hit.copy()


def compatible_grid(vm: VintageModel, n, max_steps=None):
    """Largest step count with time step a multiple of the age step, or None."""
    m0 = vm.horizon_T * n / vm.sbar
    if abs(m0 - round(m0)) > 1e-9 * max(1.0, m0) or round(m0) < 1:
        return None
    m0 = int(round(m0))
    if max_steps is None or m0 <= max_steps:
        return m0
    for k in range(2, m0 + 1):
        if m0 % k == 0 and m0 // k <= max_steps:
            return m0 // k
    return 1


def build_problem(vm: VintageModel, n, n_time=64, label="vintage"):
    """Galerkin problem data in orthonormal hat coordinates.

    ``Q = Z = 0``, ``S(tau) = e^{-rho tau} b(tau, .)`` (multiplication),
    ``eta(tau) = -e^{-rho tau} a(tau, .)``, ``eta_T = -e^{-rho T} g``,
    ``B = I`` and ``R(tau) = e^{-rho tau} I``.
    """
    basis = HatBasis(vm.sbar, n)
    sg = TransportSemigroup(basis, vm.nu, orthonormal=True)
    T = vm.horizon_T
    taus = np.linspace(0.0, T, int(n_time) + 1)
    sq, _ = basis.quadrature()
    L = basis.chol
    for tau in taus:
        if np.any(vm.a(tau, sq) < 0) or np.any(vm.b(tau, sq) < 0):
            raise ValueError(f"price coefficients must be non-negative (violated at tau={tau:g})")
    if np.any(vm.g(sq) < 0):
        raise ValueError("terminal profit density g must be non-negative")

    def form(F):
        X = sla.solve_triangular(L, F, lower=True)
        return sla.solve_triangular(L, X.T, lower=True).T

    def functional(v):
        return sla.solve_triangular(L, v, lower=True)

    S = np.array([form(math.exp(-vm.rho * tau) * basis.mass(lambda s, tau=tau: vm.b(tau, s))) for tau in taus])
    S = 0.5 * (S + np.swapaxes(S, 1, 2))
    eta = np.array([functional(-math.exp(-vm.rho * tau) * basis.load(lambda s, tau=tau: vm.a(tau, s))) for tau in taus])
    R = np.array([math.exp(-vm.rho * tau) * np.eye(n) for tau in taus])
    eta_T = functional(-math.exp(-vm.rho * T) * basis.load(vm.g))
    sigma = vm.sigma * np.eye(n) if vm.sigma else np.zeros((n, 1))
    return make_problem(
        A=sg,
        B=np.eye(n),
        sigma=sigma,
        R=TimePath(taus, R),
        S=TimePath(taus, S),
        eta=TimePath(taus, eta),
        eta_T=eta_T,
        T=T,
        label=label,
    )


def profile_from_orthonormal(pd: ProblemData, z, s):
    """Age profile values at ``s`` of an orthonormal-coordinate vector ``z``."""
    basis = pd.sg_A.basis
    return basis.evaluate(basis.from_orthonormal(np.asarray(z, dtype=float)), s)


def transport_apply(vm: VintageModel, t, x, s_grid=None):
    """Exact transport of a sampled profile: ``e^{-nu t} x(s - t)``, zero below age ``t``.

    ``x`` holds values on ``s_grid`` (uniform on ``[0, sbar]`` by default);
    values between samples are linear.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    x = np.asarray(x, dtype=float)
    s = np.linspace(0.0, vm.sbar, x.size) if s_grid is None else np.asarray(s_grid, dtype=float)
    src = s - t
    out = math.exp(-vm.nu * t) * np.interp(src, s, x)
    out[src < s[0] - 1e-14 * vm.sbar] = 0.0
    return out


def pde_mild_solution(vm: VintageModel, t0, x0, alpha, tau, s):
    """Explicit solution of the transport equation with zero inflow.

    ``x0(s)`` and ``alpha(tau, s)`` are callables (``alpha`` may be None for
    no investment); ``s`` may be an array.  For ``tau - s >= t0`` the
    capital was installed after ``t0``; otherwise it descends from ``x0``.
    """
    if not t0 <= tau <= vm.horizon_T + 1e-12:
        raise ValueError(f"tau={tau} outside [{t0}, {vm.horizon_T}]")
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s_arr < 0) or np.any(s_arr > vm.sbar * (1 + 1e-12)):
        raise ValueError("age outside [0, sbar]")
    nu = vm.nu
    out = np.empty_like(s_arr)
    for k, sk in enumerate(s_arr):
        if tau - sk >= t0:
            val = 0.0
            if alpha is not None and sk > 0:
                val = quad(lambda z: math.exp(nu * (z - sk)) * alpha(tau - sk + z, z), 0.0, sk)[0]
        else:
            val = math.exp(-nu * (tau - t0)) * float(x0(sk - tau + t0))
            if alpha is not None and tau > t0:
                val += quad(lambda z: math.exp(nu * (z - tau)) * alpha(z, sk - tau + z), t0, tau)[0]
        out[k] = val
    return out if np.ndim(s) else float(out[0])


@dataclass
class OracleReport:
    ns: list
    times: list
    gaps: list
    min_values: list = field(default_factory=list)

    @property
    def monotone(self):
        return all(b < a for a, b in zip(self.gaps, self.gaps[1:]))


def _smooth_profile(sbar):
    return lambda s: np.sin(np.pi * np.asarray(s) / sbar) ** 2


def oracle_check(vm: VintageModel, ns=(16, 32, 64, 128), times=None, profile=None, n_fine=4096):
    """L^2 gap between the Galerkin semigroup and the exact transport.

    The profile (default ``sin^2(pi s / sbar)``, smooth and zero at age 0) is
    projected, propagated with the Galerkin matrices and compared with the
    explicit solution on a fine grid; the gap is the max over ``times``.
    """
    profile = profile or _smooth_profile(vm.sbar)
    times = list(times) if times is not None else [0.1 * vm.sbar, 0.25 * vm.sbar, 0.5 * vm.sbar]
    s_fine = np.linspace(0.0, vm.sbar, n_fine + 1)
    wq = np.full(s_fine.size, vm.sbar / n_fine)
    wq[[0, -1]] *= 0.5
    gaps, mins = [], []
    for n in ns:
        basis = HatBasis(vm.sbar, n)
        sg = TransportSemigroup(basis, vm.nu, orthonormal=False)
        c0 = basis.project(profile)
        worst, lo = 0.0, math.inf
        for t in times:
            approx = basis.evaluate(sg.matrix(t) @ c0, s_fine)
            exact = pde_mild_solution(vm, 0.0, profile, None, min(t, vm.horizon_T), s_fine) if t <= vm.horizon_T \
                else transport_apply(vm, t, profile(s_fine), s_fine)
            worst = max(worst, math.sqrt(float(wq @ (approx - exact) ** 2)))
            lo = min(lo, float(approx.min()))
        gaps.append(worst)
        mins.append(lo)
    return OracleReport(list(ns), times, gaps, mins)


def price_monitor(vm: VintageModel, times, mean_profiles, s_grid):
    """``min a(tau, s) - b(tau, s) * mean(tau, s)`` over the sampled grid.

    Non-negative prices are assumed by the model but not enforced; this is
    reported only.
    """
    worst = math.inf
    for tau, m in zip(times, mean_profiles):
        worst = min(worst, float(np.min(vm.a(tau, s_grid) - vm.b(tau, s_grid) * m)))
    return worst
