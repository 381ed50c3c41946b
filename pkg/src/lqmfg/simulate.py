"""Forward simulation under the optimal feedback.

Both the population mean and individual paths are advanced with an
exponential trapezoidal scheme: the linear part ``A`` is integrated exactly
by the semigroup and the feedback drift by the trapezoidal rule (implicit in
the state, which only needs a linear solve).  Noise enters as
``E(dt) sigma dW``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .master_nash import ValueFunction
from .problem import ProblemData, calB_at

__all__ = ["SimConfig", "TrajectoryBundle", "mean_flow", "simulate_paths", "path_costs", "running_cost"]


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    n_paths: int = 1000
    seed: int = 0
    t0: float = 0.0
    x0: np.ndarray | float = 0.0
    ybar0: np.ndarray | float | None = None
    store_paths: bool = False
    chunk: int = 2048
    threads: int = 1


@dataclass(frozen=True, eq=False)
class TrajectoryBundle:
    times: np.ndarray
    mean_path: np.ndarray
    sample_paths: np.ndarray | None
    realized_costs: np.ndarray

    @property
    def mean_cost(self):
        return float(self.realized_costs.mean())

    @property
    def cost_se(self):
        n = self.realized_costs.size
        return float(self.realized_costs.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0


def _time_grid(T, t0, dt):
    if dt <= 0:
        raise ValueError("dt must be positive")
    span = T - t0
    if span < 0:
        raise ValueError("t0 is after the horizon")
    K = round(span / dt)
    if K < 1 or abs(K * dt - span) > 1e-9 * max(1.0, span):
        raise ValueError(f"dt={dt} does not divide T - t0 = {span}")
    return np.linspace(t0, T, K + 1)


def _state(v, n, what):
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        v = np.full(n, float(v))
    if v.shape != (n,):
        raise ValueError(f"{what} has shape {v.shape}, expected ({n},)")
    return v


class _Coeffs:
    """Everything the stepper needs, sampled once on the simulation grid."""

    def __init__(self, pd: ProblemData, vf: ValueFunction, times):
        self.times = times
        self.dt = float(times[1] - times[0])
        self.E = pd.sg_A.matrix(self.dt)
        self.P = vf.sample("P", times)
        self.U = vf.sample("Upsilon", times)
        self.psi = vf.sample("psi", times)
        self.calB = calB_at(pd, times)
        self.R = pd.R.sample(times)
        self.B = pd.B
        self.Q, self.S, self.Z = pd.Q.sample(times), pd.S.sample(times), pd.Z.sample(times)
        self.eta, self.zeta = pd.eta.sample(times), pd.zeta.sample(times)
        self.lam = pd.lambda_run.sample(times)
        self.sigma = pd.sigma
        n = pd.dim
        self.lhs = np.eye(n)[None] + 0.5 * self.dt * self.calB @ self.P


def mean_flow(pd: ProblemData, vf: ValueFunction, t0, ybar0, dt=1e-3):
    """Population mean under the equilibrium feedback; returns ``(times, path)``."""
    if vf.N is not None:
        raise ValueError("mean_flow needs the Master value function")
    times = _time_grid(vf.horizon, t0, dt)
    c = _Coeffs(pd, vf, times)
    return times, _mean(c, _state(ybar0, pd.dim, "ybar0"))


def _mean(c: _Coeffs, y0):
    K = c.times.size - 1
    h = c.dt
    PU = c.P + c.U
    lhs = np.eye(y0.size)[None] + 0.5 * h * c.calB @ PU
    y = np.empty((K + 1, y0.size))
    y[0] = y0

    def drift(k, v):
        return -c.calB[k] @ (PU[k] @ v + c.psi[k])

    for k in range(K):
        rhs = c.E @ (y[k] + 0.5 * h * drift(k, y[k])) - 0.5 * h * c.calB[k + 1] @ c.psi[k + 1]
        y[k + 1] = np.linalg.solve(lhs[k + 1], rhs)
    return y


def running_cost(c: _Coeffs, k, X, y):
    """Cost rate ``<R alpha, alpha>/2 + F(t, X, y)`` for a batch of states ``X`` (rows)."""
    alpha = _control(c, k, X, y)
    quad = 0.5 * np.einsum("pi,ij,pj->p", alpha, c.R[k], alpha)
    F = (
        0.5 * np.einsum("pi,ij,pj->p", X, c.Q[k], X)
        + X @ (c.S[k] @ y)
        + 0.5 * y @ c.Z[k] @ y
        + X @ c.eta[k]
        + c.zeta[k] @ y
        + c.lam[k]
    )
    return quad + F


def _control(c: _Coeffs, k, X, y):
    grad = X @ c.P[k].T + (c.U[k] @ y + c.psi[k])[None]
    return -np.linalg.solve(c.R[k], c.B.T @ grad.T).T


def _terminal(pd: ProblemData, X, y):
    return (
        0.5 * np.einsum("pi,ij,pj->p", X, pd.Q_T, X)
        + X @ (pd.S_T @ y)
        + 0.5 * y @ pd.Z_T @ y
        + X @ pd.eta_T
        + pd.zeta_T @ y
        + pd.lambda_T
    )


def _chunk(pd, c: _Coeffs, ybar, x0, seeds, store):
    K = c.times.size - 1
    h = c.dt
    p = len(seeds)
    n, k_noise = c.sigma.shape
    noisy = bool(np.any(c.sigma))
    if noisy:
        dW = np.stack([np.random.default_rng(s).standard_normal((K, k_noise)) for s in seeds], axis=1)
        dW *= math.sqrt(h)
        Esig = c.E @ c.sigma
    X = np.repeat(x0[None], p, axis=0)
    paths = np.empty((p, K + 1, n)) if store else None
    if store:
        paths[:, 0] = X
    prev = running_cost(c, 0, X, ybar[0])
    cost = np.zeros(p)
    for k in range(K):
        g = -(X @ c.P[k].T + (c.U[k] @ ybar[k] + c.psi[k])[None]) @ c.calB[k].T
        rhs = (X + 0.5 * h * g) @ c.E.T - 0.5 * h * (c.calB[k + 1] @ (c.U[k + 1] @ ybar[k + 1] + c.psi[k + 1]))[None]
        if noisy:
            rhs += dW[k] @ Esig.T
        X = np.linalg.solve(c.lhs[k + 1], rhs.T).T
        cur = running_cost(c, k + 1, X, ybar[k + 1])
        cost += 0.5 * h * (prev + cur)
        prev = cur
        if store:
            paths[:, k + 1] = X
    cost += _terminal(pd, X, ybar[-1])
    return cost, paths


def simulate_paths(pd: ProblemData, vf: ValueFunction, cfg: SimConfig):
    """Monte Carlo paths of a representative agent facing the equilibrium mean.

    Each path draws from its own stream spawned from ``cfg.seed``, so results
    do not depend on chunking or threads.
    """
    if cfg.n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    n = pd.dim
    times = _time_grid(vf.horizon, cfg.t0, cfg.dt)
    c = _Coeffs(pd, vf, times)
    x0 = _state(cfg.x0, n, "x0")
    y0 = x0 if cfg.ybar0 is None else _state(cfg.ybar0, n, "ybar0")
    ybar = _mean(c, y0)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_paths)
    parts = [seeds[i : i + cfg.chunk] for i in range(0, cfg.n_paths, cfg.chunk)]

    def run(part):
        return _chunk(pd, c, ybar, x0, part, cfg.store_paths)

    if cfg.threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            out = list(pool.map(run, parts))
    else:
        out = [run(part) for part in parts]
    costs = np.concatenate([o[0] for o in out])
    paths = np.concatenate([o[1] for o in out]) if cfg.store_paths else None
    return TrajectoryBundle(times, ybar, paths, costs)


def path_costs(pd: ProblemData, vf: ValueFunction, bundle: TrajectoryBundle):
    """Recompute realized costs from stored paths (trapezoid in time plus terminal cost)."""
    if bundle.sample_paths is None:
        raise ValueError("bundle has no stored paths")
    c = _Coeffs(pd, vf, bundle.times)
    rates = np.stack([running_cost(c, k, bundle.sample_paths[:, k], bundle.mean_path[k]) for k in range(bundle.times.size)], axis=1)
    total = 0.5 * c.dt * (rates[:, :-1] + rates[:, 1:]).sum(axis=1)
    return total + _terminal(pd, bundle.sample_paths[:, -1], bundle.mean_path[-1])
