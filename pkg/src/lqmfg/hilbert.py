"""Finite-dimensional Hilbert spaces, operators and semigroups.

Vectors are coefficient arrays in a (possibly non-orthonormal) basis whose
Gram matrix defines the inner product.  Operators are dense matrices acting
on coefficient vectors.  When the Gram matrix is the identity every
expression reduces to plain Euclidean linear algebra.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

__all__ = [
    "GalerkinSpace",
    "TimePath",
    "Semigroup",
    "MatrixExponentialSemigroup",
    "TabulatedSemigroup",
    "semigroup_apply",
    "adjoint_apply",
    "operator_norm",
    "sym",
    "estimate_growth_bound",
    "check_growth_bound",
]

_SPD_TOL = 1e-12


def sym(m):
    """Symmetric part ``(m + m^T) / 2`` over the last two axes."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + np.swapaxes(m, -1, -2))


@dataclass(frozen=True, eq=False)
class GalerkinSpace:
    """Truncation of a Hilbert space to ``dim`` basis functions.

    Parameters
    ----------
    dim
        Number of basis functions.
    basis_label
        Free-form description of the basis.
    gram
        Gram matrix ``G[i, j] = <e_i, e_j>``; identity when omitted.
    """

    dim: int
    basis_label: str = "canonical"
    gram: np.ndarray | None = None
    _chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))
        if self.gram is None:
            g = np.eye(self.dim)
        else:
            g = np.array(self.gram, dtype=float)
        if g.shape != (self.dim, self.dim):
            raise ValueError(f"gram has shape {g.shape}, expected {(self.dim, self.dim)}")
        if not np.allclose(g, g.T, rtol=0, atol=1e-12 * max(1.0, np.abs(g).max())):
            raise ValueError("gram matrix is not symmetric")
        g = sym(g)
        if np.linalg.eigvalsh(g).min() <= _SPD_TOL * max(1.0, np.abs(g).max()):
            raise ValueError("gram matrix is not positive definite")
        g.setflags(write=False)
        chol = np.linalg.cholesky(g)
        chol.setflags(write=False)
        object.__setattr__(self, "gram", g)
        object.__setattr__(self, "_chol", chol)

    @property
    def is_orthonormal(self):
        return bool(np.array_equal(self.gram, np.eye(self.dim)))

    @property
    def chol(self):
        """Lower Cholesky factor ``L`` with ``gram = L @ L.T``."""
        return self._chol

    def inner(self, x, y):
        return float(np.asarray(x) @ self.gram @ np.asarray(y))

    def norm(self, x):
        return float(np.sqrt(max(self.inner(x, x), 0.0)))

    def adjoint(self, m):
        """Matrix of the Hilbert adjoint of the operator with matrix ``m``."""
        m = np.asarray(m, dtype=float)
        if self.is_orthonormal:
            return m.T.copy()
        return np.linalg.solve(self.gram, m.T @ self.gram)

    # orthonormal coordinates z = L^T c
    def to_orthonormal(self, c):
        return self._chol.T @ np.asarray(c, dtype=float)

    def from_orthonormal(self, z):
        return sla.solve_triangular(self._chol.T, np.asarray(z, dtype=float), lower=False)

    def operator_to_orthonormal(self, m):
        """Transform an operator matrix ``m`` (coefficient map) to orthonormal coordinates."""
        lt = self._chol.T
        return lt @ np.asarray(m, dtype=float) @ np.linalg.inv(lt)

    def form_to_orthonormal(self, f):
        """Transform a bilinear-form matrix ``f[i, j] = a(e_i, e_j)`` to an orthonormal operator."""
        linv = np.linalg.inv(self._chol)
        return linv @ np.asarray(f, dtype=float) @ linv.T

    def functional_to_orthonormal(self, b):
        """Riesz representative, in orthonormal coordinates, of ``b[j] = l(e_j)``."""
        return sla.solve_triangular(self._chol, np.asarray(b, dtype=float), lower=True)


def operator_norm(m, space_in: GalerkinSpace | None = None, space_out: GalerkinSpace | None = None):
    """Spectral norm of an operator, Gram-corrected when spaces are given."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.size == 0:
        return 0.0
    if space_out is not None and not space_out.is_orthonormal:
        m = space_out.chol.T @ m
    if space_in is not None and not space_in.is_orthonormal:
        m = sla.solve_triangular(space_in.chol, m.T, lower=True).T
    return float(np.linalg.norm(m, 2))


@dataclass(frozen=True, eq=False)
class TimePath:
    """Values sampled on a strictly increasing time grid.

    ``values`` has shape ``(len(grid), *item_shape)``; items may be scalars,
    vectors or matrices.
    """

    grid: np.ndarray
    values: np.ndarray
    interpolation: str = "linear"

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float).ravel()
        values = np.array(self.values, dtype=float)
        if grid.size < 1:
            raise ValueError("empty time grid")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if values.shape[0] != grid.size:
            raise ValueError(f"{values.shape[0]} values for {grid.size} grid points")
        if self.interpolation not in ("linear", "constant-left"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, value, horizon):
        value = np.asarray(value, dtype=float)
        return cls(np.array([0.0, float(horizon)]), np.stack([value, value]))

    @property
    def item_shape(self):
        return self.values.shape[1:]

    def __call__(self, t):
        return self.sample(np.atleast_1d(t))[0] if np.ndim(t) == 0 else self.sample(t)

    def sample(self, times):
        """Values at ``times`` (array), shape ``(len(times), *item_shape)``."""
        times = np.asarray(times, dtype=float).ravel()
        g, v = self.grid, self.values
        if g.size == 1:
            return np.repeat(v, times.size, axis=0)
        lo, hi = g[0], g[-1]
        span = hi - lo
        if np.any(times < lo - 1e-12 * max(1.0, span)) or np.any(times > hi + 1e-12 * max(1.0, span)):
            raise ValueError(f"time outside path range [{lo}, {hi}]")
        times = np.clip(times, lo, hi)
        idx = np.clip(np.searchsorted(g, times, side="right") - 1, 0, g.size - 2)
        if self.interpolation == "constant-left":
            out = v[idx].copy()
            at_end = times >= hi
            out[at_end] = v[-1]
            return out
        w = (times - g[idx]) / (g[idx + 1] - g[idx])
        w = w.reshape((-1,) + (1,) * (v.ndim - 1))
        out = (1.0 - w) * v[idx] + w * v[idx + 1]
        # grid points are returned bitwise
        exact = np.isin(times, g)
        if exact.any():
            out[exact] = v[np.searchsorted(g, times[exact])]
        return out

    def norm_sup(self):
        """``max_t ||value(t)||`` with the spectral norm for matrices."""
        if self.values.ndim == 3:
            return float(max(np.linalg.norm(m, 2) for m in self.values))
        if self.values.ndim == 2:
            return float(np.linalg.norm(self.values, axis=1).max())
        return float(np.abs(self.values).max())


class Semigroup:
    """A strongly continuous semigroup ``e^{tA}`` on a Galerkin space.

    Subclasses implement :meth:`matrix`.  ``bound_M`` and ``bound_omega`` are
    a declared growth bound ``||e^{tA}|| <= M e^{omega t}``.
    """

    kind = "abstract"

    def __init__(self, space: GalerkinSpace, bound_M=1.0, bound_omega=0.0):
        if bound_M < 1.0:
            raise ValueError(f"bound_M must be >= 1, got {bound_M}")
        if bound_omega < 0.0:
            raise ValueError(f"bound_omega must be >= 0, got {bound_omega}")
        self.space = space
        self.bound_M = float(bound_M)
        self.bound_omega = float(bound_omega)

    @property
    def dim(self):
        return self.space.dim

    def matrix(self, t):
        raise NotImplementedError

    def adjoint_matrix(self, t):
        return self.space.adjoint(self.matrix(t))

    def generator_matrix(self):
        """Matrix of ``A`` when available, else ``None``."""
        return None

    def _check(self, t, x):
        if t < 0:
            raise ValueError(f"negative time {t}")
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.dim:
            raise ValueError(f"vector of length {x.shape[0]} for space of dimension {self.dim}")
        return x

    def apply(self, t, x):
        x = self._check(t, x)
        return self.matrix(t) @ x

    def adjoint_apply(self, t, x):
        x = self._check(t, x)
        return self.adjoint_matrix(t) @ x

    def growth(self, t):
        return self.bound_M * np.exp(self.bound_omega * t)


class MatrixExponentialSemigroup(Semigroup):
    """``e^{tA}`` for a bounded generator matrix, via scaling and squaring."""

    kind = "matrix-exponential"

    def __init__(self, generator, space: GalerkinSpace | None = None, bound_M=None, bound_omega=None):
        gen = np.atleast_2d(np.asarray(generator, dtype=float))
        if gen.shape[0] != gen.shape[1]:
            raise ValueError("generator must be square")
        space = space or GalerkinSpace(gen.shape[0])
        if space.dim != gen.shape[0]:
            raise ValueError("generator does not match the space dimension")
        gen = gen.copy()
        gen.setflags(write=False)
        self.generator = gen
        super().__init__(space, 1.0, 0.0)
        if bound_M is None or bound_omega is None:
            m_est, w_est = self._default_bound()
            bound_M = m_est if bound_M is None else bound_M
            bound_omega = w_est if bound_omega is None else bound_omega
        super().__init__(space, bound_M, bound_omega)

    def _default_bound(self):
        # Lumer-Phillips: ||e^{tA}|| <= e^{t * max eig of the symmetric part}
        ortho = self.space.operator_to_orthonormal(self.generator)
        w = float(np.linalg.eigvalsh(sym(ortho)).max())
        return 1.0, max(w, 0.0)

    def generator_matrix(self):
        return self.generator

    def matrix(self, t):
        if t < 0:
            raise ValueError(f"negative time {t}")
        if t == 0:
            return np.eye(self.dim)
        return sla.expm(t * self.generator)


class TabulatedSemigroup(Semigroup):
    """Semigroup known only through matrices on a fixed set of times."""

    kind = "custom-table"

    def __init__(self, times, matrices, space: GalerkinSpace | None = None, bound_M=1.0, bound_omega=0.0):
        times = np.asarray(times, dtype=float).ravel()
        mats = np.asarray(matrices, dtype=float)
        if mats.shape[0] != times.size or mats.ndim != 3:
            raise ValueError("need one square matrix per tabulated time")
        space = space or GalerkinSpace(mats.shape[1])
        super().__init__(space, bound_M, bound_omega)
        self.times = times
        self.matrices = mats

    def matrix(self, t):
        if t < 0:
            raise ValueError(f"negative time {t}")
        hit = np.flatnonzero(np.isclose(self.times, t, rtol=0, atol=1e-12 * max(1.0, abs(t))))
        if hit.size == 0:
            if t == 0:
                return np.eye(self.dim)
            raise ValueError(f"time {t} is not tabulated")
        return self.matrices[hit[0]].copy()


def semigroup_apply(sg: Semigroup, t, x):
    """Return ``e^{tA} x``."""
    return sg.apply(t, x)


def adjoint_apply(sg: Semigroup, t, x):
    """Return ``e^{tA*} x`` (adjoint taken in the space's inner product)."""
    return sg.adjoint_apply(t, x)


def _sample_ratios(sg: Semigroup, horizon, n_times, n_vectors, seed):
    rng = np.random.default_rng(seed)
    times = np.concatenate([[0.0], np.geomspace(horizon * 1e-4, horizon, n_times)]) if horizon > 0 else np.zeros(1)
    xs = rng.standard_normal((sg.dim, n_vectors))
    ratios = np.empty(times.size)
    for k, t in enumerate(times):
        e = sg.matrix(t)
        est = [sg.space.norm(e @ x) / sg.space.norm(x) for x in xs.T]
        ratios[k] = max(max(est), operator_norm(e, sg.space, sg.space))
    return times, ratios


def estimate_growth_bound(sg: Semigroup, horizon, n_times=64, n_vectors=32, seed=0, inflation=1.1):
    """Estimate ``(M, omega)`` for ``sg`` on ``[0, horizon]`` by sampling.

    ``omega`` is clamped at zero; the result is inflated by ``inflation``.
    """
    times, ratios = _sample_ratios(sg, horizon, n_times, n_vectors, seed)
    omega = 0.0
    gen = sg.generator_matrix()
    if gen is not None:
        ortho = sg.space.operator_to_orthonormal(gen)
        omega = max(0.0, float(np.linalg.eigvals(ortho).real.max()))
    m = max(1.0, float(np.max(ratios * np.exp(-omega * times))))
    return inflation * m, omega


def check_growth_bound(sg: Semigroup, horizon, n_times=64, n_vectors=32, seed=0, rtol=1e-8):
    """Largest relative excess of sampled norms over the declared bound (<= 0 means OK)."""
    times, ratios = _sample_ratios(sg, horizon, n_times, n_vectors, seed)
    bound = sg.growth(times)
    return float(np.max((ratios - bound) / bound) - rtol)
