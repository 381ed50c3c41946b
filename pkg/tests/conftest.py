import warnings

import numpy as np
import pytest

from lqmfg.problem import make_problem


def random_psd_instance(seed):
    """Random PSD instance of dimension 2-4 with a dissipative generator."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))

    def psd(scale=1.0):
        X = rng.standard_normal((n, n))
        return scale * X @ X.T / n

    A = 0.5 * rng.standard_normal((n, n)) - 0.5 * np.eye(n)
    Zs = rng.standard_normal((n, n))
    return make_problem(
        A=A,
        B=0.5 * rng.standard_normal((n, n)) + np.eye(n),
        sigma=0.3 * rng.standard_normal((n, n)),
        R=np.eye(n) + psd(0.5),
        Q=psd(),
        S=psd(0.5),
        Z=0.25 * (Zs + Zs.T),
        Q_T=psd(),
        S_T=psd(0.5),
        Z_T=0.1 * (Zs + Zs.T),
        eta=rng.standard_normal(n),
        zeta=rng.standard_normal(n),
        T=1.0,
    )


def coercive_instance(n=3, seed=7, coupling=0.5):
    """Instance with Q, S >= 0.5 I used for the Nash sweep."""
    rng = np.random.default_rng(seed)

    def psd():
        X = rng.standard_normal((n, n))
        return X @ X.T / n

    A = 0.3 * rng.standard_normal((n, n)) - 0.3 * np.eye(n)
    return make_problem(
        A=A,
        Q=psd() + 0.5 * np.eye(n),
        S=coupling * psd() + 0.5 * np.eye(n),
        Z=0.5 * np.eye(n),
        Q_T=psd(),
        S_T=coupling * psd(),
        eta=np.ones(n),
        zeta=np.ones(n),
        sigma=0.2 * np.eye(n),
        T=1.0,
    )


def scalar_tanh(**kw):
    base = dict(A=[[0.0]], Q=[[1.0]], T=1.0)
    base.update(kw)
    return make_problem(**base)


@pytest.fixture(autouse=True)
def _quiet_admissibility():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="parameters .* lie outside the box")
        yield
