import math

import numpy as np
import pytest

from conftest import coercive_instance, random_psd_instance, scalar_tanh
from lqmfg.master_nash import (
    convergence_sweep,
    eval_nash_value,
    eval_value,
    feedback_control,
    gradient_x,
    hamiltonian,
    running_cost_rate,
    value_function,
)
from lqmfg.problem import make_problem, master_params, nash_params
from lqmfg.riccati import SolverConfig, solve_coefficients


def _vf(pd, params=None, N=None, grid=100):
    params = params or master_params()
    return value_function(pd, solve_coefficients(pd, params, SolverConfig(grid=grid)), N)


def test_constant_mu_only():
    vf = _vf(make_problem(A=np.zeros((2, 2)), lambda_T=2.5, T=1.0), grid=10)
    for t in (0.0, 0.33, 1.0):
        assert eval_value(vf, t, np.array([1.0, -2.0]), np.array([0.3, 4.0])) == 2.5


def test_terminal_value_is_terminal_cost():
    pd = random_psd_instance(2)
    vf = _vf(pd)
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal(pd.dim), rng.standard_normal(pd.dim)
    G = 0.5 * x @ pd.Q_T @ x + y @ pd.S_T @ x + 0.5 * y @ pd.Z_T @ y + pd.eta_T @ x + pd.zeta_T @ y + pd.lambda_T
    assert eval_value(vf, 1.0, x, y) == pytest.approx(G, rel=1e-14, abs=1e-14)


def test_scalar_tanh_value_at_zero():
    pd = scalar_tanh(sigma=[[1.0]])
    vf = _vf(pd, grid=2000)
    expected = 0.5 * math.tanh(1.0) + 0.5 * math.log(math.cosh(1.0))
    assert eval_value(vf, 0.0, np.array([1.0]), np.array([0.0])) == pytest.approx(expected, abs=1e-6)


def test_eval_dimension_and_time_errors():
    vf = _vf(scalar_tanh(), grid=10)
    with pytest.raises(ValueError):
        eval_value(vf, 0.0, np.ones(2), np.ones(1))
    with pytest.raises(ValueError):
        eval_value(vf, 1.5, np.ones(1), np.ones(1))


def test_nash_value_two_players():
    pd = random_psd_instance(1)
    vf = _vf(pd, nash_params(2), N=2)
    rng = np.random.default_rng(1)
    xs = rng.standard_normal((2, pd.dim))
    assert eval_nash_value(vf, 0.2, 0, xs) == eval_value(vf, 0.2, xs[0], xs[1])


def test_nash_value_three_players_mean():
    pd = make_problem(A=np.zeros((3, 3)), Q=np.eye(3), S=0.5 * np.eye(3), eta=np.ones(3), T=1.0)
    vf = _vf(pd, nash_params(3), N=3)
    e = np.eye(3)
    assert eval_nash_value(vf, 0.0, 0, e) == pytest.approx(eval_value(vf, 0.0, e[0], (e[1] + e[2]) / 2), rel=1e-15)


def test_nash_value_symmetric_states():
    pd = random_psd_instance(0)
    vf = _vf(pd, nash_params(4), N=4)
    xs = np.tile(np.arange(pd.dim, dtype=float), (4, 1))
    vals = [eval_nash_value(vf, 0.5, i, xs) for i in range(4)]
    assert max(vals) - min(vals) == 0


def test_nash_value_opponent_permutation():
    pd = random_psd_instance(3)
    vf = _vf(pd, nash_params(5), N=5)
    xs = np.random.default_rng(2).standard_normal((5, pd.dim))
    perm = xs[[0, 3, 1, 4, 2]]
    assert eval_nash_value(vf, 0.1, 0, xs) == pytest.approx(eval_nash_value(vf, 0.1, 0, perm), rel=1e-13)


def test_nash_value_bad_index():
    vf = _vf(scalar_tanh(), nash_params(2), N=2, grid=10)
    with pytest.raises(IndexError):
        eval_nash_value(vf, 0.0, 2, np.zeros((2, 1)))
    with pytest.raises(ValueError):
        eval_nash_value(vf, 0.0, 0, np.zeros((3, 1)))


def test_hamiltonian_examples():
    pd = make_problem(A=[[-1.0]], R=[[0.5]], T=1.0)
    assert hamiltonian(pd, 0.0, np.array([1.0]), np.array([0.0])) == 0.0
    assert hamiltonian(pd, 0.0, np.array([1.0]), np.array([3.0])) == pytest.approx(12.0)
    pd = make_problem(A=np.zeros((2, 2)), T=1.0)
    p = np.array([1.0, 2.0])
    assert hamiltonian(pd, 0.3, np.ones(2), p) == pytest.approx(2.5)


def test_feedback_examples():
    pd = make_problem(A=[[0.0]], T=1.0)
    vf = _vf(pd, grid=10)
    assert np.all(feedback_control(vf, pd, 0.0, np.array([2.0]), np.array([1.0])) == 0)
    pd = make_problem(A=[[0.0]], Q=[[1.0]], Q_T=[[1.0]], T=1.0)  # P == 1
    vf = _vf(pd, grid=10)
    assert feedback_control(vf, pd, 0.4, np.array([3.0]), np.array([0.0]))[0] == pytest.approx(-3.0, abs=1e-12)


def test_feedback_minimises_cost_rate():
    pd = random_psd_instance(6)
    vf = _vf(pd)
    rng = np.random.default_rng(3)
    for _ in range(10):
        t = rng.uniform(0, 1)
        x, y = rng.standard_normal(pd.dim), rng.standard_normal(pd.dim)
        a = feedback_control(vf, pd, t, x, y)
        p = gradient_x(vf, t, x, y)
        base = running_cost_rate(pd, t, x, p, a)
        for _ in range(5):
            d = 1e-3 * rng.standard_normal(a.size)
            assert running_cost_rate(pd, t, x, p, a + d) > base
            assert running_cost_rate(pd, t, x, p, a - d) > base
        assert -hamiltonian(pd, t, x, p) == pytest.approx(base, rel=1e-12, abs=1e-12)


def test_sweep_single_N():
    # N = 2 is far outside the small-coupling box; the solution is steep near t = 0
    rep = convergence_sweep(coercive_instance(), [2], SolverConfig(grid=400))
    assert len(rep.rows) == 1 and rep.rows[0].params == (2.0, 0.0, 1.0)
    assert rep.rows[0].ok and rep.rows[0].d_xi > 0
    assert math.isnan(rep.slope)


def test_sweep_decreasing_and_slope():
    rep = convergence_sweep(coercive_instance(), [4, 8, 16, 32, 64], SolverConfig(grid=200))
    d = rep.gaps()
    assert np.all(np.diff(d) < 0)
    assert d[-1] < d[0] / 5
    assert np.isfinite(rep.slope) and -1.6 < rep.slope < -0.7


def test_sweep_records_failures():
    # too coarse for N = 2 on this instance; N = 8 still solves
    rep = convergence_sweep(coercive_instance(), [2, 8], SolverConfig(grid=100))
    assert not rep.rows[0].ok and "did not contract" in rep.rows[0].error
    assert rep.rows[1].ok


def test_sweep_threads_same_result():
    pd = coercive_instance()
    a = convergence_sweep(pd, [4, 8, 16], SolverConfig(grid=50))
    b = convergence_sweep(pd, [4, 8, 16], SolverConfig(grid=50), threads=3)
    assert np.array_equal(a.gaps(), b.gaps())
