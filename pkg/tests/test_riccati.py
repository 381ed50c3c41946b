import math

import numpy as np
import pytest
import scipy.linalg as sla
from scipy.integrate import quad_vec, solve_ivp

from conftest import random_psd_instance, scalar_tanh
from lqmfg.hilbert import MatrixExponentialSemigroup, TabulatedSemigroup
from lqmfg.problem import ParamVector, make_problem, master_params, nash_params
from lqmfg.riccati import (
    MuPath,
    PsiPhiPath,
    SolverConfig,
    SolverError,
    XiPath,
    _Propagator,
    bound_constants,
    check_apriori,
    ode_oracle_xi,
    solve_coefficients,
    solve_mu,
    solve_psi_phi,
    solve_xi,
)


# ---------------------------------------------------------------- constants


def test_bound_constants_zero_costs():
    c = bound_constants(make_problem(A=[[0.0]], T=1.0), master_params())
    assert c.r == 0 and c.C_P == 0 and c.C_Upsilon == 0 and c.C_Gamma == 0 and c.C_Xi == 0


def test_bound_constants_scalar_example():
    pd = make_problem(A=[[0.0]], Q=[[1.0]], Q_T=[[1.0]], T=1.0)
    c = bound_constants(pd, master_params())
    # plug-in evaluation: (V_T + V) = 2, L = 2, |calB| = 1, M_T = 1
    assert c.M_T == 1.0 and c.L_a == 2.0
    assert c.norm_V_T == 1.0 and c.norm_V == 1.0
    assert c.C_P == 2.0
    assert c.r == 4.0
    assert c.tau == pytest.approx(1.0 / (1.0 + 12.0 * 1.0 * 2.0 * 2.0 * 1.0))
    assert c.tau == pytest.approx(1.0 / 49.0)


def test_L_of_nash_two():
    assert nash_params(2).L == 4


def test_bound_constants_grow_with_horizon():
    c1 = bound_constants(scalar_tanh(S=[[1.0]]), master_params())
    c2 = bound_constants(scalar_tanh(S=[[1.0]], T=2.0), master_params())
    assert c2.C_P > c1.C_P and c2.C_Upsilon > c1.C_Upsilon and c2.tau <= c1.tau


def test_step_length_uses_factor_sixty_for_small_L():
    c = bound_constants(scalar_tanh(), master_params())
    assert c.step_length(0.0) == pytest.approx(1.0 / (1.0 + 60.0))


# ---------------------------------------------------------------- closed forms


def test_lyapunov_case_zero_generator():
    Q0 = np.array([[2.0, 0.5], [0.5, 1.0]])
    QT = np.array([[1.0, 0.0], [0.0, 3.0]])
    pd = make_problem(A=np.zeros((2, 2)), B=np.zeros((2, 2)), Q=Q0, Q_T=QT, T=1.5)
    xi, rep = solve_xi(pd, master_params(), SolverConfig(grid=30, acknowledge_degenerate_control=True))
    exact = QT[None] + (1.5 - xi.grid)[:, None, None] * Q0[None]
    assert np.abs(xi.P - exact).max() <= 1e-12
    assert np.abs(xi.Upsilon).max() == 0 and np.abs(xi.Gamma).max() == 0


def test_lyapunov_oracle_matches_closed_integral():
    A = np.array([[-1.0, 0.5], [0.0, -0.3]])
    Q0, QT = np.eye(2), np.diag([1.0, 2.0])
    T = 1.0
    pd = make_problem(A=A, B=np.zeros((2, 2)), Q=Q0, Q_T=QT, T=T)
    cfg = SolverConfig(grid=20, acknowledge_degenerate_control=True)
    orc = ode_oracle_xi(pd, master_params(), cfg)
    for k, t in enumerate(orc.grid):
        E = sla.expm((T - t) * A)
        integral = quad_vec(lambda s: sla.expm(s * A).T @ Q0 @ sla.expm(s * A), 0.0, T - t, epsabs=1e-13)[0]
        assert np.abs(orc.P[k] - (E.T @ QT @ E + integral)).max() <= 1e-8


def test_scalar_tanh():
    xi, rep = solve_xi(scalar_tanh(), master_params(), SolverConfig(grid=2000))
    assert np.abs(xi.P[:, 0, 0] - np.tanh(1.0 - xi.grid)).max() <= 1e-6
    k = np.searchsorted(xi.grid, 0.5)
    assert xi.P[k, 0, 0] == pytest.approx(0.462117, abs=1e-6)
    assert all(r.final_residual <= 1e-10 for r in rep.intervals)


def _scalar_upsilon_oracle(T=1.0):
    # p' = p^2 - 1, u' = 2 p u + u^2 - 1 backward from zero terminal data
    def rhs(t, y):
        p, u = y
        return [p * p - 1.0, 2.0 * p * u + u * u - 1.0]

    return solve_ivp(rhs, (T, 0.0), [0.0, 0.0], method="Radau", rtol=1e-12, atol=1e-14, dense_output=True)


def test_scalar_upsilon_against_stiff_oracle():
    xi, _ = solve_xi(scalar_tanh(S=[[1.0]]), master_params(), SolverConfig(grid=2000))
    sol = _scalar_upsilon_oracle()
    for t in (0.0, 0.25, 0.5):
        k = int(round(t * 2000))
        assert xi.Upsilon[k, 0, 0] == pytest.approx(sol.sol(t)[1], abs=1e-6)


def test_ode_oracle_scalar_tanh():
    orc = ode_oracle_xi(scalar_tanh(), master_params(), SolverConfig(grid=100))
    assert np.abs(orc.P[:, 0, 0] - np.tanh(1.0 - orc.grid)).max() <= 1e-9


def test_ode_oracle_agreement_random_4d():
    pd = next(random_psd_instance(s) for s in range(100) if random_psd_instance(s).dim == 4)
    cfg = SolverConfig(grid=1600)
    xi, _ = solve_xi(pd, master_params(), cfg)
    orc = ode_oracle_xi(pd, master_params(), cfg)
    assert np.abs(xi.stack - orc.stack).max() <= 1e-5


def test_ode_oracle_needs_generator():
    from lqmfg.vintage import VintageModel, build_problem

    vm = VintageModel(1.0, 0.0, 0.0, lambda t, s: 1.0 + 0 * s, lambda t, s: 0 * s, lambda s: 0 * s, 1.0)
    with pytest.raises(ValueError, match="generator"):
        ode_oracle_xi(build_problem(vm, 4, 4), master_params(), SolverConfig(grid=4))


# ---------------------------------------------------------------- invariants


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_symmetry_and_terminal_data(seed):
    pd = random_psd_instance(seed)
    sol = solve_coefficients(pd, nash_params(5), SolverConfig(grid=100))
    for M in (sol.xi.P, sol.xi.Upsilon, sol.xi.Gamma):
        assert np.abs(M - np.swapaxes(M, 1, 2)).max() <= 1e-10
    assert np.array_equal(sol.xi.P[-1], pd.Q_T)
    assert np.array_equal(sol.xi.Upsilon[-1], pd.S_T)
    assert np.array_equal(sol.xi.Gamma[-1], pd.Z_T)
    assert np.array_equal(sol.psiphi.psi[-1], pd.eta_T)
    assert np.array_equal(sol.psiphi.phi[-1], pd.zeta_T)
    assert sol.mu.mu[-1] == pd.lambda_T


def test_mild_residual_reported_small():
    _, rep = solve_xi(random_psd_instance(3), master_params(), SolverConfig(grid=200))
    assert rep.mild_residual <= 1e-9


def test_refinement_second_order():
    pd = random_psd_instance(4)
    gaps = []
    for M in (100, 200):
        cfg = SolverConfig(grid=M)
        gaps.append(np.abs(solve_xi(pd, master_params(), cfg)[0].stack - ode_oracle_xi(pd, master_params(), cfg).stack).max())
    assert gaps[0] / gaps[1] >= 3.0


def test_positivity_under_master_params():
    for seed in range(5):
        xi, rep = solve_xi(random_psd_instance(seed), master_params(), SolverConfig(grid=100))
        assert rep.bounds.min_eig_P >= -1e-8 and rep.bounds.min_eig_Upsilon >= -1e-8
        assert rep.bounds.gate_P and rep.bounds.gate_Upsilon


def test_initial_guess_uniqueness():
    pd = random_psd_instance(5)
    tol = 1e-10
    a, _ = solve_xi(pd, master_params(), SolverConfig(grid=200, tol=tol, initial_guess="terminal"))
    b, _ = solve_xi(pd, master_params(), SolverConfig(grid=200, tol=tol, initial_guess="zero"))
    scale = max(a.sup_norm(), 1.0)
    assert np.abs(a.stack - b.stack).max() <= 10 * tol * scale


def test_faithful_mode_matches_adaptive():
    pd = scalar_tanh()
    ad, _ = solve_xi(pd, master_params(), SolverConfig(grid=2000))
    fa, rep = solve_xi(pd, master_params(), SolverConfig(grid=2000, faithful=True))
    assert len(rep.intervals) > 1
    assert all(r.max_contraction_ratio < 0.5 for r in rep.intervals)
    assert rep.intervals[0].within_radius
    assert np.abs(fa.stack - ad.stack).max() <= 1e-8


def test_nonconvergence_raises_with_interval():
    with pytest.raises(SolverError) as exc:
        solve_xi(random_psd_instance(0), master_params(), SolverConfig(grid=50, max_iter=1))
    assert exc.value.interval is not None


def test_strict_mode_turns_violation_into_error(monkeypatch):
    import lqmfg.riccati as r

    real = r.bound_constants

    def shrunk(*a, **k):
        c = real(*a, **k)
        c.C_P = 0.4 * c.C_P
        return c

    monkeypatch.setattr(r, "bound_constants", shrunk)
    _, rep = solve_xi(scalar_tanh(Q_T=[[1.0]]), master_params(), SolverConfig(grid=50))
    assert rep.bound_violations
    with pytest.raises(SolverError):
        solve_xi(scalar_tanh(Q_T=[[1.0]]), master_params(), SolverConfig(grid=50, strict=True))


def test_nash_skew_part_is_reported():
    _, rep = solve_xi(random_psd_instance(1), nash_params(2), SolverConfig(grid=50))
    assert rep.discarded_skew_forcing > 0
    _, rep = solve_xi(random_psd_instance(1), master_params(), SolverConfig(grid=50))
    assert rep.discarded_skew_forcing == 0


def test_direct_quadrature_equals_recursion():
    A = np.array([[-0.5, 1.0], [0.0, -1.0]])
    h, M = 0.05, 12
    times = h * np.arange(M + 1)
    sg = TabulatedSemigroup(times, [sla.expm(t * A) for t in times])
    prop = _Propagator(sg, h, M)
    assert prop.exact
    rng = np.random.default_rng(0)
    N = rng.standard_normal((M + 1, 3, 2, 2))
    X = rng.standard_normal((3, 2, 2))
    rec = prop.sweep(X, N, True)
    prop.exact = False
    direct = prop.sweep(X, N, True)
    assert np.abs(rec - direct).max() <= 1e-12


# ---------------------------------------------------------------- psi / phi / mu


def test_psi_phi_homogeneous():
    pd = random_psd_instance(0)
    pd = make_problem(A=pd.sg_A, B=pd.B, R=pd.R, Q=pd.Q, S=pd.S, T=1.0)
    sol = solve_coefficients(pd, master_params(), SolverConfig(grid=50))
    assert np.abs(sol.psiphi.psi).max() == 0 and np.abs(sol.psiphi.phi).max() == 0


def test_psi_pure_integration():
    pd = make_problem(A=[[0.0]], eta=[1.0], T=1.0)
    sol = solve_coefficients(pd, master_params(), SolverConfig(grid=40))
    assert np.allclose(sol.psiphi.psi[:, 0], 1.0 - sol.grid, atol=1e-13)


def test_psi_with_tanh_gain_against_oracle():
    pd = scalar_tanh(eta=[1.0])
    sol = solve_coefficients(pd, master_params(), SolverConfig(grid=2000))

    def rhs(t, y):
        p, psi = y
        return [p * p - 1.0, p * psi - 1.0]

    ref = solve_ivp(rhs, (1.0, 0.0), [0.0, 0.0], method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True)
    for t in (0.0, 0.3, 0.7):
        assert sol.psiphi.psi[int(round(t * 2000)), 0] == pytest.approx(ref.sol(t)[1], abs=1e-6)


def test_psi_grid_mismatch():
    pd = scalar_tanh()
    xi, _ = solve_xi(pd, master_params(), SolverConfig(grid=20))
    with pytest.raises(ValueError):
        solve_psi_phi(pd, master_params(), xi, SolverConfig(grid=40))


def test_mu_constant():
    pd = make_problem(A=[[0.0]], lambda_T=3.0, T=1.0)
    sol = solve_coefficients(pd, master_params(), SolverConfig(grid=10))
    assert np.all(sol.mu.mu == 3.0)


def test_mu_trace_term_tanh():
    pd = scalar_tanh(sigma=[[1.0]])
    sol = solve_coefficients(pd, master_params(), SolverConfig(grid=2000))
    assert sol.mu.mu[0] == pytest.approx(0.5 * math.log(math.cosh(1.0)), abs=1e-6)
    # 0.5 * ln(cosh 1) = 0.2168904...
    assert sol.mu.mu[0] == pytest.approx(0.2168904, abs=1e-6)


def test_mu_linear_in_c():
    pd = scalar_tanh(sigma=[[1.0]])
    g = np.linspace(0, 1, 101)
    P = np.tanh(1 - g)[:, None, None]
    xi = XiPath(g, P, np.zeros_like(P), P)
    pp = PsiPhiPath(g, np.zeros((101, 1)), np.zeros((101, 1)))
    m0 = solve_mu(pd, ParamVector(0, 1, 0), xi, pp).mu
    m1 = solve_mu(pd, ParamVector(0, 1, 1), xi, pp).mu
    assert np.allclose(m1, 2 * m0, rtol=1e-14)


def test_mu_grid_mismatch():
    g1, g2 = np.linspace(0, 1, 5), np.linspace(0, 1, 6)
    xi = XiPath(g1, *(np.zeros((5, 1, 1)),) * 3)
    pp = PsiPhiPath(g2, np.zeros((6, 1)), np.zeros((6, 1)))
    with pytest.raises(ValueError):
        solve_mu(scalar_tanh(), master_params(), xi, pp)


# ---------------------------------------------------------------- a priori bounds


def test_apriori_tanh():
    pd = scalar_tanh()
    xi, _ = solve_xi(pd, master_params(), SolverConfig(grid=400))
    rep = check_apriori(pd, master_params(), xi)
    assert rep.sup_P == pytest.approx(math.tanh(1.0), abs=1e-5)
    assert rep.sup_P <= rep.constants.C_P == 1.0
    assert rep.ok


def test_apriori_zero_costs():
    pd = make_problem(A=[[0.0]], T=1.0)
    xi, _ = solve_xi(pd, master_params(), SolverConfig(grid=10))
    rep = check_apriori(pd, master_params(), xi)
    assert rep.ok and rep.sup_P == 0 and rep.constants.C_Xi == 0


def test_apriori_gamma_bound_covers_upsilon_source():
    # Z = 0 but Gamma is driven by -Upsilon B Upsilon
    pd = scalar_tanh(S=[[1.0]])
    xi, rep = solve_xi(pd, master_params(), SolverConfig(grid=400))
    assert rep.bounds.sup_Gamma > 0
    assert rep.constants.C_Gamma_printed == 0
    assert rep.bounds.sup_Gamma <= rep.constants.C_Gamma
    assert not rep.bound_violations
