"""Monte Carlo cost under the Master feedback versus the value function."""

import numpy as np

from lqmfg import SimConfig, SolverConfig, eval_value, make_problem, master_params, simulate_paths, solve_coefficients, value_function

pd = make_problem(
    A=[[-0.5]], sigma=[[0.2]], Q=[[1.0]], S=[[0.5]], Z=[[0.2]], eta=[0.1], Q_T=[[0.5]], S_T=[[0.2]], T=1.0
)
vf = value_function(pd, solve_coefficients(pd, master_params(), SolverConfig(grid=1000)))
x0, y0 = np.ones(1), np.full(1, 0.5)
U = eval_value(vf, 0.0, x0, y0)

for paths in (1000, 4000, 16000):
    b = simulate_paths(pd, vf, SimConfig(dt=1e-3, n_paths=paths, seed=0, x0=x0, ybar0=y0))
    print(f"{paths:6d} paths: mean cost {b.mean_cost:.5f} +- {b.cost_se:.5f}   U = {U:.5f}   z = {(b.mean_cost - U) / b.cost_se:+.2f}")
