"""N-player Nash coefficients approach the Master equation as N grows."""

import numpy as np

from lqmfg import SolverConfig, convergence_sweep, make_problem

rng = np.random.default_rng(7)
n = 3


def psd():
    X = rng.standard_normal((n, n))
    return X @ X.T / n


pd = make_problem(
    A=0.3 * rng.standard_normal((n, n)) - 0.3 * np.eye(n),
    Q=psd() + 0.5 * np.eye(n),
    S=0.5 * psd() + 0.5 * np.eye(n),
    Z=0.5 * np.eye(n),
    Q_T=psd(),
    S_T=0.5 * psd(),
    eta=np.ones(n),
    zeta=np.ones(n),
    sigma=0.2 * np.eye(n),
    T=1.0,
)

rep = convergence_sweep(pd, [4, 8, 16, 32, 64], SolverConfig(grid=400))
print("   N   d_xi       d_P        d_Upsilon  d_Gamma    d_value")
for r in rep.rows:
    print(f"{r.N:4d}   {r.d_xi:.3e}  {r.d_P:.3e}  {r.d_Upsilon:.3e}  {r.d_Gamma:.3e}  {r.d_value:.3e}")
print(f"\nlog-log slope {rep.slope:.3f}")
