"""Walk through the convergence constants on a small quadratic.

Computes m and M exactly, estimates K along a trajectory, then compares a
seeded ensemble against the decaying-step bound and a constant-step run
against its linear envelope and plateau.

    python3 demos/bounds_walkthrough.py
"""

import numpy as np

from rapsa.core import Constant, InverseTime
from rapsa.engine import EngineConfig, run
from rapsa.problems import closed_form_optimum, estimate_constants, estimate_K, generate_lmmse
from rapsa.theory import RateConstants, accuracy_plan, check_theorem1, check_theorem2, constant_C, plateau

prob = generate_lmmse(32, 500, seed=0)
x_star, F_star = closed_form_optimum(prob)
m, M = estimate_constants(prob)
x0 = np.zeros(32)
F0err = prob.objective(x0) - F_star
r = 4 / 8
print(f"m = {m:.4f}, M = {M:.4f}, F(x0) - F* = {F0err:.4f}")

gamma0, T0 = 0.01, 200.0
runs = [run(EngineConfig(I=4, B=8, L=1, schedule=InverseTime(gamma0, T0), T=2000, seed=s, eval_every=200),
            prob, x0, keep_iterates=True) for s in range(30)]
K = estimate_K(prob, [x for tr in runs for x in tr.iterates]).K
rc = RateConstants(m, M, K, r, F0err=F0err, gamma0=gamma0, T0=T0)
print(f"K = {K:.1f}, C = {constant_C(rc):.1f}")
rep = check_theorem1(runs, rc, F_star)
for row in list(rep.rows())[::2]:
    print(f"  t={row['t']:5d}  mean error {row['observed']:.3e}  bound {row['bound']:.3e}")

gamma = 0.01
runs = [run(EngineConfig(I=4, B=8, L=1, schedule=Constant(gamma), T=2000, seed=s, eval_every=100), prob, x0)
        for s in range(30)]
rc2 = RateConstants(m, M, K, r, F0err=F0err, gamma=gamma)
rep = check_theorem2(runs, rc2, F_star)
print(f"constant step: tail mean {rep.extra['tail_mean']:.3e}, plateau {plateau(rc2):.3e}, "
      f"worst ratio to envelope {rep.max_ratio:.3f}")

# step and iteration count that the bounds promise for a target accuracy
eps = 0.05
g, t_min = accuracy_plan(eps, 0.5, rc2)
print(f"for eps = {eps:.3g}: gamma = {g:.3g}, at least {t_min} iterations")
