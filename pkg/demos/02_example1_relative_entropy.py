"""
Relative entropy against a biased prior
=======================================

Same ring, solved with soft value iteration against a prior that puts mass
``1 - q`` on action 0. ``q = 0.5`` is plain entropy regularization.
"""

from regmdp import PriorSpec, solve_re
from regmdp.experiments import SweepConfig, example1_model, run_sweep

kappa = 0.25
grid = [(kappa, q) for q in (0.5, 0.1, 1e-3, 1e-6, 1e-12)]
res = run_sweep(SweepConfig(grid=grid, method="re", num_trials=50))
for p in res.points:
    print(f"q={p.param[1]:<8g} {p.mean:.4f} +- {p.stderr:.4f}  mass on action 0: {p.preferred_mass:.3f}")

###############################################################################
# The soft policy on the true model itself. Small q pushes it toward action 0.

m = example1_model(10)
for q in (0.5, 1e-6):
    rep = solve_re(m, PriorSpec.single(10, 2, 0, kappa=kappa, q_other=q))
    print(q, rep.policy.probs[:3, 0].round(4), f"{rep.iterations} iterations")
