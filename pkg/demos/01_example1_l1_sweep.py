"""
Preferring an action with an L1 penalty
=======================================

A ten-state ring where action 0 is optimal everywhere. Planning on a model
estimated from 100 samples per state-action pair often picks action 1 by
mistake; charging a penalty for leaving action 0 repairs that.
"""

import numpy as np

from regmdp import constant_policy, policy_evaluation
from regmdp.experiments import SweepConfig, example1_model, run_sweep

true_model = example1_model(10)
best = policy_evaluation(true_model, constant_policy(0, 10)).per_state(true_model)
print(f"value per state of always-0 on the true model: {best:.4f}")

###############################################################################
# Sweep the penalty over 50 independently sampled models.

res = run_sweep(SweepConfig(grid=[0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 32.0], num_trials=50))
for p in res.points:
    print(f"lambda={p.param:6.2f}  {p.mean:.4f} +- {p.stderr:.4f}")

###############################################################################
# Past the forcing threshold every trial picks action 0, so the curve is flat.

print("plateau reached:", np.isclose(res.points[-1].mean, best))
