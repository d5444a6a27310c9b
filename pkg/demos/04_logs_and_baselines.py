"""
From session logs to a policy
=============================

Simulate logs under a random behavior policy, rebuild the model by counting,
and compare the planned policies against one-step baselines.
"""

import numpy as np

from regmdp import Policy, PriorSpec, StartWeights, estimate_from_logs, generate_synthetic_logs, model_distance
from regmdp.experiments import delayed_reward_model, evaluate_policy_suite, example1_model, format_suite

true_model = example1_model(10)
behavior = Policy(np.full((10, 2), 0.5))
logs = generate_synthetic_logs(true_model, behavior, 2000, StartWeights.nonterminal_uniform(true_model), 100, seed=5)
print(logs.to_text().splitlines()[0])

est, counts = estimate_from_logs(logs, 10, 2)
print(f"{logs.num_steps} steps, unobserved pairs: {counts.unobserved}")
print(model_distance(est, true_model))

prior = PriorSpec.single(10, 2, 0, lam=4.0, kappa=0.25, q_other=1e-6)
print(format_suite(evaluate_policy_suite(true_model, est, prior), "best"))

###############################################################################
# One-step baselines grab the immediate reward and miss the delayed one.

m = delayed_reward_model()
rows = evaluate_policy_suite(m, m, PriorSpec.single(3, 2, 0, lam=1.0), StartWeights([1.0, 1.0, 0.0]))
print(format_suite(rows, "best"))
