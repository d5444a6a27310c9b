"""
Random ring with noisy rewards
==============================

A 300-state ring whose rewards are drawn per state. Action 0 is optimal at
roughly 84% of states, but noisy reward estimates hide that.
"""

from regmdp import SamplingConfig, sample_transitions, solve_unregularized
from regmdp.experiments import SweepConfig, action_fraction, example2_model, optimal_action_fraction

true_model = example2_model(300, seed=0)
print(f"action 0 optimal at {optimal_action_fraction(true_model):.1%} of states")

noisy = sample_transitions(true_model, SamplingConfig(100, 1.5, seed=1, reward_mode="direct-noise"))
pol = solve_unregularized(noisy).policy
print(f"empirical policy picks action 1 at {action_fraction(true_model, pol, 1):.1%} of states")

###############################################################################
# Both regularizers recover most of the loss, then dip when pushed too far.

from regmdp.experiments import run_sweep

common = dict(example="example2", N=300, num_trials=30, reward_mode="direct-noise", reward_noise_std=1.5)
l1 = run_sweep(SweepConfig(grid=[0.4, 1.6, 3.2, 6.4], **common))
print(f"unregularized {l1.reference.mean:.4f} +- {l1.reference.stderr:.4f}")
for p in l1.points:
    print(f"lambda={p.param:<4} {p.mean:.4f} +- {p.stderr:.4f}")
