"""Policy evaluation and the unregularized, L1 and relative-entropy solvers.

Discount-1 problems are handled on the non-terminal block with terminal
values pinned to zero. All value iterations stop once the max-norm change of
one sweep drops to ``SolverConfig.tolerance``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .mdp import (
    MdpModel,
    ModelValidationError,
    NonAbsorbingError,
    Policy,
    PriorSpec,
    StartWeights,
    ValueFunction,
    expected_action_rewards,
    policy_reward,
    policy_transition,
    reaches_terminal,
)

TIE_BREAK_RULES = ("lowest-action-index",)


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-10
    max_iterations: int = 100_000
    tie_break: str = "lowest-action-index"

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ModelValidationError(f"tolerance must be positive, got {self.tolerance}")
        if int(self.max_iterations) < 1:
            raise ModelValidationError("max_iterations must be a positive integer")
        if self.tie_break not in TIE_BREAK_RULES:
            raise ModelValidationError(f"unknown tie-break rule {self.tie_break!r}")


@dataclass(frozen=True)
class SolveReport:
    policy: Policy
    values: ValueFunction
    iterations: int
    final_residual: float
    converged: bool
    method: str = "vi"
    config: SolverConfig = SolverConfig()
    params: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "params": self.params or {},
            "policy": self.policy.probs.tolist(),
            "values": self.values.values.tolist(),
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "converged": self.converged,
            "config": asdict(self.config),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SolveReport":
        return cls(
            policy=Policy(np.array(doc["policy"], dtype=float)),
            values=ValueFunction(np.array(doc["values"], dtype=float)),
            iterations=int(doc["iterations"]),
            final_residual=float(doc["final_residual"]),
            converged=bool(doc["converged"]),
            method=doc.get("method", "vi"),
            config=SolverConfig(**doc.get("config", {})),
            params=doc.get("params") or None,
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "SolveReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


# -- exact evaluation --------------------------------------------------------

def _check_absorbing(model: MdpModel, P_pi: np.ndarray) -> None:
    if model.discount < 1.0:
        return
    ok = reaches_terminal(P_pi > 0, model.terminal_states)
    if not ok.all():
        raise NonAbsorbingError(int(np.flatnonzero(~ok)[0]))


def _solve_block(model: MdpModel, P_pi: np.ndarray, b: np.ndarray, transpose: bool = False) -> np.ndarray:
    idx = model.nonterminal
    out = np.zeros(model.num_states)
    if len(idx) == 0:
        return out
    M = np.eye(len(idx)) - model.discount * P_pi[np.ix_(idx, idx)]
    if transpose:
        M = M.T
    try:
        out[idx] = np.linalg.solve(M, b[idx])
    except np.linalg.LinAlgError as exc:
        raise NonAbsorbingError(int(idx[0]), f"non-absorbing chain: singular system ({exc})") from exc
    return out


def policy_evaluation(model: MdpModel, policy: Policy) -> ValueFunction:
    """Exact ``v = (I - gamma P^pi)^{-1} r^pi`` with terminal values fixed at 0."""
    P_pi = policy_transition(model, policy)
    r_pi = policy_reward(model, policy)
    _check_absorbing(model, P_pi)
    v = _solve_block(model, P_pi, r_pi)
    resid = np.abs(v - model.discount * P_pi @ v - r_pi).max()
    if not resid <= 1e-8 * (1.0 + np.abs(r_pi).max()):
        raise NonAbsorbingError(int(np.argmax(np.abs(v))), f"non-absorbing chain: linear solve residual {resid:.3g}")
    return ValueFunction(v)


def _weights(model: MdpModel, e) -> np.ndarray:
    w = e.weights if isinstance(e, StartWeights) else StartWeights(e).weights
    if w.shape != (model.num_states,):
        raise ModelValidationError(f"start weights length {len(w)} != {model.num_states}")
    return w


def objective(model: MdpModel, policy: Policy, e) -> float:
    """``e^T v^pi``."""
    return float(_weights(model, e) @ policy_evaluation(model, policy).values)


def visitation(model: MdpModel, policy: Policy, e) -> np.ndarray:
    """Discounted visitation counts ``w = (I - gamma P^pi)^{-T} e``.

    At discount 1 the count at terminal states is infinite; it is reported as 0
    there, which leaves ``w^T r^pi`` unchanged since terminal rewards vanish.
    """
    w0 = _weights(model, e)
    P_pi = policy_transition(model, policy)
    _check_absorbing(model, P_pi)
    if model.discount < 1.0:
        return np.linalg.solve((np.eye(model.num_states) - model.discount * P_pi).T, w0)
    return _solve_block(model, P_pi, w0, transpose=True)


def relative_entropy(policy: Policy, prior_probs: np.ndarray) -> np.ndarray:
    """Per-state ``sum_a pi log(pi / q)``; zero-probability actions contribute 0."""
    p = policy.probs
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(prior_probs)), 0.0)
    return terms.sum(axis=1)


def re_objective(model: MdpModel, policy: Policy, e, kappa: float, prior_probs: np.ndarray) -> float:
    """Regularized objective ``sum_s w_s (r^pi_s - kappa * KL(pi_s || q_s))``."""
    w = visitation(model, policy, e)
    return float(w @ (policy_reward(model, policy) - kappa * relative_entropy(policy, prior_probs)))


def entropy_objective(model: MdpModel, policy: Policy, e, kappa: float,
                      action_bonus: Optional[np.ndarray] = None) -> float:
    """Shannon-regularized objective with per-(s, a) rewards shifted by ``action_bonus``."""
    w = visitation(model, policy, e)
    r = expected_action_rewards(model)
    if action_bonus is not None:
        r = r + action_bonus
    p = policy.probs
    with np.errstate(divide="ignore", invalid="ignore"):
        neg_ent = np.where(p > 0, p * np.log(p), 0.0).sum(axis=1)
    return float(w @ ((p * r).sum(axis=1) - kappa * neg_ent))


# -- value iteration ---------------------------------------------------------

def _q_values(model: MdpModel, r_sa: np.ndarray, v: np.ndarray) -> np.ndarray:
    return r_sa + model.discount * (model.transitions @ v).T


def _greedy(q: np.ndarray, prefer: Optional[np.ndarray] = None) -> np.ndarray:
    """Exact argmax per row; lowest index wins ties, after preferred actions if given."""
    best = q.max(axis=1, keepdims=True)
    ties = q == best
    if prefer is not None:
        ties_pref = ties & prefer
        ties = np.where(ties_pref.any(axis=1, keepdims=True), ties_pref, ties)
    return ties.argmax(axis=1)


def _hard_vi(model: MdpModel, r_sa: np.ndarray, cfg: SolverConfig):
    term = model.terminal_mask
    r_sa = np.where(term[:, None], 0.0, r_sa)
    v = np.zeros(model.num_states)
    resid = np.inf
    it = 0
    while it < cfg.max_iterations:
        new = _q_values(model, r_sa, v).max(axis=1)
        new[term] = 0.0
        resid = float(np.abs(new - v).max())
        v = new
        it += 1
        if resid <= cfg.tolerance:
            break
    return v, _q_values(model, r_sa, v), it, resid


def _check_policy_absorbing(model: MdpModel, policy: Policy) -> None:
    _check_absorbing(model, policy_transition(model, policy))


def _hard_solve(model: MdpModel, r_sa: np.ndarray, cfg: SolverConfig, prefer=None, method="vi", params=None):
    v, q, it, resid = _hard_vi(model, r_sa, cfg)
    actions = _greedy(q, prefer)
    actions[model.terminal_mask] = 0
    policy = Policy.deterministic(actions, model.num_actions)
    _check_policy_absorbing(model, policy)
    return SolveReport(policy, ValueFunction(v), it, resid, resid <= cfg.tolerance, method, cfg, params)


def solve_unregularized(model: MdpModel, cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Hard-max value iteration returning a deterministic greedy policy."""
    return _hard_solve(model, expected_action_rewards(model), cfg)


def l1_rewards(model: MdpModel, prior: PriorSpec) -> np.ndarray:
    """Expected rewards with ``lam`` subtracted from every non-preferred action."""
    _check_prior(model, prior)
    return expected_action_rewards(model) - prior.lam * prior.penalty()


def solve_l1(model: MdpModel, prior: PriorSpec, cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Value iteration on rewards penalized by ``lam`` off the preferred set.

    Returned values are those of the penalized rewards. Exact ties go to a
    preferred action, then to the lowest index.
    """
    prefer = prior.penalty() == 0
    return _hard_solve(model, l1_rewards(model, prior), cfg, prefer, "l1", {"lambda": prior.lam})


def _check_prior(model: MdpModel, prior: PriorSpec) -> None:
    if (prior.num_states, prior.num_actions) != (model.num_states, model.num_actions):
        raise ModelValidationError("prior dimensions do not match the model")


def _soft_vi(model: MdpModel, r_sa: np.ndarray, kappa: float, cfg: SolverConfig):
    term = model.terminal_mask
    r_sa = np.where(term[:, None], 0.0, r_sa)
    v = np.zeros(model.num_states)
    resid = np.inf
    it = 0
    while it < cfg.max_iterations:
        # scipy's logsumexp subtracts the row max before exponentiating
        new = kappa * logsumexp(_q_values(model, r_sa, v) / kappa, axis=1)
        new[term] = 0.0
        resid = float(np.abs(new - v).max())
        v = new
        it += 1
        if resid <= cfg.tolerance:
            break
    logits = _q_values(model, r_sa, v) / kappa
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    return v, probs, it, resid


def _soft_solve(model, r_sa, kappa, cfg, method, params):
    if not kappa > 0:
        raise ModelValidationError(f"kappa must be positive, got {kappa}")
    v, probs, it, resid = _soft_vi(model, r_sa, kappa, cfg)
    policy = Policy(probs)
    _check_policy_absorbing(model, policy)
    return SolveReport(policy, ValueFunction(v), it, resid, resid <= cfg.tolerance, method, cfg, params)


def solve_re(model: MdpModel, prior: PriorSpec, cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Soft value iteration biased toward ``prior.prior_probs`` with strength ``kappa``.

    Solves ``v_s = kappa * logsumexp_a((r_s^a + kappa log q_s^a + gamma P^a v) / kappa)``
    and returns the matching softmax policy.
    """
    _check_prior(model, prior)
    bonus = prior.kappa * np.log(prior.prior_probs)
    return _soft_solve(model, expected_action_rewards(model) + bonus, prior.kappa, cfg, "re",
                       {"kappa": prior.kappa, "prior_probs": prior.prior_probs.tolist()})


def solve_shannon(model: MdpModel, kappa: float, cfg: SolverConfig = SolverConfig(),
                  action_bonus: Optional[np.ndarray] = None) -> SolveReport:
    """Plain Shannon-entropy soft value iteration, optionally on shifted rewards."""
    r = expected_action_rewards(model)
    if action_bonus is not None:
        r = r + action_bonus
    return _soft_solve(model, r, kappa, cfg, "shannon", {"kappa": kappa})


def bellman_residual(model: MdpModel, report: SolveReport, prior: Optional[PriorSpec] = None) -> float:
    """Max-norm gap between the report's values and one more operator application."""
    v = report.values.values
    term = model.terminal_mask
    if report.method in ("re", "shannon"):
        kappa = prior.kappa if prior is not None else report.params["kappa"]
        r = expected_action_rewards(model)
        if report.method == "re":
            q = prior.prior_probs if prior is not None else np.array(report.params["prior_probs"])
            r = r + kappa * np.log(q)
        tv = kappa * logsumexp(_q_values(model, r, v) / kappa, axis=1)
    else:
        r = l1_rewards(model, prior) if report.method == "l1" else expected_action_rewards(model)
        tv = _q_values(model, r, v).max(axis=1)
    tv[term] = 0.0
    return float(np.abs(tv - v).max())


# -- baselines ---------------------------------------------------------------

def one_shot_policy(model: MdpModel) -> Policy:
    """Per-state argmax of the immediate expected reward."""
    return Policy.deterministic(_greedy(expected_action_rewards(model)), model.num_actions)


def one_shot_regularized(model: MdpModel, prior: PriorSpec) -> Policy:
    """Immediate-reward rule with a ``lam`` handicap on non-preferred actions.

    A non-preferred action is chosen only when its reward minus ``lam`` strictly
    exceeds the best preferred reward.
    """
    _check_prior(model, prior)
    r = expected_action_rewards(model)
    pref = prior.penalty() == 0
    actions = np.empty(model.num_states, dtype=int)
    for s in range(model.num_states):
        p_idx = np.flatnonzero(pref[s])
        best_pref = p_idx[np.argmax(r[s, p_idx])]
        actions[s] = best_pref
        others = np.flatnonzero(~pref[s])
        if len(others):
            cand = others[np.argmax(r[s, others])]
            if r[s, cand] - prior.lam > r[s, best_pref]:
                actions[s] = cand
    return Policy.deterministic(actions, model.num_actions)


def constant_policy(action: int, num_states: int, num_actions: int = 2) -> Policy:
    if not 0 <= action < num_actions:
        raise ModelValidationError(f"action {action} out of range [0, {num_actions})")
    return Policy.deterministic(np.full(num_states, action), num_actions)
