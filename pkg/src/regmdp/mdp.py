"""Tabular MDP types and policy-induced quantities.

Storage convention: ``transitions[a, s, t]`` is the probability of moving from
state ``s`` to ``t`` under action ``a``; ``rewards`` has the same layout.
Policies are ``(num_states, num_actions)`` arrays of row distributions.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order

ROW_TOL = 1e-9
Q_FLOOR = 1e-12
MODEL_FORMAT_VERSION = 1


class ModelValidationError(ValueError):
    """Raised when a model, policy or prior violates one of its invariants."""


class NonAbsorbingError(ValueError):
    """Raised when some state cannot reach a terminal state at discount 1."""

    def __init__(self, state: int, message: Optional[str] = None):
        self.state = int(state)
        super().__init__(message or f"non-absorbing chain: state {state} never reaches a terminal state")


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


def _check_rows(mat: np.ndarray, what: str) -> np.ndarray:
    """Reject negative entries or rows off by more than ROW_TOL, renormalize the rest."""
    if not np.all(np.isfinite(mat)):
        raise ModelValidationError(f"{what}: non-finite entries")
    if np.any(mat < 0):
        idx = tuple(int(i) for i in np.argwhere(mat < 0)[0])
        raise ModelValidationError(f"{what}: negative probability at index {idx}")
    sums = mat.sum(axis=-1)
    bad = np.abs(sums - 1.0) > ROW_TOL
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ModelValidationError(f"{what}: row {idx} sums to {sums[idx]!r}, not 1")
    return mat / sums[..., None]


def reaches_terminal(support: np.ndarray, terminal: Iterable[int]) -> np.ndarray:
    """Boolean mask of states with a path to some terminal state.

    ``support`` is an ``(S, S)`` boolean adjacency matrix (``s -> t`` edges).
    """
    n = support.shape[0]
    terminal = list(terminal)
    if not terminal:
        return np.zeros(n, dtype=bool)
    # reversed graph plus a virtual source wired to every terminal state
    rows, cols = np.nonzero(support.T)
    rows = np.concatenate([rows, np.full(len(terminal), n)])
    cols = np.concatenate([cols, terminal])
    graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n + 1, n + 1))
    order = breadth_first_order(graph, n, directed=True, return_predecessors=False)
    mask = np.zeros(n + 1, dtype=bool)
    mask[order] = True
    return mask[:n]


@dataclass(frozen=True)
class MdpModel:
    """A tabular MDP ``(S, A, P, r, gamma)`` with a set of absorbing terminal states.

    Rows are validated and renormalized on construction. At ``discount == 1``
    every non-terminal state must reach a terminal state through the union of
    the action supports; per-policy absorption is checked by the solvers.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    discount: float
    terminal_states: tuple = ()

    def __post_init__(self):
        P = np.asarray(self.transitions, dtype=float)
        R = np.asarray(self.rewards, dtype=float)
        if P.ndim != 3 or P.shape[1] != P.shape[2]:
            raise ModelValidationError(f"transitions must have shape (A, S, S), got {P.shape}")
        if R.shape != P.shape:
            raise ModelValidationError(f"rewards shape {R.shape} != transitions shape {P.shape}")
        if P.shape[0] < 1 or P.shape[1] < 1:
            raise ModelValidationError("need at least one state and one action")
        if not np.all(np.isfinite(R)):
            raise ModelValidationError("rewards: non-finite entries")
        gamma = float(self.discount)
        if not 0.0 <= gamma <= 1.0:
            raise ModelValidationError(f"discount must lie in [0, 1], got {gamma}")
        P = _check_rows(P, "transitions")
        n = P.shape[1]
        term = tuple(sorted({int(z) for z in self.terminal_states}))
        for z in term:
            if not 0 <= z < n:
                raise ModelValidationError(f"terminal state {z} out of range [0, {n})")
            unit = np.zeros(n)
            unit[z] = 1.0
            for a in range(P.shape[0]):
                if not np.array_equal(P[a, z], unit):
                    raise ModelValidationError(f"terminal state {z} is not absorbing under action {a}")
                if R[a, z, z] != 0.0:
                    raise ModelValidationError(f"terminal state {z} has nonzero reward under action {a}")
        if gamma == 1.0:
            if not term:
                raise ModelValidationError("discount 1 requires at least one terminal state")
            ok = reaches_terminal((P > 0).any(axis=0), term)
            if not ok.all():
                s = int(np.flatnonzero(~ok)[0])
                raise NonAbsorbingError(s, f"discount 1: state {s} cannot reach a terminal state under any policy")
        object.__setattr__(self, "transitions", _frozen(P))
        object.__setattr__(self, "rewards", _frozen(R))
        object.__setattr__(self, "discount", gamma)
        object.__setattr__(self, "terminal_states", term)

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def terminal_mask(self) -> np.ndarray:
        mask = np.zeros(self.num_states, dtype=bool)
        mask[list(self.terminal_states)] = True
        return mask

    @property
    def nonterminal(self) -> np.ndarray:
        return np.flatnonzero(~self.terminal_mask)

    def replace(self, **changes) -> "MdpModel":
        fields = dict(transitions=self.transitions, rewards=self.rewards,
                      discount=self.discount, terminal_states=self.terminal_states)
        fields.update(changes)
        return MdpModel(**fields)

    def digest(self) -> str:
        """SHA-256 over the tensors, discount and terminal set."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.transitions).tobytes())
        h.update(np.ascontiguousarray(self.rewards).tobytes())
        h.update(repr((self.discount, self.terminal_states, self.transitions.shape)).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class Policy:
    """Per-state action distributions, ``probs[s, a]``."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 2:
            raise ModelValidationError(f"policy must be 2-D (S, A), got shape {p.shape}")
        object.__setattr__(self, "probs", _frozen(_check_rows(p, "policy")))

    @classmethod
    def deterministic(cls, actions: Sequence[int], num_actions: int) -> "Policy":
        actions = np.asarray(actions, dtype=int)
        if np.any((actions < 0) | (actions >= num_actions)):
            raise ModelValidationError(f"action index out of range [0, {num_actions})")
        probs = np.zeros((len(actions), num_actions))
        probs[np.arange(len(actions)), actions] = 1.0
        return cls(probs)

    @property
    def num_states(self) -> int:
        return self.probs.shape[0]

    @property
    def num_actions(self) -> int:
        return self.probs.shape[1]

    def greedy_actions(self) -> np.ndarray:
        return self.probs.argmax(axis=1)

    def is_deterministic(self) -> bool:
        return bool(np.all((self.probs == 0.0) | (self.probs == 1.0)))


@dataclass(frozen=True)
class ValueFunction:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ModelValidationError("value function must be a finite vector")
        object.__setattr__(self, "values", _frozen(v))

    def per_state(self, model: MdpModel) -> float:
        """Mean value over non-terminal states."""
        idx = model.nonterminal
        return float(self.values[idx].mean()) if len(idx) else 0.0


@dataclass(frozen=True)
class StartWeights:
    """Nonnegative start-state weights ``e`` of the objective ``e^T v``."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or not np.all(np.isfinite(w)) or np.any(w < 0) or not np.any(w > 0):
            raise ModelValidationError("start weights must be a nonnegative vector with a positive entry")
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def uniform(cls, model: MdpModel) -> "StartWeights":
        return cls(np.ones(model.num_states))

    @classmethod
    def nonterminal_uniform(cls, model: MdpModel) -> "StartWeights":
        return cls((~model.terminal_mask).astype(float))


@dataclass(frozen=True)
class PriorSpec:
    """Preferred actions per state plus regularization strengths.

    ``preferred`` maps each state to a nonempty set of preferred actions; states
    absent from the map have no preference (every action counts as preferred).
    ``prior_probs`` is the reference distribution used by the relative-entropy
    solver, uniform when omitted.
    """

    num_states: int
    num_actions: int
    preferred: Mapping[int, frozenset] = field(default_factory=dict)
    lam: float = 0.0
    kappa: float = 1.0
    prior_probs: Optional[np.ndarray] = None

    def __post_init__(self):
        S, A = int(self.num_states), int(self.num_actions)
        pref = {}
        for s, acts in dict(self.preferred).items():
            s = int(s)
            acts = frozenset(int(a) for a in (acts if isinstance(acts, Iterable) else [acts]))
            if not 0 <= s < S:
                raise ModelValidationError(f"preferred state {s} out of range")
            if not acts or any(not 0 <= a < A for a in acts):
                raise ModelValidationError(f"state {s}: preferred actions {sorted(acts)} invalid")
            pref[s] = acts
        if not self.lam >= 0:
            raise ModelValidationError(f"lambda must be nonnegative, got {self.lam}")
        if not self.kappa > 0:
            raise ModelValidationError(f"kappa must be positive, got {self.kappa}")
        q = np.full((S, A), 1.0 / A) if self.prior_probs is None else np.asarray(self.prior_probs, dtype=float)
        if q.shape != (S, A):
            raise ModelValidationError(f"prior_probs shape {q.shape} != {(S, A)}")
        q = _check_rows(q, "prior_probs")
        if q.min() < Q_FLOOR:
            raise ModelValidationError(f"prior probability {q.min()!r} below floor {Q_FLOOR}")
        object.__setattr__(self, "preferred", pref)
        object.__setattr__(self, "prior_probs", _frozen(q))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "kappa", float(self.kappa))

    @classmethod
    def single(cls, num_states: int, num_actions: int, action: int = 0, *, lam: float = 0.0,
               kappa: float = 1.0, q_other: Optional[float] = None,
               states: Optional[Iterable[int]] = None) -> "PriorSpec":
        """One preferred ``action`` at every state in ``states`` (default all).

        ``q_other`` is the prior mass of each non-preferred action, so the
        preferred action gets ``1 - q_other * (num_actions - 1)``.
        """
        states = range(num_states) if states is None else list(states)
        q = None
        if q_other is not None:
            if num_actions < 2:
                raise ModelValidationError("q_other needs at least two actions")
            q = np.full((num_states, num_actions), 1.0 / num_actions)
            for s in states:
                q[s] = q_other
                q[s, action] = 1.0 - q_other * (num_actions - 1)
        return cls(num_states, num_actions, {s: frozenset([action]) for s in states},
                   lam=lam, kappa=kappa, prior_probs=q)

    def penalty(self) -> np.ndarray:
        """``(S, A)`` indicator of non-preferred actions."""
        out = np.zeros((self.num_states, self.num_actions))
        for s, acts in self.preferred.items():
            out[s] = 1.0
            out[s, list(acts)] = 0.0
        return out

    def is_preferred(self, s: int, a: int) -> bool:
        acts = self.preferred.get(s)
        return acts is None or a in acts


def expected_action_rewards(model: MdpModel) -> np.ndarray:
    """``(S, A)`` matrix of ``r_s^a = sum_t P^a_{st} r^a_{st}``."""
    return np.einsum("ast,ast->sa", model.transitions, model.rewards)


def _check_shapes(model: MdpModel, policy: Policy):
    if policy.probs.shape != (model.num_states, model.num_actions):
        raise ModelValidationError(
            f"policy shape {policy.probs.shape} does not match model ({model.num_states}, {model.num_actions})")


def policy_transition(model: MdpModel, policy: Policy) -> np.ndarray:
    """``P^pi[s, t] = sum_a pi[s, a] P^a[s, t]``."""
    _check_shapes(model, policy)
    return np.einsum("sa,ast->st", policy.probs, model.transitions)


def policy_reward(model: MdpModel, policy: Policy) -> np.ndarray:
    _check_shapes(model, policy)
    return np.einsum("sa,sa->s", policy.probs, expected_action_rewards(model))


# -- model files ------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _nested(arr: np.ndarray, indent: int = 0) -> str:
    if arr.ndim == 1:
        return "[" + ", ".join(_fmt(x) for x in arr) + "]"
    pad = " " * (indent + 2)
    inner = (",\n" + pad).join(_nested(sub, indent + 2) for sub in arr)
    return "[\n" + pad + inner + "\n" + " " * indent + "]"


def model_to_text(model: MdpModel) -> str:
    parts = [
        f'  "version": {MODEL_FORMAT_VERSION}',
        f'  "num_states": {model.num_states}',
        f'  "num_actions": {model.num_actions}',
        f'  "discount": {_fmt(model.discount)}',
        f'  "terminal_states": {json.dumps(list(model.terminal_states))}',
        f'  "transitions": {_nested(model.transitions, 2)}',
        f'  "rewards": {_nested(model.rewards, 2)}',
    ]
    return "{\n" + ",\n".join(parts) + "\n}\n"


def model_from_dict(doc: dict) -> MdpModel:
    required = ("version", "num_states", "num_actions", "discount", "terminal_states", "transitions", "rewards")
    missing = [k for k in required if k not in doc]
    if missing:
        raise ModelValidationError(f"model document missing fields: {', '.join(missing)}")
    if doc["version"] != MODEL_FORMAT_VERSION:
        raise ModelValidationError(f"unsupported model version {doc['version']!r}")
    model = MdpModel(np.array(doc["transitions"], dtype=float), np.array(doc["rewards"], dtype=float),
                     doc["discount"], tuple(doc["terminal_states"]))
    if (model.num_states, model.num_actions) != (doc["num_states"], doc["num_actions"]):
        raise ModelValidationError("declared num_states/num_actions disagree with tensor shapes")
    return model


def save_model(model: MdpModel, path) -> None:
    Path(path).write_text(model_to_text(model))


def load_model(path) -> MdpModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelValidationError(f"{path}: not a valid model document ({exc})") from exc
    return model_from_dict(doc)
