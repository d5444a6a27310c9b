"""Empirical models: seeded resampling of a true model, log ingestion, distances.

Random streams use numpy's Philox4x32-10 counter-based generator seeded
through ``SeedSequence``. Independent streams (per trial, per purpose) come
from ``derive_seed``, which mixes integer keys into the seed's spawn key, so
results never depend on the order in which trials are executed.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .mdp import MdpModel, ModelValidationError, Policy, StartWeights

RNG_ALGORITHM = "numpy.Philox4x32-10/SeedSequence"
REWARD_MODES = ("exact", "per-sample-noise", "direct-noise")


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(base_seed: int, *keys: int) -> int:
    """A 64-bit seed for the substream ``keys`` of ``base_seed``."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class SamplingConfig:
    samples_per_state_action: int = 100
    reward_noise_std: float = 0.0
    seed: int = 0
    reward_mode: str = "exact"

    def __post_init__(self):
        if int(self.samples_per_state_action) < 1:
            raise ModelValidationError("samples_per_state_action must be at least 1")
        if not self.reward_noise_std >= 0:
            raise ModelValidationError("reward_noise_std must be nonnegative")
        if self.reward_mode not in REWARD_MODES:
            raise ModelValidationError(f"reward_mode must be one of {REWARD_MODES}")
        if not 0 <= int(self.seed) < 2**64:
            raise ModelValidationError("seed must be a 64-bit unsigned integer")


def sample_transitions(true_model: MdpModel, cfg: SamplingConfig) -> MdpModel:
    """Re-estimate every non-terminal row of ``true_model`` from ``n`` draws.

    Reward handling depends on ``cfg.reward_mode``:

    * ``exact`` copies the true rewards.
    * ``per-sample-noise`` averages ``r + N(0, sigma^2)`` over the draws that
      landed on each next state; unobserved entries get reward 0.
    * ``direct-noise`` adds a single ``N(0, sigma^2)`` draw to every observed entry.
    """
    rng = make_rng(cfg.seed)
    n = int(cfg.samples_per_state_action)
    Pbar, Rbar = true_model.transitions, true_model.rewards
    idx = true_model.nonterminal
    counts = np.zeros(Pbar.shape, dtype=np.int64)
    # clip guards multinomial against round-off in pvals
    pvals = np.clip(Pbar[:, idx, :], 0.0, None)
    pvals = pvals / pvals.sum(axis=-1, keepdims=True)
    counts[:, idx, :] = rng.multinomial(n, pvals)
    P = Pbar.copy()
    P[:, idx, :] = counts[:, idx, :] / n
    seen = counts > 0
    if cfg.reward_mode == "exact":
        R = Rbar.copy()
    else:
        sigma = float(cfg.reward_noise_std)
        rows = np.zeros(Pbar.shape, dtype=bool)
        rows[:, idx, :] = True
        c = np.where(seen, counts, 1)
        if cfg.reward_mode == "per-sample-noise":
            # mean of c iid N(0, sigma^2) draws
            noise = rng.normal(0.0, 1.0, size=Pbar.shape) * sigma / np.sqrt(c)
        else:
            noise = rng.normal(0.0, sigma, size=Pbar.shape)
        R = np.where(rows, np.where(seen, Rbar + noise, 0.0), Rbar)
    return true_model.replace(transitions=P, rewards=R)


# -- session logs ------------------------------------------------------------

Step = Tuple[int, float, int]


@dataclass
class Session:
    start: int
    steps: List[Step] = field(default_factory=list)
    truncated: bool = False

    def to_line(self) -> str:
        body = " ".join(f"({a},{r!r},{t})" for a, r, t in self.steps)
        return f"{self.start}; {body}; {'TRUNC' if self.truncated else 'END'}"


@dataclass
class SessionLog:
    sessions: List[Session] = field(default_factory=list)

    def __len__(self):
        return len(self.sessions)

    @property
    def num_steps(self) -> int:
        return sum(len(s.steps) for s in self.sessions)

    def to_text(self) -> str:
        return "".join(s.to_line() + "\n" for s in self.sessions)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def parse(cls, text: str) -> "SessionLog":
        sessions = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            sessions.append(_parse_line(line, lineno))
        return cls(sessions)

    @classmethod
    def load(cls, path) -> "SessionLog":
        return cls.parse(Path(path).read_text())


_STEP = re.compile(r"\(\s*(-?\d+)\s*,\s*([^,()\s]+)\s*,\s*(-?\d+)\s*\)")


class LogFormatError(ValueError):
    def __init__(self, lineno: int, msg: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {msg}")


def _parse_line(line: str, lineno: int) -> Session:
    parts = [p.strip() for p in line.split(";")]
    if len(parts) != 3:
        raise LogFormatError(lineno, "expected 'start; steps; END|TRUNC'")
    start, body, marker = parts
    if marker not in ("END", "TRUNC"):
        raise LogFormatError(lineno, f"missing terminal marker, got {marker!r}")
    try:
        start = int(start)
    except ValueError:
        raise LogFormatError(lineno, f"bad start state {start!r}") from None
    steps = []
    pos = 0
    for m in _STEP.finditer(body):
        if body[pos:m.start()].strip():
            raise LogFormatError(lineno, f"unparseable text {body[pos:m.start()].strip()!r}")
        try:
            steps.append((int(m.group(1)), float(m.group(2)), int(m.group(3))))
        except ValueError:
            raise LogFormatError(lineno, f"bad reward {m.group(2)!r}") from None
        pos = m.end()
    if body[pos:].strip():
        raise LogFormatError(lineno, f"unparseable text {body[pos:].strip()!r}")
    return Session(start, steps, marker == "TRUNC")


@dataclass
class CountsReport:
    """Per-(s, a) observation counts and the pairs that were never observed."""

    counts: np.ndarray
    unobserved: List[Tuple[int, int]]

    def to_dict(self) -> dict:
        return {
            "unobserved": [list(p) for p in self.unobserved],
            "counts": self.counts.tolist(),
            "total_transitions": int(self.counts.sum()),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def estimate_from_logs(logs: SessionLog, num_states: int, num_actions: int,
                       terminal: Optional[int] = None, discount: float = 1.0):
    """Maximum-likelihood tensors from logged transitions.

    ``terminal`` defaults to the last state. Rewards are averaged per
    ``(s, a, t)``. Never-observed ``(s, a)`` pairs move to the terminal state
    with reward 0 and are listed in the returned ``CountsReport``.
    """
    S, A = int(num_states), int(num_actions)
    z = S - 1 if terminal is None else int(terminal)
    if not 0 <= z < S:
        raise ModelValidationError(f"terminal state {z} out of range")
    n = np.zeros((A, S, S))
    rsum = np.zeros((A, S, S))
    for i, sess in enumerate(logs.sessions):
        s = sess.start
        if not 0 <= s < S:
            raise ModelValidationError(f"session {i}: start state {s} out of range [0, {S})")
        for a, r, t in sess.steps:
            if not 0 <= a < A:
                raise ModelValidationError(f"session {i}: action {a} out of range [0, {A})")
            if not 0 <= t < S:
                raise ModelValidationError(f"session {i}: state {t} out of range [0, {S})")
            if s != z:
                n[a, s, t] += 1
                rsum[a, s, t] += r
            s = t
        if not sess.truncated and sess.steps and s != z:
            raise ModelValidationError(f"session {i}: marked END but last state {s} is not terminal {z}")
    counts = n.sum(axis=2).T.astype(np.int64)
    with np.errstate(invalid="ignore", divide="ignore"):
        P = n / n.sum(axis=2, keepdims=True)
        R = np.where(n > 0, rsum / n, 0.0)
    unobserved = []
    for s in range(S):
        for a in range(A):
            if s == z or counts[s, a] == 0:
                P[a, s] = 0.0
                P[a, s, z] = 1.0
                R[a, s] = 0.0
                if s != z:
                    unobserved.append((s, a))
    counts[z] = 0
    model = MdpModel(P, R, discount, (z,))
    return model, CountsReport(counts, unobserved)


def generate_synthetic_logs(true_model: MdpModel, behavior: Policy, num_sessions: int,
                            start_weights, max_steps: int, seed) -> SessionLog:
    """Roll out ``behavior`` on ``true_model`` from starts drawn proportional to ``start_weights``.

    Sessions end at a terminal state (``END``) or after ``max_steps`` steps
    (``TRUNC``). The logged reward is the true entry ``r^a_{st}``.
    """
    if behavior.probs.shape != (true_model.num_states, true_model.num_actions):
        raise ModelValidationError("behavior policy shape does not match the model")
    e = start_weights.weights if isinstance(start_weights, StartWeights) else StartWeights(start_weights).weights
    if e.shape != (true_model.num_states,):
        raise ModelValidationError("start weights length does not match the model")
    rng = make_rng(seed)
    term = true_model.terminal_mask
    pi_cdf = np.cumsum(behavior.probs, axis=1)
    P_cdf = np.cumsum(true_model.transitions, axis=2)
    S = true_model.num_states
    starts = np.minimum(np.searchsorted(np.cumsum(e / e.sum()), rng.random(num_sessions), side="right"), S - 1)
    sessions = [Session(int(s0)) for s0 in starts]
    state = starts.copy()
    active = np.flatnonzero(~term[state])
    for _ in range(int(max_steps)):
        if len(active) == 0:
            break
        s = state[active]
        a = (rng.random(len(active))[:, None] >= pi_cdf[s]).sum(axis=1)
        a = np.minimum(a, true_model.num_actions - 1)
        t = (rng.random(len(active))[:, None] >= P_cdf[a, s]).sum(axis=1)
        t = np.minimum(t, S - 1)
        r = true_model.rewards[a, s, t]
        for k, i in enumerate(active):
            sessions[i].steps.append((int(a[k]), float(r[k]), int(t[k])))
        state[active] = t
        active = active[~term[t]]
    for i in active:
        sessions[i].truncated = True
    return SessionLog(sessions)


# -- model discrepancy -------------------------------------------------------

@dataclass(frozen=True)
class ModelDistance:
    avg_row_l1: Tuple[float, ...]
    avg_tv: float
    max_tv: float
    reward_rmse: float

    def to_dict(self) -> dict:
        return {"avg_row_l1": list(self.avg_row_l1), "avg_tv": self.avg_tv,
                "max_tv": self.max_tv, "reward_rmse": self.reward_rmse}


def model_distance(m1: MdpModel, m2: MdpModel, states: Optional[Sequence[int]] = None) -> ModelDistance:
    """Row-wise L1 / total-variation distance between two models' transition rows.

    Averages run over actions and the non-terminal states of ``m1`` (or the
    given ``states``). ``reward_rmse`` compares reward entries on transitions
    that have positive probability in either model.
    """
    if m1.transitions.shape != m2.transitions.shape:
        raise ModelValidationError(f"shape mismatch {m1.transitions.shape} vs {m2.transitions.shape}")
    idx = m1.nonterminal if states is None else np.asarray(states, dtype=int)
    if len(idx) == 0:
        return ModelDistance(tuple(0.0 for _ in range(m1.num_actions)), 0.0, 0.0, 0.0)
    l1 = np.abs(m1.transitions[:, idx, :] - m2.transitions[:, idx, :]).sum(axis=2)
    mask = (m1.transitions[:, idx, :] > 0) | (m2.transitions[:, idx, :] > 0)
    diff = (m1.rewards[:, idx, :] - m2.rewards[:, idx, :])[mask]
    rmse = float(np.sqrt(np.mean(diff ** 2))) if diff.size else 0.0
    return ModelDistance(tuple(float(x) for x in l1.mean(axis=1)), float(l1.mean() / 2),
                         float(l1.max() / 2), rmse)
