"""Benchmark models and multi-trial sweeps.

A sweep draws one empirical model per trial from the true model, solves it at
every grid point, and scores each learned policy on the true model (or on a
fresh holdout sample of it). Trials are seeded independently from
``base_seed`` so the result does not depend on execution order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .empirical import RNG_ALGORITHM, SamplingConfig, derive_seed, make_rng, sample_transitions
from .mdp import (
    MdpModel,
    ModelValidationError,
    Policy,
    PriorSpec,
    StartWeights,
    load_model,
)
from .solvers import (
    SolverConfig,
    constant_policy,
    objective,
    one_shot_policy,
    one_shot_regularized,
    policy_evaluation,
    solve_l1,
    solve_re,
    solve_unregularized,
)

# Action 0 carries the larger reward means, which makes it optimal at most
# states (about 84% on average at N=1000).
EXAMPLE2_MEANS = {"X0": 6.0, "Y0": 3.0, "X1": 5.0, "Y1": 2.0}
# The opposite assignment; under it action 1 is optimal at most states.
EXAMPLE2_MEANS_ALT = {"X0": 5.0, "Y0": 2.0, "X1": 6.0, "Y1": 3.0}


def _ring_model(N: int, p_loop: Tuple[float, float], r_loop, r_exit, discount: float) -> MdpModel:
    """Shared layout of both benchmarks.

    States are 1..N in the usual 1-based description and 0..N-1 in storage
    (state i lives at index i-1, terminal N at index N-1). From state i,
    action 0 moves to N-1-(N-i)%(N-1) (i.e. i-1, wrapping 1 -> N-1) and
    action 1 moves to i%(N-1)+1 (i.e. i+1, wrapping N-1 -> 1); the remaining
    mass goes to the terminal state.
    """
    if N < 3:
        raise ModelValidationError(f"need N >= 3, got {N}")
    P = np.zeros((2, N, N))
    R = np.zeros((2, N, N))
    z = N - 1
    for i in range(1, N):
        s = i - 1
        targets = (N - 1 - (N - i) % (N - 1) - 1, i % (N - 1))
        for a in (0, 1):
            P[a, s, targets[a]] = p_loop[a]
            P[a, s, z] = 1.0 - p_loop[a]
            R[a, s, targets[a]] = r_loop[a][s]
            R[a, s, z] = r_exit[a][s]
    P[:, z, z] = 1.0
    return MdpModel(P, R, discount, (z,))


def example1_model(N: int = 10, discount: float = 1.0) -> MdpModel:
    """Deterministic-reward benchmark: rewards 2i+N on the loop edge, i+N on exit."""
    i = np.arange(1, N, dtype=float)
    loop = 2 * i + N
    exit_ = i + N
    return _ring_model(N, (0.35, 0.25), (loop, loop), (exit_, exit_), discount)


def example2_model(N: int = 1000, seed: int = 0, discount: float = 1.0,
                   means: Optional[Dict[str, float]] = None) -> MdpModel:
    """Random-reward benchmark with continuation probability 0.45 for both actions.

    Rewards are drawn once per state from unit-variance Gaussians in the order
    X0, X1, Y0, Y1 (each a length N-1 vector) and then frozen.
    """
    if N < 3:
        raise ModelValidationError(f"need N >= 3, got {N}")
    m = dict(EXAMPLE2_MEANS if means is None else means)
    rng = make_rng(seed)
    X0 = rng.normal(m["X0"], 1.0, N - 1)
    X1 = rng.normal(m["X1"], 1.0, N - 1)
    Y0 = rng.normal(m["Y0"], 1.0, N - 1)
    Y1 = rng.normal(m["Y1"], 1.0, N - 1)
    return _ring_model(N, (0.45, 0.45), (X0, X1), (Y0, Y1), discount)


def delayed_reward_model() -> MdpModel:
    """Three states where the myopic choice forfeits a larger delayed reward.

    State 0: action 0 pays 1 and exits; action 1 pays 0 and moves to state 1.
    State 1: action 0 pays 5 and exits; action 1 pays 0 and exits.
    State 2 is terminal.
    """
    P = np.zeros((2, 3, 3))
    R = np.zeros((2, 3, 3))
    P[0, 0, 2], R[0, 0, 2] = 1.0, 1.0
    P[1, 0, 1] = 1.0
    P[0, 1, 2], R[0, 1, 2] = 1.0, 5.0
    P[1, 1, 2] = 1.0
    P[:, 2, 2] = 1.0
    return MdpModel(P, R, 1.0, (2,))


def optimal_action_fraction(model: MdpModel, action: int = 0, cfg: SolverConfig = SolverConfig()) -> float:
    """Share of non-terminal states whose optimal action is ``action``."""
    pol = solve_unregularized(model, cfg).policy
    return action_fraction(model, pol, action)


def action_fraction(model: MdpModel, policy: Policy, action: int = 0) -> float:
    """Mean probability of ``action`` over non-terminal states."""
    return float(policy.probs[model.nonterminal, action].mean())


# -- sweeps -----------------------------------------------------------------

GridPoint = Union[float, Tuple[float, float]]
METHODS = ("l1", "re")
EVALUATIONS = ("value_per_state", "weighted_objective")


@dataclass
class SweepConfig:
    """One sweep: benchmark, method, hyperparameter grid and trial protocol.

    ``grid`` holds lambda values for ``method="l1"`` and ``(kappa, q_other)``
    pairs for ``method="re"``, where ``q_other`` is the prior mass of each
    non-preferred action.
    """

    grid: List[GridPoint]
    example: str = "example1"
    N: int = 10
    method: str = "l1"
    samples_per_state_action: int = 100
    num_trials: int = 50
    base_seed: int = 0
    evaluation: str = "value_per_state"
    e_path: Optional[str] = None
    model_seed: int = 0
    discount: float = 1.0
    reward_mode: str = "exact"
    reward_noise_std: float = 0.0
    preferred_action: int = 0
    holdout: bool = False
    tolerance: float = 1e-10
    max_iterations: int = 100_000
    workers: int = 1

    def __post_init__(self):
        if self.num_trials < 2:
            raise ModelValidationError("num_trials must be at least 2 for a standard error")
        if not self.grid:
            raise ModelValidationError("grid must be nonempty")
        if self.method not in METHODS:
            raise ModelValidationError(f"method must be one of {METHODS}")
        if self.evaluation not in EVALUATIONS:
            raise ModelValidationError(f"evaluation must be one of {EVALUATIONS}")
        if self.evaluation == "weighted_objective" and not self.e_path:
            raise ModelValidationError("weighted_objective evaluation needs e_path")
        grid = []
        for g in self.grid:
            if self.method == "l1":
                g = float(g)
                if g < 0:
                    raise ModelValidationError(f"lambda must be nonnegative, got {g}")
            else:
                k, q = (float(x) for x in g)
                if k <= 0 or not 0 < q < 1:
                    raise ModelValidationError(f"bad (kappa, q) grid point {g}")
                g = (k, q)
            grid.append(g)
        self.grid = grid
        SamplingConfig(self.samples_per_state_action, self.reward_noise_std, 0, self.reward_mode)

    def true_model(self) -> MdpModel:
        if self.example == "example1":
            return example1_model(self.N, self.discount)
        if self.example == "example2":
            return example2_model(self.N, self.model_seed, self.discount)
        return load_model(self.example)

    def start_weights(self, model: MdpModel) -> Optional[StartWeights]:
        if self.evaluation != "weighted_objective":
            return None
        return StartWeights(load_vector(self.e_path))

    def label(self, g: GridPoint) -> str:
        if self.method == "l1":
            return repr(g)
        return f"kappa={g[0]!r}|q={g[1]!r}"


def load_vector(path) -> np.ndarray:
    """A vector from a JSON array or whitespace-separated text."""
    text = Path(path).read_text()
    try:
        return np.asarray(json.loads(text), dtype=float)
    except json.JSONDecodeError:
        return np.asarray(text.split(), dtype=float)


@dataclass
class GridPointResult:
    param: GridPoint
    label: str
    mean: float
    stderr: float
    trials: int
    raw: Dict[int, float]
    preferred_mass: float = float("nan")


@dataclass
class SweepResult:
    config: dict
    metric_name: str
    points: List[GridPointResult]
    reference: GridPointResult
    values: np.ndarray
    preferred_mass: np.ndarray
    failures: List[Tuple[int, str, str]] = field(default_factory=list)
    true_model_hash: str = ""
    train_hashes: Dict[int, str] = field(default_factory=dict)
    eval_hashes: Dict[int, str] = field(default_factory=dict)

    def best(self) -> GridPointResult:
        return max(self.points, key=lambda p: p.mean)

    def best_index(self) -> int:
        return int(np.argmax([p.mean for p in self.points]))


def mean_stderr(x: Sequence[float]) -> Tuple[float, float]:
    """Mean and sample standard deviation over sqrt(count)."""
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return (float(x.mean()) if len(x) else float("nan")), float("nan")
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def _score(eval_model: MdpModel, policy: Policy, e: Optional[StartWeights]) -> float:
    if e is None:
        return policy_evaluation(eval_model, policy).per_state(eval_model)
    return objective(eval_model, policy, e)


def _prior(cfg: SweepConfig, model: MdpModel, g: GridPoint) -> PriorSpec:
    if cfg.method == "l1":
        return PriorSpec.single(model.num_states, model.num_actions, cfg.preferred_action, lam=g)
    return PriorSpec.single(model.num_states, model.num_actions, cfg.preferred_action,
                            kappa=g[0], q_other=g[1])


def run_trial(cfg: SweepConfig, true_model: MdpModel, e: Optional[StartWeights], trial: int) -> dict:
    """Learn on one empirical sample and score every grid point plus the unregularized policy."""
    solver_cfg = SolverConfig(cfg.tolerance, cfg.max_iterations)
    sampling = SamplingConfig(cfg.samples_per_state_action, cfg.reward_noise_std,
                              derive_seed(cfg.base_seed, trial), cfg.reward_mode)
    out = {"trial": trial, "values": {}, "pref": {}, "errors": {}}
    try:
        train = sample_transitions(true_model, sampling)
        if cfg.holdout:
            held = SamplingConfig(cfg.samples_per_state_action, cfg.reward_noise_std,
                                  derive_seed(cfg.base_seed, trial, 1), cfg.reward_mode)
            evaluate_on = sample_transitions(true_model, held)
        else:
            evaluate_on = true_model
    except ValueError as exc:
        out["errors"]["*"] = f"{type(exc).__name__}: {exc}"
        return out
    out["train_hash"] = train.digest()
    out["eval_hash"] = evaluate_on.digest()
    jobs = [("reference", None)] + list(enumerate(cfg.grid))
    for key, g in jobs:
        try:
            if g is None:
                rep = solve_unregularized(train, solver_cfg)
            elif cfg.method == "l1":
                rep = solve_l1(train, _prior(cfg, train, g), solver_cfg)
            else:
                rep = solve_re(train, _prior(cfg, train, g), solver_cfg)
            if not rep.converged:
                raise RuntimeError(f"no convergence after {rep.iterations} iterations")
            out["values"][key] = _score(evaluate_on, rep.policy, e)
            out["pref"][key] = action_fraction(train, rep.policy, cfg.preferred_action)
        except (ValueError, RuntimeError) as exc:
            out["errors"][key] = f"{type(exc).__name__}: {exc}"
    return out


def _aggregate(param, label, column: np.ndarray, pref: np.ndarray) -> GridPointResult:
    ok = ~np.isnan(column)
    mean, se = mean_stderr(column[ok])
    raw = {int(t): float(column[t]) for t in np.flatnonzero(ok)}
    pm = float(np.nanmean(pref)) if np.any(~np.isnan(pref)) else float("nan")
    return GridPointResult(param, label, mean, se, int(ok.sum()), raw, pm)


def run_sweep(cfg: SweepConfig) -> SweepResult:
    true_model = cfg.true_model()
    e = cfg.start_weights(true_model)
    T, G = cfg.num_trials, len(cfg.grid)
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            outs = list(pool.map(run_trial, [cfg] * T, [true_model] * T, [e] * T, range(T)))
    else:
        outs = [run_trial(cfg, true_model, e, t) for t in range(T)]
    outs.sort(key=lambda o: o["trial"])
    values = np.full((T, G + 1), np.nan)
    pref = np.full((T, G + 1), np.nan)
    failures = []
    for o in outs:
        t = o["trial"]
        for key, col in [("reference", 0)] + [(j, j + 1) for j in range(G)]:
            if key in o["values"]:
                values[t, col] = o["values"][key]
                pref[t, col] = o["pref"][key]
        for key, msg in o["errors"].items():
            failures.append((t, str(key), msg))
    points = [_aggregate(g, cfg.label(g), values[:, j + 1], pref[:, j + 1]) for j, g in enumerate(cfg.grid)]
    reference = _aggregate(None, "unregularized", values[:, 0], pref[:, 0])
    return SweepResult(
        config=asdict(cfg),
        metric_name=cfg.evaluation,
        points=points,
        reference=reference,
        values=values[:, 1:],
        preferred_mass=pref[:, 1:],
        failures=failures,
        true_model_hash=true_model.digest(),
        train_hashes={o["trial"]: o["train_hash"] for o in outs if "train_hash" in o},
        eval_hashes={o["trial"]: o["eval_hash"] for o in outs if "eval_hash" in o},
    )


@dataclass
class ScalingPoint:
    samples: int
    best_param: GridPoint
    gap_mean: float
    gap_stderr: float
    trials: int
    gaps: Dict[int, float]


def run_sample_scaling(cfg: SweepConfig, n_grid: Sequence[int]) -> List[ScalingPoint]:
    """Regularization gap as a function of the per-(s, a) sample count.

    For each ``n`` the grid point with the best mean is selected and the gap is
    the per-trial (paired) difference to the unregularized policy.
    """
    out = []
    for n in n_grid:
        sub = SweepConfig(**{**asdict(cfg), "samples_per_state_action": int(n)})
        res = run_sweep(sub)
        j = res.best_index()
        diff = res.values[:, j] - np.array([res.reference.raw.get(t, np.nan) for t in range(cfg.num_trials)])
        ok = ~np.isnan(diff)
        m, se = mean_stderr(diff[ok])
        out.append(ScalingPoint(int(n), res.points[j].param, m, se, int(ok.sum()),
                                {int(t): float(diff[t]) for t in np.flatnonzero(ok)}))
    return out


def scaling_result(points: Sequence[ScalingPoint], cfg: SweepConfig) -> SweepResult:
    """Wrap sample-scaling gaps in a ``SweepResult`` keyed by sample count."""
    T = cfg.num_trials
    vals = np.full((T, len(points)), np.nan)
    for j, p in enumerate(points):
        for t, g in p.gaps.items():
            vals[t, j] = g
    pts = [GridPointResult(p.samples, str(p.samples), p.gap_mean, p.gap_stderr, p.trials, p.gaps)
           for p in points]
    ref = GridPointResult(None, "unregularized", 0.0, 0.0, T, {})
    return SweepResult(asdict(cfg), "regularization_gap", pts, ref, vals, np.full_like(vals, np.nan))


# -- emission -------------------------------------------------------------------

def summary_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["grid_param", "value_mean", "value_stderr", "trials", "metric_name"])
    for p in result.points:
        w.writerow([p.label, repr(p.mean), repr(p.stderr), p.trials, result.metric_name])
    return buf.getvalue()


def raw_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "grid_param", "value"])
    for p in result.points:
        for t in sorted(p.raw):
            w.writerow([t, p.label, repr(p.raw[t])])
    return buf.getvalue()


def result_json(result: SweepResult) -> dict:
    def point(p: GridPointResult) -> dict:
        d = {"label": p.label, "mean": p.mean, "stderr": p.stderr, "trials": p.trials,
             "preferred_mass": None if math.isnan(p.preferred_mass) else p.preferred_mass}
        if isinstance(p.param, tuple):
            d.update(kappa=p.param[0], q=p.param[1], neg_log_q=-math.log(p.param[1]))
        else:
            d["param"] = p.param
        return d

    return {
        "config": json.loads(json.dumps(result.config)),
        "metric_name": result.metric_name,
        "rng": RNG_ALGORITHM,
        "true_model_hash": result.true_model_hash,
        "train_model_hashes": {str(k): v for k, v in sorted(result.train_hashes.items())},
        "eval_model_hashes": {str(k): v for k, v in sorted(result.eval_hashes.items())},
        "reference": point(result.reference),
        "points": [point(p) for p in result.points],
        "failures": [{"trial": t, "grid": g, "error": m} for t, g, m in result.failures],
    }


def write_sweep(result: SweepResult, out_dir, stem: str = "sweep") -> Dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"summary": out_dir / f"{stem}.csv", "raw": out_dir / f"{stem}_raw.csv",
             "json": out_dir / f"{stem}.json"}
    paths["summary"].write_text(summary_csv(result))
    paths["raw"].write_text(raw_csv(result))
    paths["json"].write_text(json.dumps(result_json(result), indent=2, sort_keys=True) + "\n")
    return paths


# -- policy comparison ---------------------------------------------------------

@dataclass
class SuiteRow:
    name: str
    objective: float
    improvement_pct: float


def evaluate_policy_suite(true_model: MdpModel, empirical_model: MdpModel, prior: PriorSpec,
                          e=None, reference: str = "best",
                          cfg: SolverConfig = SolverConfig()) -> List[SuiteRow]:
    """Learn every policy on ``empirical_model`` and rank them by objective on ``true_model``.

    ``reference`` names the row the percentage improvements are relative to
    (``"best"`` for the top-scoring row).
    """
    e = StartWeights.uniform(true_model) if e is None else e
    policies = {
        "unregularized": solve_unregularized(empirical_model, cfg).policy,
        "l1": solve_l1(empirical_model, prior, cfg).policy,
        "re": solve_re(empirical_model, prior, cfg).policy,
        "osp": one_shot_policy(empirical_model),
        "osp_lambda": one_shot_regularized(empirical_model, prior),
    }
    for a in range(true_model.num_actions):
        policies[f"const_{a}"] = constant_policy(a, true_model.num_states, true_model.num_actions)
    scores = {k: objective(true_model, p, e) for k, p in policies.items()}
    ranked = sorted(scores.items(), key=lambda kv: -kv[1])
    if reference == "best":
        ref = ranked[0][1]
    elif reference in scores:
        ref = scores[reference]
    else:
        raise ModelValidationError(f"unknown reference policy {reference!r}")
    scale = abs(ref) if ref != 0 else 1.0
    return [SuiteRow(k, v, 100.0 * (v - ref) / scale) for k, v in ranked]


def format_suite(rows: Sequence[SuiteRow], reference: str) -> str:
    lines = [f"{'policy':<16}{'objective':>16}{'% vs ' + reference:>16}"]
    for r in rows:
        lines.append(f"{r.name:<16}{r.objective:>16.6g}{r.improvement_pct:>16.3f}")
    return "\n".join(lines)
