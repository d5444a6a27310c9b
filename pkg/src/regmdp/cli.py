"""Command-line front end.

Exit codes: 0 success, 1 validation or usage error, 2 solver did not
converge, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import jsonschema
import numpy as np

from . import empirical, experiments, mdp, solvers

EXIT_OK, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class ConvergenceError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


SWEEP_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["grid"],
    "properties": {
        "grid": {"type": "array", "minItems": 1, "items": {
            "oneOf": [{"type": "number", "minimum": 0},
                      {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}]}},
        "example": {"type": "string"},
        "N": {"type": "integer", "minimum": 3},
        "method": {"enum": list(experiments.METHODS)},
        "samples_per_state_action": {"type": "integer", "minimum": 1},
        "num_trials": {"type": "integer", "minimum": 2},
        "base_seed": {"type": "integer", "minimum": 0},
        "evaluation": {"enum": list(experiments.EVALUATIONS)},
        "e_path": {"type": ["string", "null"]},
        "model_seed": {"type": "integer", "minimum": 0},
        "discount": {"type": "number", "minimum": 0, "maximum": 1},
        "reward_mode": {"enum": list(empirical.REWARD_MODES)},
        "reward_noise_std": {"type": "number", "minimum": 0},
        "preferred_action": {"type": "integer", "minimum": 0},
        "holdout": {"type": "boolean"},
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "max_iterations": {"type": "integer", "minimum": 1},
        "workers": {"type": "integer", "minimum": 1},
        "n_grid": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "out_dir": {"type": "string"},
        "stem": {"type": "string"},
    },
}

# flags that may override sweep config keys
SWEEP_OVERRIDES = ("num_trials", "base_seed", "samples_per_state_action", "workers", "out_dir", "model_seed")


def load_sweep_config(path, overrides=None):
    """Parse and schema-check a sweep config; returns ``(SweepConfig, extras)``."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise mdp.ModelValidationError(f"{path}: invalid JSON ({exc})") from exc
    for k, v in (overrides or {}).items():
        if v is not None:
            doc[k] = v
    errors = sorted(jsonschema.Draft7Validator(SWEEP_SCHEMA).iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        lines = [f"  {'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors]
        raise mdp.ModelValidationError("config schema violations:\n" + "\n".join(lines))
    extras = {k: doc.pop(k) for k in ("n_grid", "out_dir", "stem") if k in doc}
    names = {f.name for f in fields(experiments.SweepConfig)}
    cfg = experiments.SweepConfig(**{k: v for k, v in doc.items() if k in names})
    return cfg, extras


# -- commands -----------------------------------------------------------------

def _require_seed(args):
    if args.seed is None:
        raise UsageError(f"{args.command}: --seed is required for stochastic commands")


def cmd_gen(args):
    if args.example == "example1":
        model = experiments.example1_model(args.n, args.discount)
    elif args.example == "example2":
        _require_seed(args)
        means = experiments.EXAMPLE2_MEANS_ALT if args.alt_means else None
        model = experiments.example2_model(args.n, args.seed, args.discount, means)
    else:
        model = experiments.delayed_reward_model()
    mdp.save_model(model, args.out)
    print(f"wrote {args.out}: {model.num_states} states, {model.num_actions} actions, sha256 {model.digest()[:12]}")


def cmd_sample(args):
    _require_seed(args)
    model = mdp.load_model(args.model)
    cfg = empirical.SamplingConfig(args.samples, args.noise_std, args.seed, args.reward_mode)
    out = empirical.sample_transitions(model, cfg)
    mdp.save_model(out, args.out)
    print(f"wrote {args.out} (seed {args.seed}, rng {empirical.RNG_ALGORITHM})")


def cmd_ingest(args):
    logs = empirical.SessionLog.load(args.log)
    model, report = empirical.estimate_from_logs(logs, args.states, args.actions, args.terminal, args.discount)
    mdp.save_model(model, args.out)
    report_path = args.report or str(Path(args.out).with_suffix(".counts.json"))
    report.save(report_path)
    print(f"wrote {args.out} and {report_path}: {len(logs)} sessions, "
          f"{int(report.counts.sum())} transitions, {len(report.unobserved)} unobserved (s, a) pairs")


def _prior_from_args(args, model, need_lambda=False, need_re=False):
    if need_lambda and args.lam is None:
        raise UsageError(f"--method {args.method} requires --lambda")
    if need_re and (args.kappa is None or args.q_pref is None):
        raise UsageError("--method re requires --kappa and --q-pref")
    if args.lam is not None and args.lam < 0:
        raise mdp.ModelValidationError("--lambda must be nonnegative")
    if args.kappa is not None and not args.kappa > 0:
        raise mdp.ModelValidationError("--kappa must be positive")
    if args.q_pref is not None and not 0 < args.q_pref < 1:
        raise mdp.ModelValidationError("--q-pref must lie in (0, 1)")
    A = model.num_actions
    q_other = None if args.q_pref is None else (1.0 - args.q_pref) / max(A - 1, 1)
    return mdp.PriorSpec.single(model.num_states, A, args.pref_action,
                                lam=args.lam or 0.0, kappa=args.kappa or 1.0, q_other=q_other)


def _fixed_report(model, policy, method, params=None):
    v = solvers.policy_evaluation(model, policy)
    return solvers.SolveReport(policy, v, 0, 0.0, True, method, solvers.SolverConfig(), params)


def cmd_solve(args):
    model = mdp.load_model(args.model)
    cfg = solvers.SolverConfig(args.tolerance, args.max_iterations)
    m = args.method
    if m == "vi":
        rep = solvers.solve_unregularized(model, cfg)
    elif m == "l1":
        rep = solvers.solve_l1(model, _prior_from_args(args, model, need_lambda=True), cfg)
    elif m == "re":
        rep = solvers.solve_re(model, _prior_from_args(args, model, need_re=True), cfg)
    elif m == "osp":
        rep = _fixed_report(model, solvers.one_shot_policy(model), m)
    elif m == "osp-reg":
        prior = _prior_from_args(args, model, need_lambda=True)
        rep = _fixed_report(model, solvers.one_shot_regularized(model, prior), m, {"lambda": prior.lam})
    else:
        if args.action is None:
            raise UsageError("--method const requires --action")
        pol = solvers.constant_policy(args.action, model.num_states, model.num_actions)
        rep = _fixed_report(model, pol, m, {"action": args.action})
    rep.save(args.out)
    print(f"{m}: iterations={rep.iterations} residual={rep.final_residual:.3g} "
          f"converged={rep.converged} value_per_state={rep.values.per_state(model):.10g}")
    if not rep.converged:
        raise ConvergenceError(f"{m} did not converge within {cfg.max_iterations} iterations")


def _start_weights(spec, model):
    if spec in (None, "uniform"):
        return mdp.StartWeights.uniform(model)
    return mdp.StartWeights(experiments.load_vector(spec))


def _load_policy(path):
    doc = json.loads(Path(path).read_text())
    return mdp.Policy(np.array(doc["policy"] if isinstance(doc, dict) else doc, dtype=float))


def cmd_eval(args):
    model = mdp.load_model(args.model)
    policy = _load_policy(args.policy)
    e = _start_weights(args.e, model)
    v = solvers.policy_evaluation(model, policy)
    print(f"objective {float(e.weights @ v.values)!r}")
    print(f"value_per_state {v.per_state(model)!r}")


def cmd_sweep(args):
    overrides = {k: getattr(args, k) for k in SWEEP_OVERRIDES}
    cfg, extras = load_sweep_config(args.config, overrides)
    out_dir = extras.get("out_dir", ".")
    stem = extras.get("stem", Path(args.config).stem)
    if "n_grid" in extras:
        pts = experiments.run_sample_scaling(cfg, extras["n_grid"])
        result = experiments.scaling_result(pts, cfg)
    else:
        result = experiments.run_sweep(cfg)
    paths = experiments.write_sweep(result, out_dir, stem)
    print(f"{'grid_param':<28}{'mean':>14}{'stderr':>12}{'trials':>8}")
    if "n_grid" not in extras:
        r = result.reference
        print(f"{'unregularized':<28}{r.mean:>14.6g}{r.stderr:>12.3g}{r.trials:>8}")
    for p in result.points:
        print(f"{p.label:<28}{p.mean:>14.6g}{p.stderr:>12.3g}{p.trials:>8}")
    if result.failures:
        print(f"{len(result.failures)} failed (trial, grid point) solves excluded; see {paths['json']}")
    print("wrote " + ", ".join(str(p) for p in paths.values()))


def cmd_compare(args):
    true_model = mdp.load_model(args.true_model)
    emp = mdp.load_model(args.empirical_model)
    if args.kappa is None:
        args.kappa = 1.0
    prior = _prior_from_args(args, emp)
    rows = experiments.evaluate_policy_suite(true_model, emp, prior, _start_weights(args.e, true_model),
                                             args.reference)
    print(experiments.format_suite(rows, args.reference))


def cmd_distance(args):
    d = empirical.model_distance(mdp.load_model(args.model_a), mdp.load_model(args.model_b))
    print(json.dumps(d.to_dict(), indent=2))


def _prior_flags(p):
    p.add_argument("--lambda", dest="lam", type=float, help="L1 penalty on non-preferred actions")
    p.add_argument("--kappa", type=float, help="relative-entropy strength")
    p.add_argument("--q-pref", type=float, help="prior probability of the preferred action")
    p.add_argument("--pref-action", type=int, default=0, help="preferred action at every state")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="regmdp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="write a benchmark model")
    p.add_argument("example", choices=["example1", "example2", "delayed"])
    p.add_argument("--n", type=int, default=10, help="number of states including the terminal state")
    p.add_argument("--seed", type=int)
    p.add_argument("--discount", type=float, default=1.0)
    p.add_argument("--alt-means", action="store_true", help="example2: give action 1 the larger reward means")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("sample", help="draw an empirical model from a true model")
    p.add_argument("model")
    p.add_argument("--samples", type=int, default=100, help="draws per (state, action)")
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--reward-mode", choices=empirical.REWARD_MODES, default="exact")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("ingest", help="estimate a model from a session log")
    p.add_argument("log")
    p.add_argument("--states", type=int, required=True)
    p.add_argument("--actions", type=int, required=True)
    p.add_argument("--terminal", type=int, help="terminal state index (default: last state)")
    p.add_argument("--discount", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="counts report path (default: <out>.counts.json)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("solve", help="learn a policy")
    p.add_argument("model")
    p.add_argument("--method", choices=["vi", "l1", "re", "osp", "osp-reg", "const"], default="vi")
    _prior_flags(p)
    p.add_argument("--action", type=int, help="action for --method const")
    p.add_argument("--tolerance", type=float, default=1e-10)
    p.add_argument("--max-iterations", type=int, default=100_000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval", help="evaluate a policy on a model")
    p.add_argument("model")
    p.add_argument("policy", help="solve report or JSON policy matrix")
    p.add_argument("--e", default="uniform", help="'uniform' or a file with start weights")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run a multi-trial sweep from a JSON config")
    p.add_argument("config")
    for key in SWEEP_OVERRIDES:
        p.add_argument("--" + key.replace("_", "-"), type=str if key == "out_dir" else int, dest=key)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="rank policies learned on an empirical model")
    p.add_argument("true_model")
    p.add_argument("empirical_model")
    _prior_flags(p)
    p.add_argument("--e", default="uniform")
    p.add_argument("--reference", default="best")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("distance", help="transition-row distances between two models")
    p.add_argument("model_a")
    p.add_argument("model_b")
    p.set_defaults(func=cmd_distance)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, jsonschema.ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
