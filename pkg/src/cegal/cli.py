"""Command-line front end.

Exit codes: 0 success, 1 usage or I/O error, 2 UNSAT verdict (``check``),
3 infeasible stationary synthesis or exhausted demonstration filter.
Every run prints one ``key=value`` summary line on stdout.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .cex import counterexample_features, enumerate_counterexample
from .envs import (MountainCarSpec, build_gridworld, build_mountain_car, generate_demonstrations,
                   goal_reward, make_expert, navigation_layout, random_gridworld, scaled_gridworld)
from .errors import (BudgetExhausted, CegalError, FilterExhausted, FormatError, FormulaSatisfied,
                     InfeasibleStationary)
from .loop import CegalConfig, run_al, run_cegal
from .mdp import estimate_expert_features, expected_features, induce_dtmc
from .pctl import format_pctl, parse_pctl, safety, verify
from .synth import synthesize_min_reach_policy

log = logging.getLogger("cegal")

EXIT_OK, EXIT_USAGE, EXIT_UNSAT, EXIT_INFEASIBLE = 0, 1, 2, 3

# options that may also come from a JSON config file, with built-in defaults
DEFAULTS = {
    "pstar": 0.2,
    "horizon": 64,
    "label": "unsafe",
    "epsilon": 10.0,
    "sigma": 1e-5,
    "alpha": 0.5,
    "max_iters": 50,
    "max_paths": 10_000,
    "cex_pstar": None,
    "seed": 0,
    "demo_horizon": None,
    "opt_tol": 1e-12,
    "opt_iters": 10_000,
    "k": 1.0,
}


class UsageError(Exception):
    pass


def _summary(**fields) -> None:
    parts = []
    for key, value in fields.items():
        if isinstance(value, float):
            value = repr(value)
        parts.append(f"{key}={value}")
    print(" ".join(parts))


def _settings(args) -> dict:
    """Flags override the config file, which overrides DEFAULTS."""
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        merged.update(loaded)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _formula(args, settings):
    if getattr(args, "formula", None):
        return parse_pctl(args.formula)
    return safety(float(settings["pstar"]), int(settings["horizon"]), settings["label"])


def _need_features(features, path):
    if features is None:
        raise UsageError(f"{path} has no FEAT lines")
    return features


def _expert_mu(args, settings, mdp, features):
    if args.demos:
        demos = fio.load_trajectories(args.demos)
        horizon = settings["demo_horizon"]
        if horizon is None:
            # long enough that the padded tail changes nothing at 1e-6
            horizon = max(max(len(t) for t in demos) - 1,
                          int(math.ceil(math.log(1e-6) / math.log(mdp.gamma))) if mdp.gamma > 0 else 1)
        return estimate_expert_features(demos, features, mdp.gamma, int(horizon)), "demos"
    if args.expert_policy:
        return expected_features(mdp, fio.load_policy(args.expert_policy), features), "policy"
    raise UsageError("give --demos or --expert-policy")


def _initial_policy(args, mdp, formula):
    if args.init_policy:
        return fio.load_policy(args.init_policy)
    return synthesize_min_reach_policy(mdp, formula).policy


# -- subcommands ---------------------------------------------------------------

def cmd_gridworld(args, settings) -> int:
    if args.preset == "paper-like":
        spec = navigation_layout(noise=args.noise)
    elif args.preset == "random":
        spec = random_gridworld(int(settings["seed"]), args.size, args.size, noise=args.noise)
    else:
        spec = scaled_gridworld(args.size, noise=args.noise)
    mdp, features = build_gridworld(spec)
    fio.save_mdp(args.out, mdp, features)
    summary = dict(states=mdp.n_states, actions=mdp.n_actions, out=args.out)
    if args.expert_out:
        expert, _ = make_expert(mdp, features, spec.reward_vector())
        fio.save_policy(args.expert_out, expert)
        reach = safety(1.0, int(settings["horizon"]), settings["label"])
        summary["expert_unsafe"] = verify(induce_dtmc(mdp, expert), reach).probability
    _summary(**summary)
    return EXIT_OK


def cmd_mountaincar(args, settings) -> int:
    spec = MountainCarSpec(n_pos=args.n_pos, n_vel=args.n_vel, frame_skip=args.frame_skip)
    mdp, features = build_mountain_car(spec, args.samples, int(settings["seed"]), args.sampling)
    fio.save_mdp(args.out, mdp, features)
    summary = dict(states=mdp.n_states, actions=mdp.n_actions, out=args.out)
    if args.expert_out:
        expert, _ = make_expert(mdp, features, goal_reward(spec))
        fio.save_policy(args.expert_out, expert)
    _summary(**summary)
    return EXIT_OK


def cmd_demo(args, settings) -> int:
    mdp, _ = fio.load_mdp(args.model)
    policy = fio.load_policy(args.policy)
    demos = generate_demonstrations(mdp, policy, args.count, args.length, int(settings["seed"]),
                                    filter_safe=args.filter_safe, unsafe_label=settings["label"])
    fio.save_trajectories(args.out, demos)
    _summary(demos=len(demos), out=args.out)
    return EXIT_OK


def cmd_safe(args, settings) -> int:
    mdp, _ = fio.load_mdp(args.model)
    formula = _formula(args, settings)
    result = synthesize_min_reach_policy(mdp, formula, strict=not args.allow_infeasible)
    fio.save_policy(args.out, result.policy)
    verdict = "SAT" if formula.holds(result.probability) else "UNSAT"
    _summary(probability=result.probability, optimum=result.optimum, verdict=verdict, out=args.out)
    return EXIT_OK


def cmd_check(args, settings) -> int:
    mdp, _ = fio.load_mdp(args.model)
    policy = fio.load_policy(args.policy)
    v = verify(induce_dtmc(mdp, policy), _formula(args, settings))
    _summary(probability=v.probability, verdict="SAT" if v.satisfied else "UNSAT")
    return EXIT_OK if v.satisfied else EXIT_UNSAT


def cmd_cex(args, settings) -> int:
    mdp, _ = fio.load_mdp(args.model)
    dtmc = induce_dtmc(mdp, fio.load_policy(args.policy))
    formula = _formula(args, settings)
    try:
        cex = enumerate_counterexample(dtmc, formula, int(settings["max_paths"]), settings["cex_pstar"])
    except FormulaSatisfied as exc:
        raise UsageError(f"no counterexample: the property holds (probability {exc.probability!r})") from None
    except BudgetExhausted as exc:
        cex = exc.partial
        log.warning("path budget exhausted; the listed mass does not exceed the bound")
    text = fio.format_counterexample(cex)
    if not args.out:
        sys.stdout.write(text)  # the TOTAL line doubles as the summary
    else:
        Path(args.out).write_text(text)
        _summary(paths=len(cex.paths), total=cex.total_probability, exhausted=int(cex.exhausted))
    return EXIT_OK


def cmd_al(args, settings) -> int:
    mdp, features = fio.load_mdp(args.model)
    features = _need_features(features, args.model)
    mu_e, source = _expert_mu(args, settings, mdp, features)
    formula = _formula(args, settings)
    pi0 = _initial_policy(args, mdp, formula)
    cexs = []
    for path in args.counterexample or ():
        paths, _ = fio.parse_counterexample(Path(path).read_text(), path)
        cexs.append(counterexample_features(paths, features, mdp.gamma))
    res = run_al(mdp, features, mu_e, pi0, float(settings["epsilon"]), int(settings["max_iters"]),
                 counterexamples=cexs, k=float(settings["k"]) if cexs else 1.0,
                 opt_tol=float(settings["opt_tol"]), opt_iters=int(settings["opt_iters"]))
    fio.save_policy(args.out, res.policy)
    if args.weights_out:
        fio.save_weights(args.weights_out, res.omega)
    v = verify(induce_dtmc(mdp, res.policy), formula)
    _summary(reason=res.termination_reason, iterations=res.iterations,
             mu_dist=float(np.linalg.norm(mu_e - res.mu)), probability=v.probability,
             verdict="SAT" if v.satisfied else "UNSAT", mu_source=source)
    return EXIT_OK


def cmd_cegal(args, settings) -> int:
    mdp, features = fio.load_mdp(args.model)
    features = _need_features(features, args.model)
    mu_e, source = _expert_mu(args, settings, mdp, features)
    formula = _formula(args, settings)
    pi0 = _initial_policy(args, mdp, formula)
    config = CegalConfig(
        epsilon=float(settings["epsilon"]), sigma=float(settings["sigma"]),
        alpha=float(settings["alpha"]), max_iters=int(settings["max_iters"]),
        max_paths=int(settings["max_paths"]),
        cex_threshold=None if settings["cex_pstar"] is None else float(settings["cex_pstar"]),
        opt_tol=float(settings["opt_tol"]), opt_iters=int(settings["opt_iters"]),
    )
    res = run_cegal(mdp, features, mu_e, formula, pi0, config, mu_source=source)
    fio.save_policy(args.out, res.policy)
    if args.weights_out:
        fio.save_weights(args.weights_out, res.omega)
    if args.transcript:
        header = {key: settings[key] for key in sorted(settings)}
        header.update(formula=format_pctl(formula), mu_source=source, model=args.model)
        fio.save_transcript(args.transcript, res.transcript, header)
    _summary(reason=res.termination_reason, iterations=res.iterations,
             probability=res.verdict.probability, verdict="SAT" if res.verdict.satisfied else "UNSAT",
             mu_dist=float(np.linalg.norm(mu_e - res.mu)), mu_source=source)
    return EXIT_OK


def cmd_rewardmap(args, settings) -> int:
    mdp, features = fio.load_mdp(args.model)
    features = _need_features(features, args.model)
    omega = fio.load_weights(args.weights)
    reward = features.reward(omega)
    width = args.width or int(round(math.sqrt(mdp.n_states)))
    if mdp.n_states % width:
        raise UsageError(f"{mdp.n_states} states do not fill rows of width {width}")
    grid = reward.reshape(-1, width)
    Path(args.csv).write_text(fio.format_reward_csv(grid))
    if args.pgm:
        Path(args.pgm).write_text(fio.format_pgm(fio.to_gray(grid)))
    _summary(height=grid.shape[0], width=width, min=float(grid.min()), max=float(grid.max()))
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def _property_flags(p):
    p.add_argument("--formula", help='PCTL formula, e.g. \'P<=0.2 [ true U<=64 "unsafe" ]\'')
    p.add_argument("--pstar", type=float, help="threshold of the default safety formula")
    p.add_argument("--horizon", type=int, help="step bound of the default safety formula")
    p.add_argument("--label", help="unsafe label name")


def _learner_flags(p):
    p.add_argument("--model", required=True)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--demos", help="trajectory file")
    src.add_argument("--expert-policy", help="policy file whose exact feature expectation is used")
    p.add_argument("--demo-horizon", type=int)
    p.add_argument("--init-policy", "--naive-safe", dest="init_policy",
                   help="policy file used as the safe initial policy (default: synthesised)")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--opt-tol", type=float)
    p.add_argument("--opt-iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="JSON file of option defaults")
    p.add_argument("--out", required=True, help="output policy file")
    p.add_argument("--weights-out")
    _property_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cegal", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gridworld", help="generate a grid-world model")
    g.add_argument("action", choices=["gen"])
    g.add_argument("--preset", choices=["paper-like", "random", "scaled"], default="paper-like")
    g.add_argument("--size", type=int, default=8)
    g.add_argument("--noise", type=float, default=0.2)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.add_argument("--expert-out", help="also write the ground-truth optimal policy")
    g.set_defaults(func=cmd_gridworld)

    m = sub.add_parser("mountaincar", help="generate a discretised mountain-car model")
    m.add_argument("action", choices=["gen"])
    m.add_argument("--n-pos", type=int, default=40)
    m.add_argument("--n-vel", type=int, default=40)
    m.add_argument("--samples", type=int, default=100)
    m.add_argument("--sampling", choices=["uniform", "center"], default="uniform")
    m.add_argument("--frame-skip", type=int, default=2)
    m.add_argument("--seed", type=int)
    m.add_argument("--out", required=True)
    m.add_argument("--expert-out")
    m.set_defaults(func=cmd_mountaincar)

    d = sub.add_parser("demo", help="sample demonstrations from a policy")
    d.add_argument("--model", required=True)
    d.add_argument("--policy", required=True)
    d.add_argument("--count", type=int, default=10_000)
    d.add_argument("--length", type=int, default=150, help="steps per demonstration")
    d.add_argument("--filter-safe", action="store_true")
    d.add_argument("--label")
    d.add_argument("--seed", type=int)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_demo)

    s = sub.add_parser("safe", help="synthesise a maximally safe policy")
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--allow-infeasible", action="store_true",
                   help="write the best stationary policy even if it misses the bound")
    _property_flags(s)
    s.set_defaults(func=cmd_safe)

    c = sub.add_parser("check", help="model-check a policy")
    c.add_argument("--model", required=True)
    c.add_argument("--policy", required=True)
    _property_flags(c)
    c.set_defaults(func=cmd_check)

    x = sub.add_parser("cex", help="enumerate a counterexample")
    x.add_argument("--model", required=True)
    x.add_argument("--policy", required=True)
    x.add_argument("--max-paths", type=int)
    x.add_argument("--cex-pstar", type=float)
    x.add_argument("--out")
    _property_flags(x)
    x.set_defaults(func=cmd_cex)

    a = sub.add_parser("al", help="plain apprenticeship learning")
    _learner_flags(a)
    a.add_argument("--counterexample", action="append", help="cex file to steer away from")
    a.add_argument("--k", type=float, help="expert weight when counterexamples are given")
    a.set_defaults(func=cmd_al)

    e = sub.add_parser("cegal", help="apprenticeship learning steered by counterexamples")
    _learner_flags(e)
    e.add_argument("--sigma", type=float)
    e.add_argument("--alpha", type=float)
    e.add_argument("--max-paths", type=int)
    e.add_argument("--cex-pstar", type=float)
    e.add_argument("--transcript", help="per-iteration CSV")
    e.set_defaults(func=cmd_cegal)

    r = sub.add_parser("export-rewardmap", help="write the learnt reward as CSV and PGM")
    r.add_argument("--model", required=True)
    r.add_argument("--weights", required=True)
    r.add_argument("--width", type=int)
    r.add_argument("--csv", required=True)
    r.add_argument("--pgm")
    r.set_defaults(func=cmd_rewardmap)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args, _settings(args))
    except (InfeasibleStationary, FilterExhausted) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (UsageError, FormatError, CegalError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
