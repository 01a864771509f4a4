"""Command-line front end.

Verbs: simulate (baseline-only episodes), train (one learner), sweep-rho,
evaluate (frozen checkpoint), gen-data (synthetic calibrated tables), and
gradcheck (finite-difference audit of the network gradients). Exit code 0 on
success, nonzero with a structured error message on stderr otherwise.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np


def _add_common(sub, model_choices=None, default_out="out"):
    sub.add_argument("--config", required=True, help="TOML experiment config")
    sub.add_argument("--seed", type=int, default=None, help="override experiment.seed")
    sub.add_argument("--out", default=default_out, help="output directory")
    if model_choices:
        sub.add_argument("--model", choices=model_choices, default=model_choices[0])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dispatchlab",
        description="Ride-sourcing dispatch laboratory: matching, simulation, and "
                    "delayed-matching reinforcement learners.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("simulate", help="run pure-optimization baseline episodes")
    _add_common(p, model_choices=["pure"])
    p.add_argument("--episodes", type=int, default=None)

    p = sub.add_parser("train", help="train one learner and evaluate it")
    _add_common(p, model_choices=["a2c", "dqn", "tabq"])
    p.add_argument("--epochs", type=int, default=None, help="override training.epochs")
    p.add_argument("--progress", type=int, default=0, help="log every N epochs to stderr")

    p = sub.add_parser("sweep-rho", help="reward-weight sensitivity sweep (actor-critic)")
    _add_common(p)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--progress", type=int, default=0)

    p = sub.add_parser("evaluate", help="evaluate a frozen checkpoint (or the pure baseline)")
    _add_common(p)
    p.add_argument("--checkpoint", default=None, help="network checkpoint; omit for pure baseline")
    p.add_argument("--episodes", type=int, default=None)

    p = sub.add_parser("gen-data", help="generate synthetic calibrated tables")
    _add_common(p, default_out="data")

    p = sub.add_parser("gradcheck", help="finite-difference audit of network gradients")
    p.add_argument("--nets", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _load(args):
    from dispatchlab.harness import load_config

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except Exception as err:  # structured failure for scripting
        print(f"error: {err}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.verb == "gradcheck":
        from dispatchlab.nets import gradient_check_suite

        worst = gradient_check_suite(n_nets=args.nets, seed=args.seed)
        print(f"max relative gradient error over {args.nets} networks: {worst:.3e}")
        if worst >= 1e-4:
            print("error: gradient check failed (>= 1e-4)", file=sys.stderr)
            return 1
        return 0

    if args.verb == "gen-data":
        from dispatchlab.harness import ConfigError
        from dispatchlab.tables import generate_synthetic_tables

        cfg = _load(args)
        if cfg.env.synthetic is None:
            raise ConfigError("environment.kind: gen-data needs a calibrated config")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rng = np.random.default_rng(cfg.seed)
        req, shifts = generate_synthetic_tables(
            cfg.env.synthetic, rng, out / "requests.csv", out / "shifts.csv")
        print(f"wrote {req} and {shifts}")
        return 0

    from dispatchlab import harness

    cfg = _load(args)
    if args.verb == "simulate":
        rows = harness.simulate_baseline(cfg, args.out, episodes=args.episodes)
        _print_rows(rows[: min(len(rows), 10)])
        print(f"wrote {Path(args.out) / 'metrics.csv'} ({len(rows)} episode rows)")
        return 0

    if args.verb == "train":
        cfg = replace(cfg, models=(args.model,))
        rows = harness.run_experiment(cfg, args.out, epochs=args.epochs,
                                      progress=args.progress or None)
        _print_rows(rows)
        return 0

    if args.verb == "sweep-rho":
        rows = harness.sweep_rho(cfg, args.out, epochs=args.epochs,
                                 progress=args.progress or None)
        _print_rows(rows)
        return 0

    if args.verb == "evaluate":
        row = harness.evaluate_policy(args.checkpoint, cfg.env,
                                      args.episodes or cfg.eval_episodes, cfg.seed,
                                      reward=cfg.reward)
        _print_rows([row])
        return 0
    raise ValueError(f"unknown verb {args.verb}")


def _print_rows(rows) -> None:
    print(f"{'model':>6} {'rho':>5} {'q_d':>4} {'q_s':>4} {'answer':>7} {'pickup_s':>9} "
          f"{'reward_s':>9} {'rep':>4}")
    for r in rows:
        print(f"{r.model:>6} {r.rho:>5.2f} {r.q_d:>4.1f} {r.q_s:>4.1f} {r.answer_rate:>7.3f} "
              f"{r.mean_pickup_time_s:>9.2f} {r.mean_agent_reward_s:>9.2f} {r.replication:>4}")


if __name__ == "__main__":
    sys.exit(main())
