"""Command-line entry points: train, eval, sweep, verify-theory, plot.

Exit codes: 0 success, 1 usage or config error, 2 run failure,
3 acceptance-check failure (verify-theory only).
"""

import argparse
import os
import sys

import numpy as np

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUN = 2
EXIT_CHECK = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the documented contract is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_args(p):
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--config", help="TOML run config path")
    group.add_argument("--preset",
                       choices=("cartpole", "acrobot", "bitflip", "ocloud"),
                       help="built-in per-task configuration")
    p.add_argument("--set", action="append", default=[], metavar="SEC.KEY=V",
                   help="override one config value (repeatable)")
    p.add_argument("--seed", action="append", type=int, default=None,
                   help="run seed (repeatable, wins over the config file)")


def _load_cfg(args):
    from sadq.config import apply_overrides, config_from_dict, load_config

    if args.config:
        return load_config(args.config, overrides=args.set, seeds=args.seed)
    from sadq.config import PRESETS

    data = {}
    apply_overrides(data, args.set)
    if args.seed:
        data.setdefault("schedule", {})["seeds"] = list(args.seed)
    base = dict(PRESETS[args.preset])
    env_params = base.pop("env_params", {})
    from sadq.config import TrainConfig

    cfg = TrainConfig(env_params=dict(env_params), **base)
    merged = cfg.to_dict()
    for section, table in data.items():
        merged.setdefault(section, {}).update(table)
    return config_from_dict(merged)


def cmd_train(args):
    from sadq.trainer import train_run

    cfg = _load_cfg(args)
    out = args.out or os.path.join("runs", f"{cfg.env_id}-{cfg.variant}")
    results = train_run(cfg, out_dir=out)
    for seed, res in results.items():
        note = " (stopped early)" if res.stopped_early else ""
        print(f"seed {seed}: env_steps={res.env_steps} "
              f"final_eval={res.final_eval:.3f} "
              f"best_eval={res.best_eval:.3f}{note}")
    print(f"artifacts under {out}")
    return EXIT_OK


def cmd_eval(args):
    from sadq.trainer import Trainer, evaluate, _build_env

    trainer = Trainer.load(args.checkpoint)
    trainer.close()
    env = _build_env(trainer.cfg)
    rng = np.random.default_rng(np.random.SeedSequence(args.eval_seed))
    report = evaluate(trainer.agent, env, args.episodes, rng, rng)
    print(f"episodes={args.episodes} return_mean={report.mean:.3f} "
          f"return_std={report.std:.3f} "
          f"terminal_fraction={report.solved.mean():.3f}")
    return EXIT_OK


def cmd_sweep(args):
    from sadq.sweep import sweep

    cfg = _load_cfg(args)
    out = args.out or os.path.join("runs", f"sweep-{cfg.env_id}")
    results = sweep(cfg, out, alphas=args.alpha, betas=args.beta, ks=args.k,
                    seeds=args.seed, workers=args.workers)
    for res in results:
        print(f"alpha={res.alpha} beta={res.beta} k={res.k} seed={res.seed} "
              f"{res.status} final={res.final_eval:.3f} "
              f"best={res.best_eval:.3f}")
    print(f"summary: {os.path.join(out, 'summary.csv')}")
    if any(res.status != "ok" for res in results):
        return EXIT_RUN
    return EXIT_OK


def cmd_verify_theory(args):
    from sadq.theory import verify_theory

    report = verify_theory(
        n_mdps=args.mdps, n_states=args.states, n_actions=args.actions,
        gamma=args.gamma, alphas=tuple(args.alpha or (0.25, 0.5, 0.75)),
        pairs_per_mdp=args.pairs, bias_pairs_per_mdp=args.bias_pairs,
        n_samples=args.samples, seed=args.theory_seed)
    print("variance bound: fraction of stochastic (s,a) pairs with "
          "Var(mixed) < ((1-a)^2 + a^2) Var(plain)")
    for alpha, frac in sorted(report.variance_pass_fraction.items()):
        print(f"  alpha={alpha}: {frac:.4f}")
    cov = max(abs(r.covariance) for r in report.variance_reports)
    print(f"  largest mixture covariance term: {cov:.3e}")
    zs = [abs(r.diff) / r.std_err
          for r in report.bias_reports if r.std_err > 0]
    print(f"bias preservation: max |mean difference| / stderr = "
          f"{max(zs):.3f} over {len(report.bias_reports)} reports "
          f"(threshold 3)")
    print(f"variance check: {'PASS' if report.variance_ok else 'FAIL'}")
    print(f"bias check:     {'PASS' if report.bias_all_within else 'FAIL'}")
    return EXIT_OK if report.ok else EXIT_CHECK


def cmd_plot(args):
    from sadq.plotting import emit_plot

    emit_plot(args.metrics, args.key or ["eval_return_mean"], args.out,
              log_y=args.log_y, title=args.title)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="sadq",
                     description="Value-based RL with state-aggregated "
                                 "Q-learning targets")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("train", help="train one config over its seeds")
    _add_config_args(p)
    p.add_argument("--out", help="output directory (default runs/<env>-<variant>)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--eval-seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid over alpha/beta/k and seeds")
    _add_config_args(p)
    p.add_argument("--alpha", action="append", type=float, default=None)
    p.add_argument("--beta", action="append", type=float, default=None)
    p.add_argument("--k", action="append", type=int, default=None)
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify-theory",
                       help="check the variance and bias claims on "
                            "tabular MDPs")
    p.add_argument("--mdps", type=int, default=10)
    p.add_argument("--states", type=int, default=20)
    p.add_argument("--actions", type=int, default=4)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--alpha", action="append", type=float, default=None)
    p.add_argument("--pairs", type=int, default=20)
    p.add_argument("--bias-pairs", type=int, default=5)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", dest="theory_seed", type=int, default=0)
    p.set_defaults(func=cmd_verify_theory)

    p = sub.add_parser("plot", help="curves from metrics CSVs as SVG")
    p.add_argument("metrics", nargs="+", help="metrics.csv paths")
    p.add_argument("--key", action="append", default=None,
                   help="metrics column (repeatable)")
    p.add_argument("--out", required=True, help="output SVG path")
    p.add_argument("--log-y", action="store_true")
    p.add_argument("--title")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    from sadq.config import ConfigInvalid

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"sadq: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"sadq: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
