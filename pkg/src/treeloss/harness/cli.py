"""Command-line entry point: ``treeloss <subcommand> [flags]``.

Exit codes: 0 success, 1 input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from ..errors import DepthLimitError, DivergenceError, InvalidInputError
from .csvio import raw_path, write_rows
from .experiments import CI_TRIALS, DEFAULTS, LOSSES, TRIALS, default_spec, loglog_slope, mean_by, run_experiment
from .train import run_train

EXPERIMENTS = {
    "exp1": "I",
    "exp2": "II",
    "exp3": "III",
    "exp4": "IV",
    "norms": "NORMS",
    "bounds": "BOUNDS",
}
INT_SETTINGS = ("n", "d", "k")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors (exit 1); exit 2 is kept for numerical failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _number(name, text):
    value = float(text)
    if name in INT_SETTINGS:
        if value != int(value):
            raise ValueError(f"{name} must be an integer")
        return int(value)
    return value


def parse_sweep(text):
    """``name=v1,v2,...`` -> ``(name, (v1, v2, ...))``."""
    name, sep, values = text.partition("=")
    name = name.strip()
    if not sep or not name or not values.strip():
        raise argparse.ArgumentTypeError(f"expected name=v1,v2,..., got {text!r}")
    try:
        return name, tuple(_number(name, v) for v in values.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad sweep value in {text!r}: {exc}") from None


def parse_losses(text):
    losses = tuple(s.strip() for s in text.split(",") if s.strip())
    unknown = [s for s in losses if s not in LOSSES]
    if not losses or unknown:
        raise argparse.ArgumentTypeError(f"losses must be drawn from {', '.join(LOSSES)}, got {text!r}")
    return losses


def _add_experiment_parser(sub, name, experiment):
    sweep, values, _ = DEFAULTS[experiment]
    p = sub.add_parser(name, help=f"experiment {experiment} (default sweep {sweep}={','.join(map(str, values))})")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--base", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--lambda", dest="lambda_assumed", type=float, help="assumed metric distortion (norms/bounds)")
    p.add_argument("--trials", type=int, help=f"seeds per sweep point (default {TRIALS})")
    p.add_argument("--ci-mode", action="store_true", help=f"use {CI_TRIALS} trials")
    p.add_argument("--seed", type=int, default=0, help="first seed; trial t uses seed + t")
    p.add_argument("--sweep", type=parse_sweep, help="name=v1,v2,...")
    p.add_argument("--loss", type=parse_losses, help="comma-separated subset of tree,utree,xent")
    p.add_argument("--steps-per-sample", type=int, help="SGD iterations per training sample")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--out", default=f"results/{name}.csv", help="results CSV; per-trial rows go to *_trials.csv")
    p.set_defaults(experiment=experiment)


def build_parser():
    parser = _Parser(prog="treeloss", description="Tree-structured cross-entropy experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, experiment in EXPERIMENTS.items():
        _add_experiment_parser(sub, name, experiment)

    t = sub.add_parser("train", help="train on a dataset CSV with a tree built from an embeddings file")
    t.add_argument("--data", required=True, help="training CSV: label,f1,...,fd")
    t.add_argument("--embeddings", required=True, help="word2vec text file, one line per label")
    t.add_argument("--test", help="evaluation CSV (default: the training set)")
    t.add_argument("--out", default="train_out", help="output directory")
    t.add_argument("--base", type=float, default=2.0)
    t.add_argument("--loss", type=parse_losses, default=("tree", "xent"))
    t.add_argument("--iterations", type=int, help="SGD iterations (default 20 n)")
    t.add_argument("--eta", type=float, help="constant step size (default 0.1)")
    t.add_argument("--theory-B", dest="theory_B", type=float, help="use the B / (rho sqrt T) step with this B")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--shuffle", action="store_true", help="sample in shuffled epochs instead of with replacement")
    t.add_argument("--no-averaging", dest="averaging", action="store_false", help="return the last iterate")
    return parser


def _experiment_spec(args):
    overrides = {}
    for name in ("n", "d", "k", "sigma", "base", "epsilon", "lambda_assumed", "steps_per_sample"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if args.sweep is not None:
        overrides["sweep"], overrides["values"] = args.sweep
    if args.loss is not None:
        overrides["losses"] = args.loss
    if args.trials is not None:
        overrides["trials"] = args.trials
    elif args.ci_mode:
        overrides["trials"] = CI_TRIALS
    return default_spec(args.experiment, seed=args.seed, jobs=args.jobs, **overrides)


def _summary(spec, results):
    lines = []
    if spec.experiment in ("NORMS", "BOUNDS"):
        for r in results:
            lines.append(
                f"{spec.sweep}={r['value']}: ||W*||={r['mean_w_norm']:.4g} ||U*||={r['mean_u_norm']:.4g} "
                f"lemma2 {r['lemma2_rate']:.0%} lemma3 {r['lemma3_rate']:.0%}"
            )
        return lines
    for r in results:
        lines.append(
            f"{spec.sweep}={r['value']} {r['loss']}: top1 {r['mean_top1']:.4f} +- {r['stderr_top1']:.4f} "
            f"||W||={r['mean_w_norm']:.4g}"
        )
    numeric = all(isinstance(v, (int, float)) and v > 0 for v in spec.values)
    if spec.experiment == "II" and numeric and len(spec.values) > 1:
        for loss in spec.losses:
            norms = mean_by(results, loss, "mean_param_norm")
            xs = sorted(norms)
            lines.append(f"log-log slope of parameter norm vs {spec.sweep} ({loss}): "
                         f"{loglog_slope(xs, [norms[x] for x in xs]):.4f}")
    return lines


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            rows = run_train(
                args.data, args.embeddings, args.out, base=args.base, losses=args.loss,
                iterations=args.iterations, eta=args.eta, theory_B=args.theory_B, seed=args.seed,
                shuffle=args.shuffle, averaging=args.averaging, test_path=args.test,
            )
            for r in rows:
                print(f"{r['loss']}: loss {r['mean_loss']:.4f} top1 {r['top1']:.4f} "
                      f"SA {r['similarity_accuracy']:.4f}")
            return EXIT_OK
        spec = _experiment_spec(args)
        results, raw = run_experiment(spec)
        write_rows(args.out, results)
        write_rows(raw_path(args.out), raw)
        for line in _summary(spec, results):
            print(line)
        return EXIT_OK
    except (DivergenceError, DepthLimitError) as exc:
        print(f"treeloss: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidInputError, OSError) as exc:
        print(f"treeloss: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
