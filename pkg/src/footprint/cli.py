"""``footprint`` command line: one subcommand per pipeline stage plus ``run``.

Exit codes: 0 success, 1 usage or parameter error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from . import pipeline as pl
from .errors import FootprintError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _bool(text: str) -> bool:
    try:
        return pl._bool(text)
    except FootprintError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _csv_ints(text: str) -> tuple[int, ...]:
    try:
        return pl._ints(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _csv_floats(text: str) -> tuple[float, ...]:
    try:
        return pl._floats(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--data", dest="input_data_dir", help="input data directory (users.csv, likes.csv, users-likes.csv)")
    p.add_argument("--out", dest="output_dir", help="output directory for artifacts and reports")
    return p


def _svd_args(p, with_seed=True):
    p.add_argument("-k", "--svd_dimensions", "--svd_dims", dest="svd_dimensions", type=int, help="number of SVD dimensions K")
    p.add_argument("--apply_varimax", type=_bool, help="true/false")
    if with_seed:
        p.add_argument("--seed", dest="svd_seed", type=int, help="SVD random seed")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="footprint", description="Predict psycho-demographic traits from users-likes data.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a planted-signal corpus into the data directory")
    p.add_argument("--n-users", dest="synth_n_users", type=int)
    p.add_argument("--n-likes", dest="synth_n_likes", type=int)
    p.add_argument("--n-factors", dest="synth_n_factors", type=int)
    p.add_argument("--base-rate", dest="synth_like_base_rate", type=float)
    p.add_argument("--affinity-scale", dest="synth_affinity_scale", type=float)
    p.add_argument("--nonlinear-trait", dest="synth_nonlinear_trait")
    p.add_argument("--missing-rate", dest="synth_missing_rate", type=float)
    p.add_argument("--seed", dest="synth_seed", type=int)

    p = sub.add_parser("preprocess", parents=[common], help="build and trim the users-likes matrix")
    p.add_argument("-u", dest="min_users_per_like", type=int, help="minimum users per like")
    p.add_argument("-l", dest="min_likes_per_user", type=int, help="minimum likes per user")

    p = sub.add_parser("impute", parents=[common], help="multiply impute the missing binary trait")
    p.add_argument("-m", dest="imputations", type=int, help="number of imputations")
    p.add_argument("--seed", dest="impute_seed", type=int)
    p.add_argument("--mode", dest="impute_mode", choices=("first", "majority"))
    p.add_argument("--bootstrap", dest="impute_bootstrap", type=_bool)

    p = sub.add_parser("svd", parents=[common], help="truncated SVD and optional varimax rotation")
    _svd_args(p)

    p = sub.add_parser("analyze", parents=[common], help="accuracy by K and trait correlations")
    _svd_args(p)
    p.add_argument("--k-values", dest="k_values", type=_csv_ints, help="comma-separated K values")
    p.add_argument("--per-fold-svd", dest="per_fold_svd", type=_bool)
    p.add_argument("--folds", type=int)

    p = sub.add_parser("regress", parents=[common], help="cross-validated linear/logistic regression")
    p.add_argument("-k", "--svd_dimensions", "--svd_dims", dest="svd_dimensions", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--pooling", dest="cv_pooling", choices=("pooled", "mean"))
    p.add_argument("--seed", dest="cv_seed", type=int)

    p = sub.add_parser("train-nn", parents=[common], help="train a multilayer perceptron on the SVD scores")
    p.add_argument("-k", "--svd_dimensions", "--svd_dims", dest="svd_dimensions", type=int)
    p.add_argument("--hidden", type=_csv_ints, help="hidden layer sizes, e.g. 512 or 2048,1024,1024")
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--batch", dest="batch_size", type=int)
    p.add_argument("--iters", dest="iterations", type=int)
    p.add_argument("--dropout-scheme", dest="dropout_scheme", choices=("a", "b"))
    p.add_argument("--keep", dest="keep_prob", type=float)
    p.add_argument("--seed", dest="nn_seed", type=int)
    p.add_argument("--split", type=_csv_floats, help="train,validation,test fractions")
    p.add_argument("--log-every", dest="log_every", type=int)

    sub.add_parser("report", parents=[common], help="side-by-side comparison of all model reports")

    p = sub.add_parser("run", parents=[common], help="run several stages in order with one config")
    p.add_argument("--stages", type=lambda s: tuple(x.strip() for x in s.split(",") if x.strip()),
                   default=pl.STAGES[1:], help="comma-separated stages (default: all but synth)")
    return parser


def config_from_args(args: argparse.Namespace, environ=None) -> pl.PipelineConfig:
    overrides = {k: v for k, v in vars(args).items() if k in pl.CONFIG_KEYS and v is not None}
    return pl.load_config(args.config, overrides, environ)


def _print_written(cfg: pl.PipelineConfig, names) -> None:
    for n in names:
        print(f"wrote {Path(cfg.output_dir) / n}")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.command == "run":
            results = pl.run_pipeline(cfg, args.stages)
            if "report" in results:
                print(results["report"][1], end="")
            return 0
        result = pl.run_stage(cfg, args.command)
        if args.command == "synth":
            print(f"wrote corpus to {result[0]}")
        elif args.command in ("regress", "train-nn"):
            names, report = result
            _print_written(cfg, names)
            print(pl.rpt.render_report(report, "text"), end="")
        elif args.command == "report":
            names, text = result
            _print_written(cfg, names)
            print(text, end="")
        else:
            _print_written(cfg, result)
        return 0
    except FootprintError as exc:
        print(f"footprint: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"footprint: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
