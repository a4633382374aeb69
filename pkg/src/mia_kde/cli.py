"""Command-line entry point: ``mia-kde run`` and ``mia-kde compare``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .attacks import DEFAULT_PERCENTILES
from .metrics import DEFAULT_FPR_TARGETS, DEFAULT_RISK_MULTIPLIER
from .report import ATTACK_CHOICES, PipelineError, RunConfig, compare_attacks, run_pipeline

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_RISK = 2


class _Parser(argparse.ArgumentParser):
    # exit status 2 is reserved for "risk detected"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _bandwidth(text: str):
    if text == "scott":
        return "scott"
    if text.startswith("fixed:"):
        try:
            h = float(text[len("fixed:"):])
        except ValueError:
            h = float("nan")
        if h > 0:
            return h
    raise argparse.ArgumentTypeError("bandwidth must be 'scott' or 'fixed:<positive number>'")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="mia-kde",
        description="Membership disclosure risk of tabular synthetic data.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run the attacks and write a risk report")
    io_ = run.add_argument_group("inputs and outputs")
    io_.add_argument("--train", help="CSV of records used to train the generator (members)")
    io_.add_argument("--unseen", help="CSV of records not used in training (non-members)")
    io_.add_argument("--synthetic", help="CSV of synthetic records")
    io_.add_argument("--schema", help="schema file; column kinds are inferred when omitted")
    io_.add_argument("--distances-in", help="reuse a distances.csv instead of recomputing")
    io_.add_argument("--distances-out", help="extra copy of the distance table")
    io_.add_argument("--out", required=True, help="output directory")

    proto = run.add_argument_group("protocol")
    proto.add_argument("--attack", choices=ATTACK_CHOICES, default="all")
    proto.add_argument(
        "--percentiles", type=_floats, default=DEFAULT_PERCENTILES,
        help="distance-threshold percentiles (default 10,20,...,90)",
    )
    proto.add_argument("--train-fraction", type=float, default=0.7)
    proto.add_argument("--bandwidth", type=_bandwidth, default="scott", help="scott | fixed:<h>")
    proto.add_argument("--decision-threshold", type=float, default=0.5)
    proto.add_argument("--prior", type=float, default=0.5, help="prior probability of membership")
    proto.add_argument("--fpr-targets", type=_floats, default=DEFAULT_FPR_TARGETS)
    proto.add_argument("--risk-multiplier", type=float, default=DEFAULT_RISK_MULTIPLIER)
    proto.add_argument("--seed", type=int, required=True)
    proto.add_argument("--no-balance-attack", action="store_true",
                       help="keep all training and unseen records in the attack dataset")
    proto.add_argument("--no-balanced-train", action="store_true",
                       help="do not balance the KDE training split")
    proto.add_argument("--no-range-normalize", action="store_true",
                       help="use raw absolute differences for numeric features")
    proto.add_argument("--n-jobs", type=int, default=None, help="threads for the distance scan")
    proto.add_argument("--density-grid", type=int, default=201,
                       help="points in the density-curve dumps")

    cmp_ = sub.add_parser("compare", help="print the realistic vs method1 F1 table of a report")
    cmp_.add_argument("report", help="path to report.json")
    return parser


def _config(args) -> RunConfig:
    return RunConfig(
        seed=args.seed,
        out=args.out,
        train=args.train,
        unseen=args.unseen,
        synthetic=args.synthetic,
        schema=args.schema,
        attack=args.attack,
        percentiles=tuple(args.percentiles),
        train_fraction=args.train_fraction,
        bandwidth=args.bandwidth,
        decision_threshold=args.decision_threshold,
        prior_member=args.prior,
        fpr_targets=tuple(args.fpr_targets),
        risk_multiplier=args.risk_multiplier,
        balance_attack=not args.no_balance_attack,
        balanced_train=not args.no_balanced_train,
        range_normalize=not args.no_range_normalize,
        distances_in=args.distances_in,
        distances_out=args.distances_out,
        n_jobs=args.n_jobs,
        density_grid=args.density_grid,
    )


def _run(args) -> int:
    cfg = _config(args)
    result = run_pipeline(cfg)
    result.write(cfg.out)
    if cfg.distances_out:
        with open(cfg.distances_out, "w", encoding="utf-8", newline="") as fh:
            fh.write(result.files["distances.csv"])
    verdict = "RISK DETECTED" if result.risk_detected else "no risk flag"
    print(f"report written to {os.path.join(cfg.out, 'report.json')} ({verdict})")
    return EXIT_RISK if result.risk_detected else EXIT_OK


def _compare(args) -> int:
    with open(args.report, encoding="utf-8") as fh:
        report = json.load(fh)
    rows = compare_attacks(report)
    print(f"{'pct':>6} {'method1_f1':>11} {'realistic_f1':>13} {'delta':>8} {'>true':>6}")
    for r in rows:
        real = "-" if r["realistic_f1"] is None else f"{r['realistic_f1']:.4f}"
        delta = "-" if r["f1_delta"] is None else f"{r['f1_delta']:+.4f}"
        beats = {None: "-", True: "yes", False: "no"}[r["realistic_exceeds_true_dist"]]
        print(f"{r['percentile']:>6g} {r['method1_f1']:>11.4f} {real:>13} {delta:>8} {beats:>6}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "run":
            return _run(args)
        return _compare(args)
    except (PipelineError, ValueError, OSError) as exc:
        print(f"mia-kde: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
