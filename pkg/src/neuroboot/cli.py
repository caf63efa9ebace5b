"""Command-line front end.

    neuroboot solve --config sphere_jump [--seed S] [--epochs E] [--workers W] [--out DIR] [--resolution N]
    neuroboot sweep --config sphere_jump --resolutions 8 16 [...]
    neuroboot check --config sphere_jump

Exit codes: 0 success, 1 config error, 2 numerical failure, 3 I/O error,
4 verification failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import oracles
from .config import RunConfig, load_run_config
from .errors import ConfigError, NumericalFailure
from .evalmetrics import ErrorReport, evaluate_errors, export_field, export_field_csv, fill_orders, write_report_csv
from .fileio import write_csv
from .surrogate import save_checkpoint
from .training import train, with_overrides

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO, EXIT_CHECK = 0, 1, 2, 3, 4

log = logging.getLogger("neuroboot")


def _load(args) -> RunConfig:
    rc = load_run_config(args.config)
    rc.train = with_overrides(
        rc.train,
        seed=args.seed,
        epochs=args.epochs,
        workers=args.workers,
        base_resolution=getattr(args, "resolution", None),
    )
    if getattr(args, "out", None):
        rc.output_dir = Path(args.out)
    return rc


def solve(rc: RunConfig, out_dir: Path | None = None, echo=print) -> ErrorReport | None:
    """Train, then write checkpoint, loss history, timings, report (if exact), and fields."""
    out = Path(out_dir or rc.output_dir)
    cfg = rc.train
    echo(f"solving N={cfg.base_resolution} L={cfg.refinement_levels} epochs={cfg.epochs} seed={cfg.seed}")
    result = train(rc.problem, cfg)
    # history.csv is reproducible byte for byte; wall-clock times go elsewhere
    write_csv(out / "history.csv", ("epoch", "loss"), [(e, loss) for e, loss, _ in result.history])
    write_csv(out / "timing.csv", ("epoch", "seconds"), [(e, sec) for e, _, sec in result.history])
    save_checkpoint(result.pair, out / "checkpoint.json", rc.problem_hash)
    export_field(result.pair, rc.problem, rc.eval.M, out / "field.vtk")
    export_field_csv(result.pair, rc.problem, rc.eval.M, out / "field.csv")
    report = None
    if rc.eval.has_exact:
        rmse, linf = evaluate_errors(result.pair, rc.problem, rc.eval.exact_minus, rc.eval.exact_plus, rc.eval.M)
        report = ErrorReport(cfg.base_resolution, rmse, linf, epochs=cfg.epochs,
                             seconds_per_epoch=result.seconds_per_epoch)
        write_report_csv([report], out / "report.csv")
        echo(f"N={cfg.base_resolution} rmse={rmse:.4e} linf={linf:.4e} sec/epoch={report.seconds_per_epoch:.4g}")
    return report


def cmd_solve(args) -> int:
    rc = _load(args)
    solve(rc)
    return EXIT_OK


def cmd_sweep(args) -> int:
    rc = _load(args)
    resolutions = list(args.resolutions)
    if resolutions != sorted(resolutions) or any(n < 4 or n & (n - 1) for n in resolutions):
        raise ConfigError("resolutions must be ascending powers of two >= 4", "/train/base_resolution")
    if not rc.eval.has_exact:
        raise ConfigError("a sweep needs exact_minus and exact_plus", "/eval")
    reports = []
    for n in resolutions:
        run = replace(rc, train=replace(rc.train, base_resolution=n))
        reports.append(solve(run, rc.output_dir / f"N{n}"))
    reports = fill_orders(reports)
    write_report_csv(reports, rc.output_dir / "convergence.csv")
    print(f"{'N':>6} {'rmse':>11} {'order':>6} {'linf':>11} {'order':>6} {'sec/epoch':>10}")
    for r in reports:
        o1 = "-" if r.order_rmse is None else f"{r.order_rmse:.2f}"
        o2 = "-" if r.order_linf is None else f"{r.order_linf:.2f}"
        print(f"{r.resolution:>6} {r.rmse:>11.3e} {o1:>6} {r.linf:>11.3e} {o2:>6} {r.seconds_per_epoch:>10.4g}")
    return EXIT_OK


def cmd_check(args) -> int:
    rc = _load(args)
    results = oracles.run_all(rc.problem, rc.train, rc.eval.exact_minus, rc.eval.exact_plus)
    for res in results:
        print(res.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neuroboot", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="config file or built-in name")
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("solve", help="train one configuration")
    common(p)
    p.add_argument("--resolution", type=int, help="base resolution N")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="convergence sweep over resolutions")
    common(p)
    p.add_argument("--resolutions", type=int, nargs="+", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="run verification oracles")
    common(p)
    p.add_argument("--resolution", type=int, help="base resolution N")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc.message} (at {exc.pointer or '/'})", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
