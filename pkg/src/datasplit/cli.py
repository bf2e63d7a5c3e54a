"""Command-line front end: ``datasplit {plan,sweep,noise,calibrate,render}``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import ConfigError, RunConfig, calibration_overlay, load_config
from .data import ParseError, PowerIterationError
from .experiments import (
    NOISE_COLUMNS,
    SWEEP_COLUMNS,
    Experiment,
    plan_report,
    rows_as_strings,
    run_noise,
    run_sweep,
)
from .model import DomainError
from .roots import RootError
from .solver import DivergenceError
from .svg import ChartSpec, render_svg

log = logging.getLogger("datasplit")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
PLAN_COLUMNS = ("device", "tau_local", "b_planned", "b_uniform")


def csv_text(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows_as_strings(rows, columns))
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    log.info("wrote %s", path)


def _threads(n: int) -> int:
    return n if n > 0 else (os.cpu_count() or 1)


def _config(args) -> RunConfig:
    return load_config(args.config, seed=args.seed, out_dir=args.out)


def cmd_plan(args) -> int:
    cfg = _config(args)
    tau_comm = args.tau_comm if args.tau_comm is not None else cfg.timing.tau_comm
    if tau_comm is None:
        raise ConfigError("timing.tau_comm", "plan needs timing.tau_comm or --tau-comm")
    exp = Experiment(cfg)
    text, rows = plan_report(exp, tau_comm)
    sys.stdout.write(text)
    _write(cfg.out_dir / "plan.csv", csv_text(rows, PLAN_COLUMNS))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    rows = run_sweep(Experiment(cfg), _threads(args.threads))
    _write(cfg.out_dir / "results.csv", csv_text(rows, SWEEP_COLUMNS))
    if args.svg:
        spec = ChartSpec(x="tau_comm", y=["speedup"], title="uniform / planned simulated time", y_label="speedup")
        _write(cfg.out_dir / "speedup.svg", render_svg([r for r in rows if not r["error"]], spec))
    failed = sum(1 for r in rows if r["error"])
    if failed:
        log.warning("%d of %d sweep points recorded an error", failed, len(rows))
    return EXIT_OK


def cmd_noise(args) -> int:
    cfg = _config(args)
    rows = run_noise(Experiment(cfg), _threads(args.threads))
    _write(cfg.out_dir / "noise.csv", csv_text(rows, NOISE_COLUMNS))
    if args.svg:
        spec = ChartSpec(
            x="tau_comm",
            y=["ratio_mean"],
            group_by="p",
            band=("ratio_ci_low", "ratio_ci_high"),
            title="noisy / noise-free acceleration",
            y_label="ratio",
        )
        _write(cfg.out_dir / "noise.svg", render_svg([r for r in rows if not r["error"]], spec))
    missed = sum(1 for r in rows if r["within_ci"] is False)
    if missed:
        log.warning("%d of %d cells have the theoretical variance outside the bootstrap CI", missed, len(rows))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    exp = Experiment(cfg)
    cal = exp.calibrate(args.probe_b1)
    print(f"probe b1 {cal.probe.b1}: 2K={cal.observed.two_k} inner={cal.observed.k_inner}")
    print(f"c1 {cal.c1:.12g}")
    print(f"c2 {cal.c2:.12g}")
    _write(cfg.out_dir / "calibration.toml", calibration_overlay(cal.c1, cal.c2))
    return EXIT_OK


def cmd_render(args) -> int:
    try:
        with open(args.csv, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError:
        raise ConfigError("--csv", f"file not found: {args.csv}") from None
    if not rows:
        raise ConfigError("--csv", "no data rows")
    for col in [args.x, *args.y, *(args.band or []), *([args.group] if args.group else [])]:
        if col not in rows[0]:
            raise ConfigError("--csv", f"missing column {col!r}")
    rows = [r for r in rows if not r.get("error")]
    spec = ChartSpec(
        x=args.x,
        y=args.y,
        group_by=args.group,
        band=tuple(args.band) if args.band else None,
        title=args.title or "",
        log_x=not args.linear_x,
    )
    text = render_svg(rows, spec)
    if args.output:
        _write(Path(args.output), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="datasplit", description="Plan and simulate server/worker data splits.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", action="append", required=True, metavar="PATH",
                       help="TOML run config; repeat to apply overlays in order")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides out_dir)")
        p.add_argument("--seed", type=int, help="master seed (overrides seed)")
        p.add_argument("--threads", type=int, default=1, help="worker threads; 0 uses every core")
        p.add_argument("--svg", action="store_true", help="also write an SVG chart")

    p = sub.add_parser("plan", help="print the optimal allocation for one tau_comm")
    common(p)
    p.add_argument("--tau-comm", type=float, help="communication time (overrides timing.tau_comm)")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("sweep", help="planned vs uniform over tau_comm = tau_1 10^l")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("noise", help="acceleration ratio under timing noise")
    common(p)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("calibrate", help="fit c1, c2 from a probe run and write an overlay")
    common(p)
    p.add_argument("--probe-b1", type=int, help="server shard of the probe run (default: uniform split)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("render", help="draw an SVG line chart from a CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--x", default="tau_comm")
    p.add_argument("--y", nargs="+", default=["speedup"])
    p.add_argument("--group", help="one series per distinct value of this column")
    p.add_argument("--band", nargs=2, metavar=("LOW", "HIGH"))
    p.add_argument("--title")
    p.add_argument("--linear-x", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParseError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, RootError, DivergenceError, PowerIterationError, ArithmeticError, ValueError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
