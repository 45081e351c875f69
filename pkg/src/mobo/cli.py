"""Command-line entry point: ``mobo run | batch | report | dist-check``."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import runner, scalar_dist
from .config import ConfigError, load_batch_config, load_run_config

OUTPUT_ROOT_ENV = "MOBO_OUTPUT_ROOT"

log = logging.getLogger("mobo")


class UsageError(ValueError):
    pass


def _default_out() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "results"))


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError as exc:
        raise UsageError(f"cannot parse number list {text!r}") from exc


def _csv(rows: list[dict], columns: list[str], delimiter: str) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, delimiter=delimiter, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: row[c] for c in columns})
    return buf.getvalue()


def cmd_run(args) -> int:
    cfg = load_run_config(args.config, args.set)
    out = Path(args.out) if args.out else _default_out()
    path = out / f"{cfg.run_name()}.jsonl"
    records = runner.run(cfg)
    runner.write_records(records, path)
    entries = {e["path"]: e for e in runner.read_manifest(out)}
    entries[path.name] = runner.manifest_entry(cfg, path, "complete")
    runner.write_manifest(out, list(entries.values()))

    last = records[-1]
    print(f"run        {cfg.run_name()}")
    print(f"evaluations {last.eval_index} ({len(records)} acquisitions)")
    print(f"final HV   {last.hypervolume_so_far:.6f}")
    print(f"fallbacks  {sum(r.fallback for r in records)}")
    print(f"median fit {np.median([r.wall_time_model_fit for r in records]):.3f}s  "
          f"median acquisition {np.median([r.wall_time_acquisition for r in records]):.3f}s")
    print(f"records    {path}")
    return 0


def cmd_batch(args) -> int:
    batch = load_batch_config(args.config, args.set)
    out = Path(args.out) if args.out else _default_out()
    entries = runner.run_batch(batch, out, jobs=args.jobs, resume=args.resume)
    failed = [e for e in entries if e["status"] != "complete"]
    print(f"{len(entries)} runs, {len(failed)} failed; manifest at {out / runner.MANIFEST}")
    for e in failed:
        print(f"  FAILED {e['path']}: {e.get('error', '')}", file=sys.stderr)
    return 1 if failed else 0


def cmd_report(args) -> int:
    results = Path(args.dir)
    if not results.is_dir():
        raise UsageError(f"results directory {results} does not exist")
    try:
        hv_rows = runner.aggregate(results, problem=args.problem)
        timing = runner.timing_summary(results, problem=args.problem)
    except runner.AggregateError as exc:
        raise UsageError(str(exc)) from exc
    hv_text = _csv(hv_rows, ["algorithm", "eval_index", "hv_median", "hv_lo", "hv_hi"], args.delimiter)
    t_text = _csv(timing, ["algorithm", "median_fit_s", "median_acq_s"], args.delimiter)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        runner._atomic_write(out / "hypervolume.csv", hv_text)
        runner._atomic_write(out / "timing.csv", t_text)
    sys.stdout.write(hv_text + "\n" + t_text)
    return 0


def density_table(sp: scalar_dist.ScalarisedPosterior, gumbel, laplace, points: int = 4001):
    """Grid of the exact, Gumbel and Laplace densities for plotting."""
    lo, hi = sp.support_hint(10.0)
    if gumbel is not None:
        # the Gumbel right tail decays slowly; extend the grid to cover it
        hi = max(hi, gumbel.location + 25.0 * gumbel.scale)
        lo = min(lo, gumbel.location - 4.0 * gumbel.scale)
    g = np.linspace(lo, hi, points)
    table = {"g": g, "exact_pdf": scalar_dist.exact_pdf(sp, g)}
    table["gumbel_pdf"] = scalar_dist.gumbel_pdf(gumbel, g) if gumbel else np.full(points, np.nan)
    table["laplace_pdf"] = scalar_dist.laplace_pdf(laplace, g) if laplace else np.full(points, np.nan)
    return table


def cmd_dist_check(args) -> int:
    means, stds, weights = _floats(args.means), _floats(args.stds), _floats(args.weights)
    if not (means.size == stds.size == weights.size) or means.size == 0:
        raise UsageError("--means, --stds and --weights must have the same non-zero length")
    ideal = _floats(args.ideal) if args.ideal else np.zeros_like(means)
    if ideal.size != means.size:
        raise UsageError("--ideal must match the length of --means")
    if args.samples < 10_000:
        raise UsageError("--samples must be at least 10000")
    sp = scalar_dist.ScalarisedPosterior.from_predictions(means, stds, weights, ideal)
    report = scalar_dist.gaussianity_report(sp, args.samples, np.random.default_rng(args.seed))
    for key, value in report.to_dict().items():
        print(f"{key:16s} {value}")

    gumbel = scalar_dist.GumbelParams(report.gumbel_location, report.gumbel_scale)
    try:
        laplace = scalar_dist.laplace_fit(sp)
        print(f"{'laplace_mode':16s} {laplace.mode}")
        print(f"{'laplace_prec':16s} {laplace.precision}")
    except scalar_dist.LaplaceFitError as exc:
        log.warning("Laplace approximation unavailable: %s", exc)
        laplace = None

    if args.table:
        table = density_table(sp, gumbel, laplace)
        cols = list(table)
        rows = [dict(zip(cols, vals)) for vals in zip(*table.values())]
        runner._atomic_write(Path(args.table), _csv(rows, cols, ","))
        print(f"{'density_table':16s} {args.table}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mobo", description="Multi-objective Bayesian optimisation harness")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a single optimisation run")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ROOT_ENV} or ./results)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="run a problems x algorithms x seeds grid")
    p.add_argument("--config", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("report", help="aggregate hypervolume and timing tables")
    p.add_argument("--dir", required=True)
    p.add_argument("--problem", help="problem label when a directory holds several")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--out", help="also write hypervolume.csv and timing.csv here")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("dist-check", help="compare the scalarised distribution with its approximations")
    p.add_argument("--means", required=True)
    p.add_argument("--stds", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--ideal")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--table", help="CSV path for the density curves")
    p.set_defaults(func=cmd_dist_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.exception("command failed")
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
