"""``alma-recon`` command line: simulate | run | sweep | report."""

import argparse
import csv
from dataclasses import replace
import json
import logging
import math
from pathlib import Path
import sys

from .experiment import (
    ConfigError,
    ExperimentConfig,
    _cell_name,
    cjv_quality_threshold,
    make_problem,
    metric_sweep,
    read_records,
    run_grid,
    summarize,
    write_summary,
)
from .simulation import export_run

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 2, 3

log = logging.getLogger("alma_recon")


def _load_config(args):
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.scale is not None:
        overrides["n"] = args.scale
    if args.runs is not None:
        overrides["runs"] = args.runs
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.out is not None:
        overrides["output_dir"] = args.out
    try:
        return replace(cfg, **overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def cmd_simulate(cfg, args):
    root = Path(cfg.output_dir) / "data"
    for ur in cfg.ur_list:
        for nl in cfg.nl_list:
            for k in range(cfg.runs):
                prob = make_problem(ur, nl, k, cfg)
                export_run(
                    root / f"{_cell_name(ur, nl)}_run{k:03d}",
                    prob.f, prob.op.mask, prob.b, prob.seed, prob.mask_gm, prob.mask_wm,
                    extra={"ur_pct": ur, "nl_pct": nl, "run_index": k, "eta": prob.eta,
                           "n_coils": cfg.n_coils, "noise_convention": cfg.noise_convention},
                )
    print(f"wrote {len(cfg.ur_list) * len(cfg.nl_list) * cfg.runs} runs to {root}")
    return EXIT_OK


def cmd_run(cfg, args):
    out, code = run_grid(cfg)
    print(f"results in {out}")
    return code


def cmd_sweep(cfg, args):
    from .alma import alma_run

    prob = make_problem(args.ur, args.nl, args.run_index, cfg)
    lam, x_alm, trace = alma_run(prob.op, prob.b, prob.coils, prob.eta, cfg.alma, cfg.solver)
    factors = cfg.lambda_sweep.factors()
    _, reports = metric_sweep(prob, lam * factors, cfg.solver, x0=x_alm)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"sweep_{_cell_name(args.ur, args.nl)}_run{args.run_index:03d}"
    with open(out / f"{stem}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "lambda_over_alm", "mssim", "psnr", "cjv"])
        for fac, r in zip(factors, reports):
            w.writerow([repr(lam * fac), repr(float(fac)), repr(r.mssim), repr(r.psnr_db),
                        repr(r.cjv)])
    info = {"lambda_alm": lam, "iterations": len(trace)}
    if args.cjv_threshold:
        cmin = min(r.cjv for r in reports)
        thr, grid, values = cjv_quality_threshold(prob, cfg.solver, cjv_min=cmin)
        info["cjv_threshold"] = thr
        with open(out / f"{stem}_cjv_0_2.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "cjv"])
            w.writerows([repr(float(g)), repr(float(v))] for g, v in zip(grid, values))
    (out / f"{stem}.json").write_text(json.dumps(info, indent=2))
    print(json.dumps(info))
    return EXIT_OK


def cmd_report(cfg, args):
    out = Path(cfg.output_dir)
    rows = read_records(out / "records.csv")
    table = summarize(rows, cfg.ur_list, cfg.nl_list)
    write_summary(out / "summary.csv", table)
    cols = ("iterations", "mssim_alm", "psnr_alm", "cjv_alm", "ratio_mssim_alm",
            "ratio_psnr_alm", "ratio_cjv_alm")
    print("ur    nl    runs " + " ".join(f"{c:>22s}" for c in cols))
    for row in table:
        cells = " ".join(
            f"{row[c + '_mean']:>11.4f}±{row[c + '_sd']:<10.4f}"
            if not math.isnan(row[c + "_mean"]) else f"{'-':>22s}"
            for c in cols
        )
        print(f"{row['ur_pct']:<5.2f} {row['nl_pct']:<5.2f} {row['runs']:>4d} {cells}")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with ExperimentConfig fields")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--scale", type=int, help="image size n (n x n)")
    common.add_argument("--runs", type=int, help="runs per (UR, NL) cell")
    common.add_argument("--threads", type=int, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="alma-recon", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="export simulated k-space datasets")
    sub.add_parser("run", parents=[common], help="run the full experiment grid")
    sw = sub.add_parser("sweep", parents=[common], help="lambda sweep for a single run")
    sw.add_argument("--ur", type=float, default=0.2)
    sw.add_argument("--nl", type=float, default=0.03)
    sw.add_argument("--run-index", type=int, default=0)
    sw.add_argument("--cjv-threshold", action="store_true",
                    help="also evaluate the CJV quality threshold over lambda in [0, 2]")
    sub.add_parser("report", parents=[common], help="rebuild summary.csv from records.csv")
    return p


COMMANDS = {"simulate": cmd_simulate, "run": cmd_run, "sweep": cmd_sweep, "report": cmd_report}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return COMMANDS[args.command](cfg, args)


if __name__ == "__main__":
    sys.exit(main())
