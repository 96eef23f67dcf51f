"""Command-line front end: ``neyman-al {run,sweep,oracle-check,report}``."""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import config as cfgmod
from .oracle import run_oracle_check
from .report import (
    HISTOGRAM_COLUMNS,
    SUMMARY_COLUMNS,
    build_report,
    csv_text,
    render_text,
    write_outputs,
)
from .simulation import monte_carlo

log = logging.getLogger("neyman_al")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _load(args):
    path = Path(args.config)
    if not path.is_file():
        raise cfgmod.ConfigError(f"config file not found: {path}")
    config, doc, text = cfgmod.load(path)
    return _override(config, args), doc, text


def _override(config, args):
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.replications is not None:
        if args.replications < 1:
            raise cfgmod.ConfigError("--replications must be >= 1")
        config = replace(config, replications=args.replications)
    return config


def _execute(config, out_dir, threads):
    summary, records = monte_carlo(config, threads=threads)
    report = build_report(cfgmod.config_to_dict(config), summary, records)
    write_outputs(out_dir, report, config.seed)
    return summary


def cmd_run(args):
    config, _, _ = _load(args)
    summary = _execute(config, args.out, args.threads)
    print(render_text(summary))
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_sweep(args):
    config, doc, text = _load(args)
    axes, cap = cfgmod.sweep_axes(doc, text)
    names = list(axes)
    grid = list(itertools.product(*(axes[n] for n in names)))
    if len(grid) > cap:
        raise cfgmod.ConfigError(f"sweep grid has {len(grid)} points, above the cap of {cap}")
    out = Path(args.out)
    if not names:
        summary = _execute(config, out, args.threads)
        print(render_text(summary))
        rows = [dict(r) for r in summary["rounds"]]
        (out / "sweep.csv").write_text(csv_text(rows, SUMMARY_COLUMNS, {"point": 0}), encoding="utf-8")
        return EXIT_OK

    all_rows = []
    for i, values in enumerate(grid):
        point = dict(zip(names, values))
        label = "_".join(f"{k}={v}" for k, v in point.items())
        sub = out / f"point_{i:03d}_{label}"
        pconf = _override(cfgmod.from_dict(cfgmod.apply_point(doc, point), None), args)
        log.info("sweep point %d/%d: %s", i + 1, len(grid), label)
        summary = _execute(pconf, sub, args.threads)
        for r in summary["rounds"]:
            row = dict(r)
            row.update({"point": i, **{f"axis_{k}": v for k, v in point.items()}})
            all_rows.append(row)
        print(f"[{i + 1}/{len(grid)}] {label} -> {sub}")
    axis_cols = ["point"] + [f"axis_{k}" for k in names]
    text_csv = csv_text(all_rows, tuple(axis_cols) + SUMMARY_COLUMNS)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(text_csv, encoding="utf-8")
    print(f"wrote {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_oracle_check(args):
    return EXIT_OK if run_oracle_check() else EXIT_RUNTIME


def cmd_report(args):
    out = Path(args.out)
    path = out / "report.json"
    if not path.is_file():
        raise cfgmod.ConfigError(f"no report.json in {out}")
    report = json.loads(path.read_text(encoding="utf-8"))
    summary = report["summary"]
    (out / "summary.csv").write_text(csv_text(summary["rounds"], SUMMARY_COLUMNS), encoding="utf-8")
    (out / "histogram.csv").write_text(csv_text(summary["histograms"], HISTOGRAM_COLUMNS), encoding="utf-8")
    print(render_text(summary))
    cold = summary.get("cold_start")
    if cold:
        print(json.dumps(cold, indent=1))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="neyman-al", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True):
        sp.add_argument("--config", required=needs_config, help="experiment config (JSON)")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the replication seed")
        sp.add_argument("--replications", type=int, default=None, help="override R")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker processes for replications (default: all cores)")

    common(sub.add_parser("run", help="run one experiment"))
    common(sub.add_parser("sweep", help="run the cartesian product of the config's sweep axes"))
    sub.add_parser("oracle-check", help="exhaustive unbiasedness check on tiny populations")
    rp = sub.add_parser("report", help="re-render CSV tables from an existing report.json")
    rp.add_argument("--out", required=True, help="directory holding report.json")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "oracle-check": cmd_oracle_check, "report": cmd_report}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
