"""Serialisation of Monte Carlo results: report.json, CSV tables, manifest."""
from __future__ import annotations

import csv
import io
import json
import math
import platform
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__

SCHEMA_VERSION = 1

SUMMARY_COLUMNS = (
    "n_init", "strategy", "positive_class", "round", "batch_size", "replications", "true_rate",
    "mean_estimate", "bias", "mse", "mean_variance_est", "empirical_variance", "design_variance",
    "srs_reference_variance", "variance_ratio_vs_srs", "mean_cost", "mean_cumulative_labeled",
    "mean_strata", "matched_budget", "cost_ratio_matched_variance",
)
HISTOGRAM_COLUMNS = ("n_init", "strategy", "round", "bin", "bin_lower", "bin_upper", "mean_count", "share")


def fmt(value):
    """12 significant digits, locale-free; blanks for missing values."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(float(value), ".12g")
    return str(value)


def csv_text(rows, columns, extra=None):
    """CSV with a ``# schema_version`` header line."""
    buf = io.StringIO()
    buf.write(f"# schema_version={SCHEMA_VERSION}\n")
    extra = extra or {}
    cols = tuple(extra) + tuple(columns)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([fmt(extra[c]) if c in extra else fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def build_report(config_doc, summary, records):
    return {
        "schema_version": SCHEMA_VERSION,
        "config": config_doc,
        "summary": summary,
        "notes": {
            "combined_variance": "approximate: rounds treated as independent",
            "ues_estimate": "plain mean of all labels collected so far (biased baseline)",
            "variances": "design_variance is exact given the true labels; mean_variance_est "
                         "averages the estimator; empirical_variance is across replications",
        },
        "replications": [asdict(r) for r in records],
    }


def write_outputs(out_dir, report, seed, version=__version__):
    """Write report.json, summary.csv, histogram.csv and manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = report["summary"]
    (out / "report.json").write_text(
        json.dumps(_jsonable(report), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    (out / "summary.csv").write_text(csv_text(summary["rounds"], SUMMARY_COLUMNS), encoding="utf-8")
    (out / "histogram.csv").write_text(csv_text(summary["histograms"], HISTOGRAM_COLUMNS), encoding="utf-8")
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "code_version": version,
        "seed": seed,
        "config": report["config"],
        "kernel_backend": summary.get("kernel_backend"),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "files": ["report.json", "summary.csv", "histogram.csv"],
    }
    (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=1, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return out


def render_text(summary):
    """Short human-readable table of per-round results."""
    lines = [f"{'n_init':>6} {'strategy':<5} {'cls':>3} {'rnd':>3} {'estimate':>9} "
             f"{'emp.var':>11} {'est.var':>11} {'ratio':>7} {'cost':>8}"]
    for r in summary["rounds"]:
        ratio = r.get("variance_ratio_vs_srs")
        ev = r.get("mean_variance_est")
        lines.append(
            f"{r['n_init']:>6} {r['strategy']:<5} {r['positive_class']:>3} {r['round']:>3} "
            f"{r['mean_estimate']:>9.4f} {r['empirical_variance']:>11.4e} "
            f"{(format(ev, '.4e') if ev is not None else '-'):>11} "
            f"{(format(ratio, '.3f') if ratio is not None else '-'):>7} {r['mean_cost']:>8.1f}")
    return "\n".join(lines)
