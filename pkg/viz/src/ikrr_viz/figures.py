"""Figure rendering from ikrr output files."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

RUNS_HEADER = ["config_hash", "n", "trial", "eta", "risk_exact", "risk_mc", "wall_ms", "seed"]
COUNTS_HEADER = ["lambda", "count", "prediction", "ratio"]


class VizError(Exception):
    pass


@dataclass
class FigureSpec:
    inputs: list
    output: str
    theory_slope: Optional[float] = None
    title: str = ""


def _read_csv(path: str, header: list) -> list:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            got = next(reader, None)
            if got != header:
                raise VizError(f"{path} does not match the expected schema {header}")
            return [row for row in reader]
    except FileNotFoundError:
        raise VizError(f"input file not found: {path}") from None


def _read_rate_json(path: str) -> dict:
    try:
        with open(path) as fh:
            rate = json.load(fh)
    except FileNotFoundError:
        raise VizError(f"input file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise VizError(f"{path} is not valid JSON: {exc}") from None
    for key in ("slope", "intercept", "aggregation"):
        if key not in rate:
            raise VizError(f"{path} is missing the rate-fit field {key!r}")
    return rate


def _aggregate_runs(rows: list, aggregation: str) -> tuple:
    by_n = {}
    for row in rows:
        risk = float(row[4])
        if math.isfinite(risk):
            by_n.setdefault(int(row[1]), []).append(risk)
    if not by_n:
        raise VizError("runs.csv contains no finite risk values")
    agg = np.median if aggregation == "median" else np.mean
    ns = np.array(sorted(by_n), dtype=float)
    risks = np.array([float(agg(by_n[int(n)])) for n in ns])
    return ns, risks


def plotted_checksum(values) -> str:
    """Checksum of plotted y-values (17 significant digits)."""
    blob = ",".join("%.17g" % v for v in values)
    return hashlib.sha256(blob.encode()).hexdigest()


def plot_rate(spec: FigureSpec) -> dict:
    """Log-log risk vs n: aggregated points, the OLS line from
    rate.json, and a dashed theoretical-slope reference anchored at the
    first point.  Returns the plotted values and legend labels."""
    if len(spec.inputs) != 2:
        raise VizError("plot_rate needs [runs.csv, rate.json]")
    runs_path, rate_path = spec.inputs
    rows = _read_csv(runs_path, RUNS_HEADER)
    rate = _read_rate_json(rate_path)
    ns, risks = _aggregate_runs(rows, rate["aggregation"])
    if len(ns) < 3:
        raise VizError("plot_rate needs at least 3 distinct n values")

    fit_risks = np.exp(rate["intercept"]) * ns ** rate["slope"]
    fit_label = f"fit: slope {rate['slope']:.3f}"
    labels = [fit_label]

    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.loglog(ns, risks, "o", color="#1f6fb4", label=f"{rate['aggregation']} risk")
    ax.loglog(ns, fit_risks, "-", color="#1f6fb4", label=fit_label)
    if spec.theory_slope is not None:
        theory = risks[0] * (ns / ns[0]) ** spec.theory_slope
        theory_label = f"theory: slope {spec.theory_slope:.3f}"
        ax.loglog(ns, theory, "--", color="#444444", label=theory_label)
        labels.append(theory_label)
    ax.set_xlabel("n")
    ax.set_ylabel("excess risk")
    if spec.title:
        ax.set_title(spec.title)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)
    return {
        "n": ns.tolist(),
        "y": risks.tolist(),
        "legend": labels,
        "checksum": plotted_checksum(risks),
    }


def plot_counts(spec: FigureSpec) -> dict:
    """Count/prediction ratio vs lambda on a log x-axis with a
    reference line at 1."""
    if len(spec.inputs) != 1:
        raise VizError("plot_counts needs [counts.csv]")
    rows = _read_csv(spec.inputs[0], COUNTS_HEADER)
    if not rows:
        raise VizError("counts.csv has no rows")
    lams = np.array([float(r[0]) for r in rows])
    ratios = np.array([float(r[3]) for r in rows])
    if not np.all(np.isfinite(ratios)):
        raise VizError("counts.csv has non-finite ratios (unknown quotient?)")

    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.semilogx(lams, ratios, "o-", color="#b0413e", label="count / prediction")
    ax.axhline(1.0, color="#444444", linestyle="--", linewidth=1.0)
    ax.set_xlabel("lambda")
    ax.set_ylabel("ratio")
    if spec.title:
        ax.set_title(spec.title)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)
    return {
        "lambda": lams.tolist(),
        "y": ratios.tolist(),
        "legend": ["count / prediction"],
        "checksum": plotted_checksum(ratios),
    }
