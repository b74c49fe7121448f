"""Experiment orchestration: seeded trials, n-sweeps, rate fits, persistence.

Every trial is reproducible in isolation: its seed is a stable hash of
(master seed, n, trial index), and the point/noise streams are derived
from that seed by labeled child hashes.  Sweeps therefore produce the
same records regardless of execution order or worker count.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import math
import os
import time
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from .actions import parse_action, quotient_invariants
from .errors import ConfigurationError, IkrrError
from .kernels import (
    Sobolev,
    build_kernel,
    choose_lambda_max,
    invariant_basis,
    kernel_spec_string,
    parse_kernel,
)
from .regress import (
    Dataset,
    TargetFunction,
    excess_risk_exact,
    excess_risk_mc,
    fit,
    optimal_eta,
    sobolev_norm,
)
from .spectra import enumerate_eigenbasis, parse_manifold, uniform_sample

FLOAT_FMT = "%.17g"


def stable_hash(*parts) -> int:
    """Stable 64-bit hash of the string forms of the parts."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


# ---------------------------------------------------------------------------
# configuration


def n_grid_values(n_min: int, n_max: int, factor: float) -> list:
    if n_min < 1 or n_max < n_min or factor <= 1.0:
        raise ConfigurationError("n grid must be strictly increasing (factor > 1)")
    values = []
    x = float(n_min)
    while x <= n_max * (1.0 + 1e-9):
        n = int(round(x))
        if values and n <= values[-1]:
            raise ConfigurationError("n grid must be strictly increasing")
        values.append(n)
        x *= factor
    return values


def geometric_grid(spec: str) -> list:
    """Parse 'start:stop:factor' into a geometric grid, inclusive of
    start; stop is included when hit exactly."""
    try:
        start_s, stop_s, factor_s = spec.split(":")
        start, stop, factor = float(start_s), float(stop_s), float(factor_s)
    except ValueError:
        raise ConfigurationError(f"bad geometric grid {spec!r}; use start:stop:factor") from None
    if start <= 0 or stop < start or factor <= 1.0:
        raise ConfigurationError(f"bad geometric grid {spec!r}")
    out = []
    x = start
    while x <= stop * (1.0 + 1e-12):
        out.append(x)
        x *= factor
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    manifold: str
    action: str
    kernel: str
    target_s: float
    target_norm: float
    target_band: float
    target_seed: int
    sigma: float
    n_min: int
    n_max: int
    n_factor: float
    trials: int
    eta: object  # "auto" | ("fixed", value) | ("grid", (values...))
    master_seed: int
    target_action: Optional[str] = None
    lambda_max: Optional[float] = None
    mc_test_points: int = 0

    def __post_init__(self):
        parse_manifold(self.manifold)
        parse_action(parse_manifold(self.manifold), self.action)
        parse_kernel(self.kernel)
        if self.target_action is not None:
            parse_action(parse_manifold(self.manifold), self.target_action)
        n_grid_values(self.n_min, self.n_max, self.n_factor)
        if self.trials < 1:
            raise ConfigurationError("trials must be at least 1")
        if self.sigma < 0:
            raise ConfigurationError("sigma must be nonnegative")
        _validate_eta_policy(self.eta)

    @property
    def n_values(self) -> list:
        return n_grid_values(self.n_min, self.n_max, self.n_factor)

    def to_dict(self) -> dict:
        eta = self.eta
        if isinstance(eta, tuple):
            eta = {eta[0]: list(eta[1]) if eta[0] == "grid" else eta[1]}
        return {
            "manifold": self.manifold,
            "action": self.action,
            "kernel": self.kernel,
            "target": {
                "s": self.target_s,
                "norm": self.target_norm,
                "lambda_band": self.target_band,
                "seed": self.target_seed,
                **({"action": self.target_action} if self.target_action else {}),
            },
            "sigma": self.sigma,
            "n_grid": {"min": self.n_min, "max": self.n_max, "factor": self.n_factor},
            "trials": self.trials,
            "eta": eta,
            "master_seed": self.master_seed,
            **({"lambda_max": self.lambda_max} if self.lambda_max is not None else {}),
            **({"mc_test_points": self.mc_test_points} if self.mc_test_points else {}),
        }

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _validate_eta_policy(eta) -> None:
    if eta == "auto":
        return
    if isinstance(eta, tuple) and len(eta) == 2 and eta[0] == "fixed" and eta[1] > 0:
        return
    if (
        isinstance(eta, tuple)
        and len(eta) == 2
        and eta[0] == "grid"
        and len(eta[1]) >= 1
        and all(v > 0 for v in eta[1])
    ):
        return
    raise ConfigurationError(f"bad eta policy {eta!r}")


def config_from_dict(data: dict) -> ExperimentConfig:
    known = {"manifold", "action", "kernel", "target", "sigma", "n_grid",
             "trials", "eta", "master_seed", "lambda_max", "mc_test_points"}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    try:
        target = data["target"]
        grid = data["n_grid"]
        eta = data["eta"]
        if isinstance(eta, dict):
            ((kind, value),) = eta.items()
            eta = (kind, tuple(value) if kind == "grid" else float(value))
        return ExperimentConfig(
            manifold=data["manifold"],
            action=data["action"],
            kernel=data["kernel"],
            target_s=float(target["s"]),
            target_norm=float(target["norm"]),
            target_band=float(target["lambda_band"]),
            target_seed=int(target["seed"]),
            target_action=target.get("action"),
            sigma=float(data["sigma"]),
            n_min=int(grid["min"]),
            n_max=int(grid["max"]),
            n_factor=float(grid["factor"]),
            trials=int(data["trials"]),
            eta=eta,
            master_seed=int(data["master_seed"]),
            lambda_max=(float(data["lambda_max"]) if "lambda_max" in data else None),
            mc_test_points=int(data.get("mc_test_points", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad experiment config: {exc}") from exc


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return config_from_dict(json.load(fh))
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from None


# ---------------------------------------------------------------------------
# targets


def gen_target(action, s_target: float, norm: float, lambda_band: float, seed: int) -> TargetFunction:
    """Random Sobolev target supported on the invariant basis up to
    lambda_band, rescaled so its H^s norm equals ``norm`` exactly.

    Raw N(0,1) coefficients are damped by max(1, lambda)^(-s/2) times
    (1 + rank)^(-0.51), which puts the draw just inside H^s.
    """
    if norm <= 0:
        raise ConfigurationError("target norm must be positive")
    manifold = action.manifold
    basis = enumerate_eigenbasis(manifold, lambda_band)
    inv = invariant_basis(action, basis)
    if inv.size == 0:
        raise ConfigurationError("no invariant eigenfunctions within the target band")
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal(inv.size)
    scale = np.maximum(1.0, inv.lams) ** (-s_target / 2.0)
    scale *= (1.0 + np.arange(inv.size)) ** (-0.51)
    alpha_inv = raw * scale
    current = sobolev_norm(inv.lams, alpha_inv, s_target)
    alpha_inv *= norm / current
    return TargetFunction(manifold, basis, inv.expansion @ alpha_inv, s_target)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class RunRecord:
    config_hash: str
    n: int
    trial: int
    eta: float
    risk_exact: float
    risk_mc: Optional[float]
    wall_ms: float
    seed: int
    error: Optional[str] = None  # in-memory only; persisted rows carry NaN risks


def _materialize(config: ExperimentConfig):
    manifold = parse_manifold(config.manifold)
    action = parse_action(manifold, config.action)
    profile = parse_kernel(config.kernel)
    target_action = (
        parse_action(manifold, config.target_action)
        if config.target_action
        else action
    )
    target = gen_target(
        target_action, config.target_s, config.target_norm,
        config.target_band, config.target_seed,
    )
    if config.lambda_max is not None:
        lam_max = config.lambda_max
    elif isinstance(profile, Sobolev):
        lam_max = choose_lambda_max(
            manifold, action, profile.s, floor=config.target_band
        )
    else:
        lam_max = config.target_band
    kernel = build_kernel(manifold, action, profile, lam_max)
    return manifold, action, kernel, target


def _resolve_etas(config: ExperimentConfig, kernel, n: int) -> list:
    if config.eta == "auto":
        if not isinstance(kernel.profile, Sobolev):
            raise ConfigurationError("eta policy 'auto' requires a Sobolev kernel")
        q = quotient_invariants(kernel.action)
        return [
            optimal_eta(
                kernel.profile.s, 1.0, q.d_eff, q.quotient_volume,
                config.sigma**2, n, config.target_norm,
            )
        ]
    kind, value = config.eta
    return [value] if kind == "fixed" else list(value)


def run_trial(config: ExperimentConfig, n: int, trial: int, state=None) -> RunRecord:
    """Run one (n, trial) cell; deterministic given the config alone."""
    manifold, action, kernel, target = state if state is not None else _materialize(config)
    seed = stable_hash(config.master_seed, n, trial)
    t0 = time.perf_counter()
    try:
        X = uniform_sample(manifold, stable_hash(seed, "points"), n)
        noise_rng = np.random.default_rng(stable_hash(seed, "noise"))
        y = target.evaluate(X) + config.sigma * noise_rng.standard_normal(n)
        best = None
        for eta in _resolve_etas(config, kernel, n):
            model = fit(kernel, Dataset(X, y, config.sigma), eta)
            risk = excess_risk_exact(model, target)
            if best is None or risk < best[1]:
                best = (eta, risk, model)
        eta, risk, model = best
        risk_mc = None
        if config.mc_test_points:
            risk_mc = excess_risk_mc(
                model, target, stable_hash(seed, "mc"), config.mc_test_points
            )
        wall = (time.perf_counter() - t0) * 1e3
        return RunRecord(config.config_hash, n, trial, eta, risk, risk_mc, wall, seed)
    except IkrrError as exc:
        wall = (time.perf_counter() - t0) * 1e3
        return RunRecord(
            config.config_hash, n, trial, math.nan, math.nan, None, wall, seed,
            error=str(exc),
        )


_WORKER_STATE = None


def _worker_init(config_dict: dict) -> None:
    global _WORKER_STATE
    config = config_from_dict(config_dict)
    _WORKER_STATE = (config, _materialize(config))


def _worker_run(args) -> RunRecord:
    n, trial = args
    config, state = _WORKER_STATE
    return run_trial(config, n, trial, state)


def default_threads() -> int:
    env = os.environ.get("IKRR_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"bad IKRR_THREADS value {env!r}") from None
    return 1


def run_sweep(config: ExperimentConfig, threads: Optional[int] = None) -> list:
    """All (n, trial) cells of the experiment, sorted by (n, trial).

    Individual trial failures are recorded and skipped by downstream
    fits; more than 10% failures abort the sweep.
    """
    threads = default_threads() if threads is None else max(1, threads)
    cells = [(n, t) for n in config.n_values for t in range(config.trials)]
    if threads == 1:
        state = _materialize(config)
        records = [run_trial(config, n, t, state) for n, t in cells]
    else:
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=threads, initializer=_worker_init,
            initargs=(config.to_dict(),),
        ) as pool:
            records = list(pool.map(_worker_run, cells, chunksize=4))
    records.sort(key=lambda r: (r.n, r.trial))
    failures = [r for r in records if r.error is not None]
    if len(failures) > 0.1 * len(records):
        raise IkrrError(
            f"{len(failures)}/{len(records)} trials failed; first error: {failures[0].error}"
        )
    return records


# ---------------------------------------------------------------------------
# persistence

RUNS_HEADER = ["config_hash", "n", "trial", "eta", "risk_exact", "risk_mc", "wall_ms", "seed"]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return FLOAT_FMT % x
    return str(x)


def write_runs_csv(path: str, records: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUNS_HEADER)
        for r in records:
            writer.writerow([
                r.config_hash, r.n, r.trial, _fmt(r.eta), _fmt(r.risk_exact),
                _fmt(r.risk_mc), _fmt(r.wall_ms), r.seed,
            ])


def read_runs_csv(path: str) -> list:
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RUNS_HEADER:
            raise ConfigurationError(f"{path} does not have the runs.csv schema")
        for row in reader:
            records.append(RunRecord(
                config_hash=row[0], n=int(row[1]), trial=int(row[2]),
                eta=float(row[3]), risk_exact=float(row[4]),
                risk_mc=float(row[5]) if row[5] else None,
                wall_ms=float(row[6]), seed=int(row[7]),
            ))
    return records


# ---------------------------------------------------------------------------
# rate fitting


@dataclass
class RateFit:
    slope: float
    intercept: float
    stderr_slope: float
    points_used: int
    aggregation: str

    def to_dict(self) -> dict:
        return asdict(self)


def aggregate_risks(records: list, aggregation: str = "median") -> dict:
    """Per-n aggregated exact risk, excluding failed trials."""
    if aggregation not in ("mean", "median"):
        raise ConfigurationError("aggregation must be 'mean' or 'median'")
    by_n = {}
    for r in records:
        if r.error is None and math.isfinite(r.risk_exact):
            by_n.setdefault(r.n, []).append(r.risk_exact)
    agg = np.mean if aggregation == "mean" else np.median
    return {n: float(agg(v)) for n, v in sorted(by_n.items())}


def fit_rate(records: list, aggregation: str = "median") -> RateFit:
    """OLS of log(aggregated risk) on log(n)."""
    risks = aggregate_risks(records, aggregation)
    if len(risks) < 3:
        raise ConfigurationError("rate fit needs at least 3 distinct n values")
    if any(v <= 0 for v in risks.values()):
        raise ConfigurationError("aggregated risk must be positive to take logs")
    x = np.log(np.array(list(risks.keys()), dtype=float))
    y = np.log(np.array(list(risks.values())))
    m = len(x)
    xbar = x.mean()
    sxx = float(((x - xbar) ** 2).sum())
    slope = float(((x - xbar) @ (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * xbar)
    rss = float(((y - intercept - slope * x) ** 2).sum())
    stderr = math.sqrt(max(rss, 0.0) / (m - 2) / sxx) if m > 2 else 0.0
    return RateFit(slope, intercept, stderr, m, aggregation)


# ---------------------------------------------------------------------------
# gain reports


@dataclass
class GainReport:
    records_invariant: list
    records_trivial: list
    fit_invariant: RateFit
    fit_trivial: RateFit
    gain: float

    def to_dict(self) -> dict:
        return {
            "gain": self.gain,
            "fit_invariant": self.fit_invariant.to_dict(),
            "fit_trivial": self.fit_trivial.to_dict(),
            "slope_difference": self.fit_invariant.slope - self.fit_trivial.slope,
        }


def gain_report(
    config_invariant: ExperimentConfig,
    config_trivial: ExperimentConfig,
    threads: Optional[int] = None,
    aggregation: str = "median",
) -> GainReport:
    """Paired sweeps sharing one invariant target; the gain is the
    horizontal shift aligning the two log-log risk curves.

    Both runs regress the same target function (drawn from the invariant
    configuration), so the trivial run measures what is lost by ignoring
    the symmetry.
    """
    if config_invariant.manifold != config_trivial.manifold:
        raise ConfigurationError("gain_report configs must share the manifold")
    if config_invariant.kernel != config_trivial.kernel:
        raise ConfigurationError("gain_report configs must share the kernel profile")
    if config_invariant.target_seed != config_trivial.target_seed:
        raise ConfigurationError("gain_report configs must share the target seed")
    if config_invariant.sigma != config_trivial.sigma:
        raise ConfigurationError("gain_report configs must share sigma")
    target_action = config_invariant.target_action or config_invariant.action
    config_trivial = replace(config_trivial, target_action=target_action)
    rec_inv = run_sweep(config_invariant, threads)
    rec_triv = run_sweep(config_trivial, threads)
    fit_inv = fit_rate(rec_inv, aggregation)
    fit_triv = fit_rate(rec_triv, aggregation)
    # least-squares horizontal shift on log-log curves, read off the
    # trivial OLS line: risk_inv(n) ~ risk_triv(g*n)
    shifts = []
    for n, risk in aggregate_risks(rec_inv, aggregation).items():
        log_n_equiv = (math.log(risk) - fit_triv.intercept) / fit_triv.slope
        shifts.append(log_n_equiv - math.log(n))
    gain = math.exp(float(np.mean(shifts)))
    return GainReport(rec_inv, rec_triv, fit_inv, fit_triv, gain)


# ---------------------------------------------------------------------------
# counting sweeps


def count_sweep(action, lambdas: list) -> list:
    """Rows (lambda, count, prediction, ratio) for a lambda grid."""
    from .actions import count_invariant

    rows = []
    for lam in lambdas:
        count, prediction = count_invariant(action, lam)
        ratio = count / prediction if prediction and math.isfinite(prediction) else math.nan
        rows.append((lam, count, prediction, ratio))
    return rows


COUNTS_HEADER = ["lambda", "count", "prediction", "ratio"]


def write_counts_csv(path: str, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COUNTS_HEADER)
        for lam, count, prediction, ratio in rows:
            writer.writerow([_fmt(float(lam)), count, _fmt(float(prediction)), _fmt(float(ratio))])
