"""Command-line interface: spectra, count, krr, rate, gain.

Exit codes: 0 success, 1 configuration error, 2 numerical error,
3 resource cap exceeded.  Errors print a single diagnostic line to
stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from . import __version__
from .actions import apply_action, parse_action, quotient_invariants, sample_elements
from .errors import ConfigurationError, IkrrError
from .harness import (
    FLOAT_FMT,
    count_sweep,
    default_threads,
    fit_rate,
    gain_report,
    gen_target,
    geometric_grid,
    load_config,
    run_sweep,
    stable_hash,
    write_counts_csv,
    write_runs_csv,
)
from .kernels import (
    Sobolev,
    build_kernel,
    choose_lambda_max,
    diag_upper_bound,
    kernel_spec_string,
    parse_kernel,
)
from .regress import (
    Dataset,
    excess_risk_exact,
    excess_risk_mc,
    fit,
    optimal_eta,
    predict,
)
from .spectra import (
    SphereIndex,
    TorusIndex,
    enumerate_eigenbasis,
    parse_manifold,
    uniform_sample,
)

VERSION_STRING = f"ikrr {__version__}"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ikrr",
        description="Group-invariant kernel ridge regression on compact manifolds",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectra", help="enumerate an eigenbasis to CSV")
    p.add_argument("--manifold", required=True, help="torus:d | sphere2")
    p.add_argument("--lambda-max", type=float, required=True)
    p.add_argument("--out", required=True, help="output CSV (index,lambda,kind,k_or_lm)")

    p = sub.add_parser("count", help="invariant dimension counting N(lambda; G)")
    p.add_argument("--manifold", required=True)
    p.add_argument("--action", required=True,
                   help="e.g. trivial, shift:pi,0, perm:(0 1), reflect:0, "
                        "signflip:0,1, subtorus:[1,0], antipodal, axisrot; join with +")
    p.add_argument("--lambda-grid", required=True, help="geometric grid start:stop:factor")
    p.add_argument("--out", required=True, help="output CSV (lambda,count,prediction,ratio)")

    p = sub.add_parser("krr", help="fit one kernel ridge regression and report risks")
    p.add_argument("--manifold", required=True)
    p.add_argument("--action", required=True)
    p.add_argument("--kernel", required=True, help="sobolev:s=2 | bandlimited:D=50 | heat:t=0.1")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--eta", default="auto", help="positive value or 'auto'")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--target-seed", type=int, required=True)
    p.add_argument("--data-seed", type=int, required=True)
    p.add_argument("--target-s", type=float, default=None,
                   help="target smoothness (default: kernel s)")
    p.add_argument("--target-norm", type=float, default=1.0)
    p.add_argument("--target-band", type=float, default=400.0)
    p.add_argument("--lambda-max", type=float, default=None)
    p.add_argument("--mc-points", type=int, default=100_000)
    p.add_argument("--out", required=True, help="output run.json")

    p = sub.add_parser("rate", help="run an n-sweep and fit the risk decay rate")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out-runs", required=True)
    p.add_argument("--out-rate", required=True)
    p.add_argument("--aggregation", choices=["mean", "median"], default="median")
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("gain", help="paired invariant/trivial sweeps and sample gain")
    p.add_argument("--config-invariant", required=True)
    p.add_argument("--config-trivial", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--aggregation", choices=["mean", "median"], default="median")
    p.add_argument("--threads", type=int, default=None)
    return parser


def _cmd_spectra(args) -> int:
    manifold = parse_manifold(args.manifold)
    basis = enumerate_eigenbasis(manifold, args.lambda_max)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "lambda", "kind", "k_or_lm"])
        for i, e in enumerate(basis.entries):
            if isinstance(e, TorusIndex):
                kind, label = e.parity, ";".join(str(c) for c in e.k)
            elif isinstance(e, SphereIndex):
                kind, label = "sph", f"{e.l};{e.m}"
            else:
                kind, label = "prod", "|".join(str(p) for p in e.parts)
            writer.writerow([i, FLOAT_FMT % e.lam, kind, label])
    return 0


def _cmd_count(args) -> int:
    manifold = parse_manifold(args.manifold)
    action = parse_action(manifold, args.action)
    rows = count_sweep(action, geometric_grid(args.lambda_grid))
    write_counts_csv(args.out, rows)
    return 0


def _cmd_krr(args) -> int:
    manifold = parse_manifold(args.manifold)
    action = parse_action(manifold, args.action)
    profile = parse_kernel(args.kernel)
    target_s = args.target_s
    if target_s is None:
        if not isinstance(profile, Sobolev):
            raise ConfigurationError("--target-s is required for non-Sobolev kernels")
        target_s = profile.s
    target = gen_target(action, target_s, args.target_norm, args.target_band,
                        args.target_seed)
    if args.lambda_max is not None:
        lam_max = args.lambda_max
    elif isinstance(profile, Sobolev):
        lam_max = choose_lambda_max(manifold, action, profile.s, floor=args.target_band)
    else:
        lam_max = args.target_band
    kernel = build_kernel(manifold, action, profile, lam_max)

    if args.eta == "auto":
        if not isinstance(profile, Sobolev):
            raise ConfigurationError("--eta auto requires a Sobolev kernel")
        q = quotient_invariants(action)
        eta = optimal_eta(profile.s, 1.0, q.d_eff, q.quotient_volume,
                          args.sigma**2, args.n, args.target_norm)
    else:
        try:
            eta = float(args.eta)
        except ValueError:
            raise ConfigurationError(f"--eta must be a number or 'auto', got {args.eta!r}") from None
        if eta <= 0:
            raise ConfigurationError("--eta must be positive")

    X = uniform_sample(manifold, stable_hash(args.data_seed, "points"), args.n)
    noise_rng = np.random.default_rng(stable_hash(args.data_seed, "noise"))
    y = target.evaluate(X) + args.sigma * noise_rng.standard_normal(args.n)
    model = fit(kernel, Dataset(X, y, args.sigma), eta)
    risk_exact = excess_risk_exact(model, target)
    risk_mc = (
        excess_risk_mc(model, target, stable_hash(args.data_seed, "mc"), args.mc_points)
        if args.mc_points > 0
        else None
    )

    # orbit invariance of predictions over random (x, tau) pairs
    rng = np.random.default_rng(stable_hash(args.data_seed, "invariance"))
    Xc = uniform_sample(manifold, stable_hash(args.data_seed, "check"), 1000)
    fx = predict(model, Xc)
    deviation = 0.0
    for e in sample_elements(action, rng, 8):
        if e is None:
            continue
        deviation = max(deviation, float(np.abs(predict(model, apply_action(action, e, Xc)) - fx).max()))
    scale = float(np.abs(fx).max()) or 1.0

    r_squared = diag_upper_bound(kernel)
    eta_floor = 5.0 * r_squared * math.log(max(args.n, 2)) / args.n
    payload = {
        "version": VERSION_STRING,
        "config": {
            "manifold": args.manifold,
            "action": args.action,
            "kernel": args.kernel,
            "n": args.n,
            "sigma": args.sigma,
            "target": {
                "s": target_s,
                "norm": args.target_norm,
                "lambda_band": args.target_band,
                "seed": args.target_seed,
            },
            "data_seed": args.data_seed,
            "eta_policy": args.eta,
        },
        "kernel_meta": {
            "profile": kernel_spec_string(profile),
            "lambda_max": kernel.lambda_max,
            "basis_size": kernel.size,
            "tail_bound": kernel.tail_bound,
        },
        "eta": eta,
        "eta_floor_5R2logn_over_n": eta_floor,
        "eta_floor_satisfied": bool(eta >= eta_floor),
        "risk_exact": risk_exact,
        "risk_mc": risk_mc,
        "fit_residual": model.residual,
        "jitter_used": model.jitter_used,
        "invariance_max_relative_deviation": deviation / scale,
    }
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def _cmd_rate(args) -> int:
    config = load_config(args.config)
    records = run_sweep(config, args.threads)
    write_runs_csv(args.out_runs, records)
    rate = fit_rate(records, args.aggregation)
    payload = {"version": VERSION_STRING, "config_hash": config.config_hash}
    payload.update(rate.to_dict())
    with open(args.out_rate, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def _cmd_gain(args) -> int:
    import os

    config_inv = load_config(args.config_invariant)
    config_triv = load_config(args.config_trivial)
    report = gain_report(config_inv, config_triv, args.threads, args.aggregation)
    os.makedirs(args.out_dir, exist_ok=True)
    write_runs_csv(os.path.join(args.out_dir, "invariant_runs.csv"), report.records_invariant)
    write_runs_csv(os.path.join(args.out_dir, "trivial_runs.csv"), report.records_trivial)
    payload = {"version": VERSION_STRING}
    payload.update(report.to_dict())
    with open(os.path.join(args.out_dir, "gain.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


_HANDLERS = {
    "spectra": _cmd_spectra,
    "count": _cmd_count,
    "krr": _cmd_krr,
    "rate": _cmd_rate,
    "gain": _cmd_gain,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 1
    try:
        return _HANDLERS[args.command](args)
    except IkrrError as exc:
        print(f"ikrr: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"ikrr: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
