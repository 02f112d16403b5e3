"""Command-line entry point: ``weightedmc <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io as wio
from .experiment import ExperimentConfig, random_low_rank, read_rows, run_experiment, summarize, write_rows
from .measures import WeightPair, half_dim
from .packing import PackingError, generate_packing
from .sampling import make_rng, observe, sample_indices
from .solver import SolverOptions, auto_lambda, solve
from .theory import corollary_rate, minimax_floor, noise_norm_monte_carlo, rsc_monte_carlo

log = logging.getLogger("weightedmc")


def _weights(path, d_r: int, d_c: int) -> WeightPair:
    if path is None:
        return WeightPair.uniform(d_r, d_c)
    w = wio.read_weights(path)
    if w.shape != (d_r, d_c):
        raise SystemExit(f"weights file has shape {w.shape}, expected {(d_r, d_c)}")
    return w


def _emit(payload: dict, out) -> None:
    if out:
        wio.write_json(out, payload)
    else:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")


def cmd_observe(args) -> int:
    d_r = args.rows
    d_c = args.cols or d_r
    w = _weights(args.weights, d_r, d_c)
    rng = make_rng(args.seed)
    theta = random_low_rank(d_r, d_c, args.rank, w=w, rng=rng)
    idx = sample_indices(w, args.n, rng, signs=not args.no_signs)
    obs = observe(theta, idx, args.nu, args.noise, rng=rng, weights=w, seed=args.seed)
    wio.dump_observations(obs, args.out)
    if args.truth_out:
        wio.write_matrix(args.truth_out, theta)
    return 0


def cmd_estimate(args) -> int:
    obs = wio.load_observations(args.obs)
    lam = auto_lambda(obs) if args.lam == "auto" else float(args.lam)
    opts = SolverOptions(max_iters=args.max_iters, rel_tol=args.rel_tol, accelerated=args.accelerated)
    est = solve(obs, lam, args.alpha_star, opts)
    wio.write_matrix(args.out, est.theta_hat)
    log.info("lambda=%.6g iterations=%d converged=%s", lam, est.iterations, est.converged)
    if not est.converged:
        print(f"warning: solver stopped after {est.iterations} iterations without converging", file=sys.stderr)
    return 0


def cmd_rsc_check(args) -> int:
    d = args.d
    n = args.n or int(round(args.c * d * math.log(d)))
    w = _weights(args.weights, d, d)
    rep = rsc_monte_carlo(w, n, args.draws, make_rng(args.seed), args.rank, args.c0)
    summary = rep.to_dict()
    margins = summary.pop("margins")
    _emit(
        {
            "params": {"d": d, "n": n, "draws": args.draws, "rank": args.rank, "c0": args.c0, "seed": args.seed},
            "margins": margins,
            "summary": summary,
        },
        args.out,
    )
    return 0


def cmd_noise_norm(args) -> int:
    d = args.d
    n = args.n or int(round(args.c * d * math.log(d)))
    w = _weights(args.weights, d, d)
    values = noise_norm_monte_carlo(w, n, args.nu, args.reps, make_rng(args.seed), args.noise)
    scale = args.nu * math.sqrt(half_dim(w.shape) * math.log(half_dim(w.shape)) / n)
    _emit(
        {
            "params": {"d": d, "n": n, "nu": args.nu, "reps": args.reps, "noise": args.noise, "seed": args.seed},
            "values": values,
            "summary": {"mean": float(np.mean(values)), "max": float(np.max(values)), "reference_scale": scale,
                        "mean_over_scale": float(np.mean(values)) / scale if scale else None},
        },
        args.out,
    )
    return 0


def cmd_rates(args) -> int:
    r_or_rho = args.rho if args.q > 0 else args.r
    if r_or_rho is None:
        raise SystemExit("need --r (q=0) or --rho (q>0)")
    kind = "exact" if args.q == 0 else "lq"
    upper = corollary_rate(kind, args.nu, args.alpha_star, r_or_rho, args.q, args.d, args.n, args.c)
    lower = minimax_floor(r_or_rho, args.q, args.nu, args.d, args.n, args.c5)
    _emit(
        {
            "params": vars_without_func(args),
            "values": {"upper": upper.to_dict(), "minimax_floor": lower.to_dict()},
            "summary": {"ratio_upper_to_floor": upper.value / lower.value if lower.value else None},
        },
        args.out,
    )
    return 0


def cmd_packing(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        pset = generate_packing(args.d, args.r, args.delta, make_rng(args.seed), args.max_attempts)
    except PackingError as exc:
        wio.write_json(out_dir / "report.json", {"pass": False, "error": str(exc), "best": exc.best_report})
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for i, m in enumerate(pset.matrices):
        wio.write_matrix(out_dir / f"theta_{i:03d}.csv", m)
    report = dict(pset.report, attempts_used=pset.attempts_used, seed=args.seed)
    wio.write_json(out_dir / "report.json", report)
    return 0


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    rows = run_experiment(cfg, jobs=args.jobs)
    write_rows(args.out, rows)
    bad = sum(not r.converged for r in rows)
    if bad:
        print(f"warning: {bad} of {len(rows)} trials did not converge", file=sys.stderr)
    return 0


def cmd_summarize(args) -> int:
    rows = read_rows(args.inp)
    _emit(summarize(rows, metric=args.metric), args.out)
    return 0


def vars_without_func(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func", "out", "verbose")}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weightedmc", description="Weighted noisy matrix completion toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("observe", help="simulate a low-rank target and noisy observations")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--nu", type=float, default=0.5)
    p.add_argument("--noise", choices=("gaussian", "laplace"), default="gaussian")
    p.add_argument("--weights")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-signs", action="store_true", help="use +1 for every sample sign")
    p.add_argument("--out", required=True)
    p.add_argument("--truth-out")
    p.set_defaults(func=cmd_observe)

    p = sub.add_parser("estimate", help="solve the constrained nuclear-norm program")
    p.add_argument("--obs", required=True)
    p.add_argument("--lambda", dest="lam", default="auto", help="a number or 'auto'")
    p.add_argument("--alpha-star", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--rel-tol", type=float, default=1e-9)
    p.add_argument("--accelerated", action="store_true")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("rsc-check", help="Monte-Carlo check of restricted strong convexity")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--c", type=float, default=5.0, help="n = c d log d when --n is absent")
    p.add_argument("--draws", type=int, default=200)
    p.add_argument("--rank", type=int, default=1)
    p.add_argument("--c0", type=float, default=1.0)
    p.add_argument("--weights")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rsc_check)

    p = sub.add_parser("noise-norm", help="operator norm of the weighted noise matrix")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--c", type=float, default=10.0, help="n = c d log d when --n is absent")
    p.add_argument("--nu", type=float, default=0.5)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--noise", choices=("gaussian", "laplace"), default="gaussian")
    p.add_argument("--weights")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_noise_norm)

    p = sub.add_parser("rates", help="predicted upper rate and minimax floor")
    p.add_argument("--d", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--nu", type=float, default=0.5)
    p.add_argument("--alpha-star", type=float, default=1.0)
    p.add_argument("--q", type=float, default=0.0)
    p.add_argument("--r", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--c5", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("packing", help="generate and verify a packing set")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-attempts", type=int, default=20)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_packing)

    p = sub.add_parser("experiment", help="run a simulation config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("summarize", help="aggregate an experiment CSV")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out")
    p.add_argument("--metric", choices=("mse_frob", "mse_weighted_frob"), default="mse_frob")
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
