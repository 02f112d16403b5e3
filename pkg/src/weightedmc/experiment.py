"""Declarative Monte-Carlo experiments for the nuclear-norm estimator.

A config lists problem sizes, a sample-size grid and a number of trials.
Every ``(d, n, trial)`` cell gets its own seed derived from the master seed,
draws a target matrix, samples noisy entries, solves, and records the
squared error. Rows always come back in ``(d, n, trial)`` order, whatever
the number of worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .io import read_weights
from .measures import WeightPair, from_gamma, half_dim, lq_membership, measures, numerical_rank
from .packing import haar_orthogonal
from .sampling import derive_seed, make_rng, observe, sample_indices
from .solver import SolverOptions, default_lambda, solve

log = logging.getLogger(__name__)


class RejectionError(RuntimeError):
    """The spikiness cap rejected every draw."""


def default_spike_cap(d: float) -> float:
    return math.sqrt(32.0 * math.log(d))


def default_alpha_star(d: float) -> float:
    """Twice the spikiness cap, so the box stays inactive for generated targets."""
    return 2.0 * default_spike_cap(d)


def random_low_rank(
    d_r: int,
    d_c: int,
    r: int,
    spike_cap: Optional[float] = None,
    w: Optional[WeightPair] = None,
    rng: Optional[np.random.Generator] = None,
    max_draws: int = 1000,
) -> np.ndarray:
    """Gaussian-factor rank-``r`` matrix with unit weighted Frobenius norm.

    Draws ``A @ B.T`` with standard normal ``A`` (``d_r x r``) and ``B``
    (``d_c x r``), rescales, and rejects draws whose spikiness exceeds
    ``spike_cap`` (default ``sqrt(32 log d)``).
    """
    if not 1 <= r <= min(d_r, d_c):
        raise ValueError(f"rank {r} out of range for a {d_r}x{d_c} matrix")
    w = w or WeightPair.uniform(d_r, d_c)
    rng = rng if rng is not None else make_rng(0)
    cap = default_spike_cap(half_dim((d_r, d_c))) if spike_cap is None else spike_cap
    for _ in range(max_draws):
        theta = rng.standard_normal((d_r, r)) @ rng.standard_normal((d_c, r)).T
        rep = measures(theta, w)
        if rep.spikiness <= cap:
            return theta / rep.weighted_frobenius
    raise RejectionError(f"no draw met spikiness cap {cap:.4g} in {max_draws} tries")


def lq_spectrum(k: int, q: float, rho_q: float) -> np.ndarray:
    """``s * j**(-2/q)`` for ``j = 1..k`` with ``sum(sigma**q) == rho_q``."""
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    if rho_q <= 0:
        raise ValueError("rho_q must be positive")
    j = np.arange(1, k + 1, dtype=float)
    shape = j ** (-2.0 / q)
    # sum((s * shape)**q) = s**q * sum(j**-2)
    s = (rho_q / np.sum(shape**q)) ** (1.0 / q)
    return s * shape


def random_lq(
    d: Union[int, tuple[int, int]],
    q: float,
    rho_q: float,
    w: Optional[WeightPair] = None,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Matrix whose weighted singular values follow :func:`lq_spectrum`.

    ``Gamma = U diag(sigma) V^T`` with Haar ``U``, ``V``; the returned
    matrix is ``from_gamma(Gamma)`` so the l_q sum equals ``rho_q``.
    """
    d_r, d_c = (d, d) if isinstance(d, int) else d
    w = w or WeightPair.uniform(d_r, d_c)
    rng = rng if rng is not None else make_rng(0)
    k = min(d_r, d_c)
    sigma = lq_spectrum(k, q, rho_q)
    u = haar_orthogonal(d_r, rng)[:, :k]
    v = haar_orthogonal(d_c, rng)[:, :k]
    theta = from_gamma((u * sigma) @ v.T, w)
    value = lq_membership(theta, w, q, rho_q).value
    if abs(value - rho_q) > 1e-8 * rho_q:
        raise ArithmeticError(f"l_q sum {value} drifted from {rho_q}")
    return theta


def _parse_rule(value, name: str):
    """``"fixed:3"`` / ``{"fixed": 3}`` -> ``("fixed", 3.0)``; bare strings pass through."""
    if isinstance(value, dict):
        if len(value) != 1:
            raise ValueError(f"{name}: expected a single-key mapping, got {value}")
        (key, arg), = value.items()
        return key, arg
    if isinstance(value, str) and ":" in value:
        key, arg = value.split(":", 1)
        return key, arg
    return value, None


@dataclass
class ExperimentConfig:
    dims: list[int]
    q: float = 0.0
    rank_rule: Union[str, dict] = "log_sq"
    rho_q: Optional[float] = None
    nu: float = 0.5
    trials: int = 25
    n_grid: Union[list[int], dict] = field(default_factory=lambda: {"c": [3, 5, 8, 12]})
    alpha_star: Optional[float] = None
    lambda_rule: Union[str, dict] = "auto"
    master_seed: int = 0
    weights_rule: str = "uniform"
    noise: str = "gaussian"
    # wall-clock timing breaks byte-identical output, so it is opt-in
    record_runtime: bool = False
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.dims:
            raise ValueError("dims must be nonempty")
        if any(int(d) < 10 for d in self.dims):
            raise ValueError("every d must be at least 10")
        self.dims = [int(d) for d in self.dims]
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("q must lie in [0, 1]")
        if self.q > 0:
            if self.rho_q is None:
                self.rho_q = 2.0
            if self.rho_q <= 0:
                raise ValueError("rho_q must be positive")
        kind, arg = _parse_rule(self.rank_rule, "rank_rule")
        if kind not in ("log_sq", "fixed"):
            raise ValueError(f"unknown rank_rule {self.rank_rule!r}")
        kind, arg = _parse_rule(self.lambda_rule, "lambda_rule")
        if kind not in ("auto", "fixed"):
            raise ValueError(f"unknown lambda_rule {self.lambda_rule!r}")
        kind, arg = _parse_rule(self.weights_rule, "weights_rule")
        if kind not in ("uniform", "file"):
            raise ValueError(f"unknown weights_rule {self.weights_rule!r}")
        SolverOptions(**self.solver)

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**payload)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def rank_for(self, d: int) -> int:
        kind, arg = _parse_rule(self.rank_rule, "rank_rule")
        if kind == "fixed":
            return int(arg)
        return math.ceil(math.log(d) ** 2)

    def rescale_denominator(self, d: int) -> float:
        if self.q == 0:
            return self.rank_for(d) * d * math.log(d)
        return self.rho_q ** (1.0 / (1.0 - self.q / 2.0)) * d * math.log(d)

    def sample_sizes(self, d: int) -> list[int]:
        if isinstance(self.n_grid, dict):
            if set(self.n_grid) != {"c"}:
                raise ValueError("n_grid rule must be {'c': [...]}")
            denom = self.rescale_denominator(d)
            return [int(round(c * denom)) for c in self.n_grid["c"]]
        return [int(n) for n in self.n_grid]

    def alpha_for(self, d: int) -> float:
        return default_alpha_star(d) if self.alpha_star is None else float(self.alpha_star)

    def weights_for(self, d: int) -> WeightPair:
        kind, arg = _parse_rule(self.weights_rule, "weights_rule")
        if kind == "uniform":
            return WeightPair.uniform(d)
        w = read_weights(arg)
        if w.shape != (d, d):
            raise ValueError(f"weights file {arg} has shape {w.shape}, need {(d, d)}")
        return w


@dataclass
class ResultRow:
    d: int
    r: int
    q: float
    rho_q: float
    n: int
    trial: int
    seed: int
    lam: float
    mse_weighted_frob: float
    mse_frob: float
    rescaled_n: float
    iterations: int
    runtime_ms: float
    converged: bool


#: CSV header; ``lambda`` is the column name for :attr:`ResultRow.lam`.
CSV_FIELDS = [
    "d", "r", "q", "rho_q", "n", "trial", "seed", "lambda", "mse_weighted_frob",
    "mse_frob", "rescaled_n", "iterations", "runtime_ms", "converged",
]


def _task_list(cfg: ExperimentConfig) -> list[tuple[int, int, int, int]]:
    tasks = []
    seen = {}
    for d in cfg.dims:
        for n in cfg.sample_sizes(d):
            for trial in range(cfg.trials):
                seed = derive_seed(cfg.master_seed, d, n, trial)
                if seed in seen:
                    raise RuntimeError(f"seed collision between {seen[seed]} and {(d, n, trial)}")
                seen[seed] = (d, n, trial)
                tasks.append((d, n, trial, seed))
    return tasks


def run_trial(cfg: ExperimentConfig, d: int, n: int, trial: int, seed: int) -> ResultRow:
    rng = make_rng(seed)
    w = cfg.weights_for(d)
    if cfg.q == 0:
        r = cfg.rank_for(d)
        theta_star = random_low_rank(d, d, r, w=w, rng=rng)
        if numerical_rank(theta_star) != r:
            raise ArithmeticError(f"generated target has rank {numerical_rank(theta_star)}, expected {r}")
        rho = float(r)
    else:
        r = 0
        rho = float(cfg.rho_q)
        theta_star = random_lq(d, cfg.q, rho, w=w, rng=rng)
    idx = sample_indices(w, n, rng)
    obs = observe(theta_star, idx, cfg.nu, cfg.noise, rng=rng, weights=w, seed=seed)
    kind, arg = _parse_rule(cfg.lambda_rule, "lambda_rule")
    lam = default_lambda(cfg.nu, w.L_bound, half_dim(w.shape), n)[0] if kind == "auto" else float(arg)
    start = time.perf_counter()
    est = solve(obs, lam, cfg.alpha_for(d), SolverOptions(**cfg.solver))
    elapsed = (time.perf_counter() - start) * 1e3 if cfg.record_runtime else 0.0
    err = est.theta_hat - theta_star
    return ResultRow(
        d=d,
        r=r,
        q=float(cfg.q),
        rho_q=rho,
        n=n,
        trial=trial,
        seed=seed,
        lam=lam,
        mse_weighted_frob=measures(err, w).weighted_frobenius ** 2,
        mse_frob=float(np.sum(err * err)),
        rescaled_n=n / cfg.rescale_denominator(d),
        iterations=est.iterations,
        runtime_ms=elapsed,
        converged=est.converged,
    )


def _run_task(args):
    cfg, task = args
    return run_trial(cfg, *task)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> list[ResultRow]:
    tasks = _task_list(cfg)
    if jobs <= 1:
        return [run_trial(cfg, *t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        # map preserves submission order
        return list(pool.map(_run_task, [(cfg, t) for t in tasks], chunksize=4))


def _csv_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for row in rows:
        values = asdict(row)
        writer.writerow([_csv_value(values["lam" if f == "lambda" else f]) for f in CSV_FIELDS])
    return buf.getvalue()


def write_rows(path, rows: Iterable[ResultRow]) -> None:
    Path(path).write_text(rows_to_csv(rows))


def read_rows(path) -> list[ResultRow]:
    casts = {
        "d": int, "r": int, "q": float, "rho_q": float, "n": int, "trial": int, "seed": int,
        "lambda": float, "mse_weighted_frob": float, "mse_frob": float, "rescaled_n": float,
        "iterations": int, "runtime_ms": float, "converged": lambda s: s == "true",
    }
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_FIELDS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for rec in reader:
            vals = {("lam" if k == "lambda" else k): casts[k](v) for k, v in rec.items()}
            out.append(ResultRow(**vals))
    return out


def _match_grid(points: list[tuple[float, int, float]], rtol: float) -> list[list[tuple[float, int, float]]]:
    """Cluster ``(rescaled_n, d, mean)`` points whose rescaled sizes agree to ``rtol``."""
    clusters: list[list[tuple[float, int, float]]] = []
    for p in sorted(points):
        if clusters and p[0] <= clusters[-1][0][0] * (1 + rtol):
            clusters[-1].append(p)
        else:
            clusters.append([p])
    return clusters


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    lx = lx - lx.mean()
    return float(np.sum(lx * (ly - ly.mean())) / np.sum(lx * lx))


def summarize(rows: Sequence[ResultRow], metric: str = "mse_frob", match_rtol: float = 0.01) -> dict:
    """Per-``(d, n)`` means and standard errors, curve collapse and log-log slope.

    The collapse statistic is the largest relative spread
    ``(max_d mean - min_d mean) / min_d mean`` over rescaled sample sizes
    shared (within ``match_rtol``) by at least two dimensions.
    """
    if not rows:
        raise ValueError("no rows to summarise")
    groups: dict[tuple[int, int], list[ResultRow]] = {}
    for row in rows:
        groups.setdefault((row.d, row.n), []).append(row)
    table = []
    for (d, n), grp in sorted(groups.items()):
        vals = np.array([getattr(g, metric) for g in grp])
        table.append(
            {
                "d": d,
                "n": n,
                "rescaled_n": grp[0].rescaled_n,
                "trials": len(grp),
                "mean": float(vals.mean()),
                "stderr": float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0,
                "converged": sum(g.converged for g in grp),
            }
        )
    per_d: dict[int, list[dict]] = {}
    for entry in table:
        per_d.setdefault(entry["d"], []).append(entry)
    decreasing = {}
    slopes_by_d = {}
    for d, entries in per_d.items():
        entries.sort(key=lambda e: e["n"])
        means = [e["mean"] for e in entries]
        decreasing[str(d)] = all(b < a for a, b in zip(means, means[1:]))
        if len(entries) >= 2:
            slopes_by_d[str(d)] = loglog_slope([e["rescaled_n"] for e in entries], means)
    out = {
        "metric": metric,
        "table": table,
        "decreasing": decreasing,
        "all_decreasing": all(decreasing.values()),
        "slope": loglog_slope([e["rescaled_n"] for e in table], [e["mean"] for e in table])
        if len(table) >= 2
        else None,
        "slope_by_d": slopes_by_d,
    }
    if len(per_d) < 2:
        out["collapse"] = None
        out["collapse_note"] = "collapse statistic needs at least two distinct d"
        return out
    clusters = _match_grid([(e["rescaled_n"], e["d"], e["mean"]) for e in table], match_rtol)
    grid = []
    for cl in clusters:
        if len({p[1] for p in cl}) < 2:
            continue
        means = [p[2] for p in cl]
        grid.append(
            {
                "rescaled_n": float(np.mean([p[0] for p in cl])),
                "dims": sorted({p[1] for p in cl}),
                "spread": (max(means) - min(means)) / min(means),
            }
        )
    if not grid:
        out["collapse"] = None
        out["collapse_note"] = "no rescaled sample size is shared by two dimensions"
    else:
        out["collapse"] = max(g["spread"] for g in grid)
    out["collapse_grid"] = grid
    return out
