"""Randomised packing sets of low-rank, non-spiky square matrices.

Each candidate starts as a ``d x d`` matrix whose first ``r`` rows are
independent uniform signs and whose remaining rows are zero. One shared Haar
orthogonal ``Q`` then rotates every candidate, and the result is scaled to
Frobenius norm ``delta``. A returned set satisfies four properties:

(a) ``||T||_F == delta``
(b) ``||T_l - T_k||_F >= delta`` for every pair
(c) ``spikiness(T) <= sqrt(32 log d)``
(d) ``||T||_op <= 4 delta / sqrt(r)``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .measures import WeightPair, singular_values, spikiness

FROB_RTOL = 1e-8


class PackingError(RuntimeError):
    """No attempt produced a set with all four properties."""

    def __init__(self, message: str, best_report: dict | None = None):
        super().__init__(message)
        self.best_report = best_report


def packing_size(d: int, r: int) -> int:
    """``floor(exp(r d / 128) / 4)``."""
    if d < 10:
        raise ValueError(f"packing sets need d >= 10, got {d}")
    if not 1 <= r <= d:
        raise ValueError(f"r must lie in [1, {d}], got {r}")
    return math.floor(math.exp(r * d / 128.0) / 4.0)


def haar_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix from a sign-corrected Gaussian QR."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def sign_candidates(d: int, r: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` unrotated candidates, shape ``(count, d, d)``."""
    out = np.zeros((count, d, d))
    out[:, :r, :] = 2.0 * rng.integers(0, 2, size=(count, r, d)) - 1.0
    return out


def hoeffding_mean(d: int, r: int, rng: np.random.Generator, pairs: int = 200) -> float:
    """Average of ``||A - B||_F^2 / (r d)`` over independent candidate pairs (mean 2)."""
    a = sign_candidates(d, r, pairs, rng)
    b = sign_candidates(d, r, pairs, rng)
    return float(np.mean(np.sum((a - b) ** 2, axis=(1, 2)) / (r * d)))


@dataclass
class PackingSet:
    matrices: list[np.ndarray]
    delta: float
    rank: int
    attempts_used: int = 0
    report: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.matrices[0].shape[0]


def _spike_cap(d: int) -> float:
    return math.sqrt(32.0 * math.log(d))


def _candidate_ok(t: np.ndarray, d: int, r: int, delta: float, w: WeightPair) -> bool:
    if spikiness(t, w) > _spike_cap(d):
        return False
    return singular_values(t)[0] <= 4.0 * delta / math.sqrt(r)


def verify_packing(pset: PackingSet) -> dict:
    """Check the four packing properties and report the measured extremes."""
    mats = pset.matrices
    if not mats:
        raise ValueError("cannot verify an empty packing set")
    d = mats[0].shape[0]
    r, delta = pset.rank, pset.delta
    w = WeightPair.uniform(d)
    frob = np.array([np.linalg.norm(m) for m in mats])
    spikes = np.array([spikiness(m, w) for m in mats])
    ops = np.array([singular_values(m)[0] for m in mats])
    if len(mats) > 1:
        stack = np.stack(mats).reshape(len(mats), -1)
        gram = stack @ stack.T
        sq = np.diag(gram)
        dist2 = sq[:, None] + sq[None, :] - 2.0 * gram
        iu = np.triu_indices(len(mats), k=1)
        min_dist = float(np.sqrt(max(dist2[iu].min(), 0.0)))
    else:
        min_dist = None
    spike_cap = _spike_cap(d)
    op_cap = 4.0 * delta / math.sqrt(r)
    report = {
        "d": d,
        "rank": r,
        "delta": delta,
        "size": len(mats),
        "frobenius": {
            "min": float(frob.min()),
            "max": float(frob.max()),
            "pass": bool(np.all(np.abs(frob - delta) <= FROB_RTOL * delta)),
        },
        "separation": {
            "min": min_dist,
            "threshold": delta,
            "pass": min_dist is None or min_dist >= delta * (1 - FROB_RTOL),
        },
        "spikiness": {"max": float(spikes.max()), "threshold": spike_cap, "pass": bool(spikes.max() <= spike_cap)},
        "operator_norm": {"max": float(ops.max()), "threshold": op_cap, "pass": bool(ops.max() <= op_cap)},
    }
    report["pass"] = all(report[k]["pass"] for k in ("frobenius", "separation", "spikiness", "operator_norm"))
    return report


def generate_packing(
    d: int,
    r: int,
    delta: float,
    rng: np.random.Generator,
    max_attempts: int = 20,
    max_candidates: int = 100_000,
) -> PackingSet:
    """Draw a verified packing set of size :func:`packing_size` ``(d, r)``.

    Each attempt draws ``round(exp(r d / 128))`` sign candidates and one Haar
    rotation, keeps candidates passing the spikiness and operator-norm caps,
    and greedily retains those at distance ``>= delta`` from every earlier
    keeper. Raises :class:`PackingError` carrying the best report when all
    attempts fail.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    size = packing_size(d, r)
    if size < 2:
        raise ValueError(
            f"packing size {size} < 2 for d={d}, r={r} (r*d={r * d}); need r*d >= 128*log(8)"
        )
    n_cand = round(math.exp(r * d / 128.0))
    if n_cand > max_candidates:
        raise ValueError(f"{n_cand} candidates exceeds max_candidates={max_candidates}")
    w = WeightPair.uniform(d)
    scale = delta / math.sqrt(r * d)
    best = None
    for attempt in range(1, max_attempts + 1):
        raw = sign_candidates(d, r, n_cand, rng)
        q = haar_orthogonal(d, rng)
        kept: list[np.ndarray] = []
        for cand in raw:
            t = scale * (q @ cand)
            if not _candidate_ok(t, d, r, delta, w):
                continue
            if all(np.linalg.norm(t - k) >= delta for k in kept):
                kept.append(t)
                if len(kept) == size:
                    break
        if len(kept) == size:
            pset = PackingSet(kept, delta, r, attempt)
            pset.report = verify_packing(pset)
            pset.report["rd"] = r * d
            pset.report["candidates_per_attempt"] = n_cand
            if pset.report["pass"]:
                return pset
            best = pset.report
        elif best is None or len(kept) > best.get("size", 0):
            best = {"size": len(kept), "needed": size, "attempt": attempt, "pass": False}
    raise PackingError(f"no verified packing set after {max_attempts} attempts", best)


def rotated_sign_matrix(d_r: int, d_c: int, r: int, rng: np.random.Generator) -> np.ndarray:
    """One rank-``r`` draw of the packing recipe on a ``d_r x d_c`` grid.

    Rows ``0..r-1`` hold uniform signs, the rest are zero, and a fresh Haar
    rotation mixes the rows. Frobenius norm is ``sqrt(r d_c)``.
    """
    if not 1 <= r <= min(d_r, d_c):
        raise ValueError(f"rank {r} out of range for a {d_r}x{d_c} matrix")
    base = np.zeros((d_r, d_c))
    base[:r] = 2.0 * rng.integers(0, 2, size=(r, d_c)) - 1.0
    return haar_orthogonal(d_r, rng) @ base
