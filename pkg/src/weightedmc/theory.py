"""Theoretical rate calculators and empirical checks of the supporting lemmas.

Contents: the general error bound and its exact-rank / l_q-ball corollaries,
the minimax lower bound, the low-rank-plus-orthogonal error decomposition,
the restricted strong convexity margin, and the operator norm of the
weighted noise matrix that drives the choice of regularisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .measures import (
    RANK_TOL,
    DimensionError,
    WeightPair,
    ZeroMatrixError,
    as_matrix,
    constraint_membership,
    from_gamma,
    half_dim,
    measures,
    singular_values,
    to_gamma,
)
from .packing import rotated_sign_matrix
from .sampling import GammaOperator, SampleIndices, apply_operator, draw_noise, sample_indices

KINDS = ("exact_rank", "lq_ball", "minimax_floor", "theorem2")


@dataclass
class RatePrediction:
    kind: str
    value: float
    components: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if not self.value >= 0:
            raise ValueError("a rate prediction is nonnegative")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value, "components": dict(self.components)}


@dataclass
class RscReport:
    n_samples_tested: int
    violations: int
    margins: list[float]

    @classmethod
    def from_margins(cls, margins) -> "RscReport":
        margins = [float(m) for m in margins]
        return cls(len(margins), sum(m < 0 for m in margins), margins)

    def to_dict(self) -> dict:
        m = np.asarray(self.margins)
        return {
            "n_samples_tested": self.n_samples_tested,
            "violations": self.violations,
            "pass_fraction": 1.0 - self.violations / max(self.n_samples_tested, 1),
            "min_margin": float(m.min()) if m.size else None,
            "margins": self.margins,
        }


def tail_sum(gamma: np.ndarray, r: int) -> float:
    """Sum of the singular values of ``gamma`` beyond the ``r`` largest."""
    return float(singular_values(gamma)[r:].sum())


def theorem2_bound(
    delta_tilde,
    theta_star,
    w: WeightPair,
    lambda_star: float,
    r: int,
    alpha_star: float,
    c1: float = 1.0,
) -> RatePrediction:
    """Right-hand side of the general error bound, split into its two terms.

    ``estimation = c1 * alpha_star * lambda_star * sqrt(r) * ||delta||_w,F`` and
    ``approximation = c1 * alpha_star * lambda_star * tail_r(Gamma*)``. The
    caller compares the total with ``||delta_tilde||_w,F ** 2``.
    """
    d_r = w.shape[0]
    if not 1 <= r <= d_r:
        raise ValueError(f"r must lie in [1, {d_r}], got {r}")
    err = measures(delta_tilde, w).weighted_frobenius
    scale = c1 * alpha_star * lambda_star
    estimation = scale * math.sqrt(r) * err
    approximation = scale * tail_sum(to_gamma(theta_star, w), r)
    return RatePrediction(
        "theorem2",
        estimation + approximation,
        {"estimation": estimation, "approximation": approximation, "error_sq": err**2},
    )


def corollary_rate(
    kind: str,
    nu: float,
    alpha_star: float,
    r_or_rho: float,
    q: float,
    d: float,
    n: int,
    c: float = 1.0,
) -> RatePrediction:
    """Upper-bound rate for exactly low-rank (``kind="exact"``) or l_q-ball targets.

    exact: ``c * max(nu^2, 1) * alpha^2 * r * d log d / n``
    lq:    ``c * rho_q * (max(nu^2, 1) * alpha^2 * d log d / n) ** (1 - q/2)``
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    if n <= 0 or d <= 1:
        raise ValueError("need n > 0 and d > 1")
    base = max(nu * nu, 1.0) * alpha_star**2 * d * math.log(d) / n
    if kind == "exact":
        return RatePrediction("exact_rank", c * r_or_rho * base, {"base": base, "q": 0.0})
    if kind == "lq":
        return RatePrediction("lq_ball", c * r_or_rho * base ** (1 - q / 2), {"base": base, "q": q})
    raise ValueError(f"kind must be 'exact' or 'lq', got {kind!r}")


def minimax_floor(rho_q: float, q: float, nu: float, d: float, n: int, c5: float = 1.0) -> RatePrediction:
    """Minimax lower bound ``c5 * min(rho_q (nu^2 d/n)^(1-q/2), nu^2 d^2/n)``.

    ``components["key_bound_holds"]`` reports whether
    ``rho_q <= (nu^2 d / n)^(q/2) * d``, the regime where the first branch
    is the active one.
    """
    if d <= 0 or n <= 0:
        raise ValueError("d and n must be positive")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    snr = nu * nu * d / n
    first = rho_q * snr ** (1 - q / 2)
    second = nu * nu * d * d / n
    branch = "rate" if first <= second else "saturation"
    key = rho_q <= snr ** (q / 2) * d
    return RatePrediction(
        "minimax_floor",
        c5 * min(first, second),
        {"rate": c5 * first, "saturation": c5 * second, "active_branch": branch, "key_bound_holds": key},
    )


@dataclass
class Decomposition:
    delta_prime: np.ndarray
    delta_dblprime: np.ndarray
    # True when sigma_r == sigma_{r+1} and the subspaces were picked by index order
    degenerate: bool


def lemma1_decompose(delta_hat, gamma_star, r: int) -> Decomposition:
    """Split ``delta_hat`` into a rank <= 2r part and an orthogonal remainder.

    With ``U``, ``V`` the top-``r`` singular subspaces of ``gamma_star``,
    ``delta'' = (I - P_U) delta_hat (I - P_V)`` and ``delta' = delta_hat - delta''``.
    """
    delta_hat = as_matrix(delta_hat, "delta_hat")
    gamma_star = as_matrix(gamma_star, "gamma_star")
    if delta_hat.shape != gamma_star.shape:
        raise DimensionError("delta_hat and gamma_star differ in shape")
    if not 1 <= r <= min(gamma_star.shape):
        raise ValueError(f"r must lie in [1, {min(gamma_star.shape)}], got {r}")
    u, s, vt = np.linalg.svd(gamma_star, full_matrices=False)
    degenerate = False
    if r < s.size:
        degenerate = bool(abs(s[r - 1] - s[r]) <= RANK_TOL * max(s[0], 1e-300))
    U = u[:, :r]
    V = vt[:r].T
    left = delta_hat - U @ (U.T @ delta_hat)
    dbl = left - (left @ V) @ V.T
    return Decomposition(delta_hat - dbl, dbl, degenerate)


def nuclear_norm(m) -> float:
    return float(singular_values(as_matrix(m)).sum())


def cone_inequality(decomp: Decomposition, gamma_star, r: int) -> tuple[bool, float]:
    """Check ``||delta''||_nuc <= 3 ||delta'||_nuc + 4 tail_r(gamma_star)``.

    Returns the verdict and the slack (right side minus left side).
    """
    lhs = nuclear_norm(decomp.delta_dblprime)
    rhs = 3 * nuclear_norm(decomp.delta_prime) + 4 * tail_sum(as_matrix(gamma_star), r)
    return lhs <= rhs, rhs - lhs


def rsc_margin(indices: SampleIndices, delta, w: WeightPair, n: Optional[int] = None) -> float:
    """``||X_n(delta)||_2 / sqrt(n) - (1/8) ||delta||_w,F (1 - 128 alpha_sp / sqrt(n))``.

    Nonnegative means the restricted strong convexity inequality holds for
    this ``delta`` on these samples.
    """
    n = len(indices) if n is None else n
    if n != len(indices):
        raise DimensionError(f"n={n} but {len(indices)} samples given")
    rep = measures(delta, w)
    if rep.spikiness is None:
        raise ZeroMatrixError("rsc margin is undefined for the zero matrix")
    lhs = np.linalg.norm(apply_operator(indices, delta)) / math.sqrt(n)
    rhs = rep.weighted_frobenius * (1.0 - 128.0 * rep.spikiness / math.sqrt(n)) / 8.0
    return float(lhs - rhs)


def noise_matrix(indices: SampleIndices, xi, w: WeightPair, n: Optional[int] = None) -> np.ndarray:
    """``(1/n) sum_i xi_i R^{-1/2} X^(i) C^{-1/2}`` as a dense matrix."""
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.size != len(indices):
        raise DimensionError(f"{xi.size} noise values for {len(indices)} samples")
    n = len(indices) if n is None else n
    return GammaOperator(indices, w).adjoint(xi) / n


def noise_opnorm(indices: SampleIndices, xi, w: WeightPair, n: Optional[int] = None) -> float:
    """Largest singular value of :func:`noise_matrix`."""
    m = noise_matrix(indices, xi, w, n)
    return float(singular_values(m)[0])


def sample_constraint_set(
    w: WeightPair,
    n: int,
    rank: int,
    rng: np.random.Generator,
    c0: float = 1.0,
    spike_cap: Optional[float] = None,
    max_tries: int = 10_000,
) -> np.ndarray:
    """Random unit-norm matrix inside the RSC constraint set.

    Draws from the rotated-sign recipe of :mod:`weightedmc.packing` (in Gamma
    coordinates), rescales to unit weighted Frobenius norm and rejects draws
    outside the constraint set or above ``spike_cap``
    (default ``sqrt(32 log d)``).
    """
    d_r, d_c = w.shape
    cap = math.sqrt(32.0 * math.log(half_dim(w.shape))) if spike_cap is None else spike_cap
    for _ in range(max_tries):
        theta = from_gamma(rotated_sign_matrix(d_r, d_c, rank, rng), w)
        rep = measures(theta, w)
        theta = theta / rep.weighted_frobenius
        if rep.spikiness <= cap and constraint_membership(theta, w, n, c0).inside:
            return theta
    raise RuntimeError(f"no draw landed in the constraint set after {max_tries} tries")


def rsc_monte_carlo(
    w: WeightPair,
    n: int,
    draws: int,
    rng: np.random.Generator,
    rank: int = 1,
    c0: float = 1.0,
    spike_cap: Optional[float] = None,
) -> RscReport:
    """Margins of the RSC inequality for ``draws`` random members of the constraint set.

    One sampling operator is drawn first and shared by every test matrix,
    since the inequality is claimed uniformly over the set.
    """
    indices = sample_indices(w, n, rng)
    margins = [
        rsc_margin(indices, sample_constraint_set(w, n, rank, rng, c0, spike_cap), w)
        for _ in range(draws)
    ]
    return RscReport.from_margins(margins)


def noise_norm_monte_carlo(
    w: WeightPair, n: int, nu: float, reps: int, rng: np.random.Generator, noise: str = "gaussian"
) -> list[float]:
    """Operator norms of the weighted noise matrix over ``reps`` fresh samplings.

    The noise passed to :func:`noise_opnorm` is ``nu * xi``.
    """
    out = []
    for _ in range(reps):
        idx = sample_indices(w, n, rng)
        out.append(noise_opnorm(idx, nu * draw_noise(noise, n, rng), w))
    return out
