"""Weighted norms, the Gamma change of coordinates, and spikiness/rank measures.

Every quantity here is computed on ``Gamma = sqrt(R) @ Theta @ sqrt(C)`` where
``R`` and ``C`` are the diagonal row and column weight matrices. Matrices are
plain two-dimensional float ``numpy`` arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

#: Singular values below ``RANK_TOL * sigma_max`` count as zero.
RANK_TOL = 1e-10


class DimensionError(ValueError):
    """Raised when matrix shapes do not agree with each other or with weights."""


class ZeroMatrixError(ValueError):
    """Raised when a ratio measure is requested for the zero matrix."""


@dataclass(frozen=True)
class WeightPair:
    """Positive row and column weights (the diagonals of ``R`` and ``C``).

    Row weights must sum to ``d_r`` and column weights to ``d_c``, so that
    ``R / d_r`` and ``C / d_c`` are probability distributions over rows and
    columns.
    """

    row_weights: np.ndarray
    col_weights: np.ndarray

    def __post_init__(self):
        rw = np.array(self.row_weights, dtype=float).reshape(-1)
        cw = np.array(self.col_weights, dtype=float).reshape(-1)
        for name, w in (("row", rw), ("column", cw)):
            if w.size == 0:
                raise ValueError(f"{name} weights are empty")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ValueError(f"{name} weights must be finite and strictly positive")
            if abs(w.sum() - w.size) > 1e-10 * w.size:
                raise ValueError(
                    f"{name} weights must sum to their length {w.size}, got {w.sum():.15g}"
                )
        rw.setflags(write=False)
        cw.setflags(write=False)
        object.__setattr__(self, "row_weights", rw)
        object.__setattr__(self, "col_weights", cw)

    @classmethod
    def uniform(cls, d_r: int, d_c: Optional[int] = None) -> "WeightPair":
        return cls(np.ones(d_r), np.ones(d_r if d_c is None else d_c))

    @classmethod
    def from_unnormalized(cls, row, col) -> "WeightPair":
        """Rescale arbitrary positive vectors so they satisfy the sum constraint."""
        row = np.asarray(row, dtype=float)
        col = np.asarray(col, dtype=float)
        return cls(row * (row.size / row.sum()), col * (col.size / col.sum()))

    @property
    def shape(self) -> tuple[int, int]:
        return self.row_weights.size, self.col_weights.size

    @property
    def L_bound(self) -> float:
        """``max(1, 1 / min weight)``; the constant ``L`` bounding inverse weights."""
        smallest = min(self.row_weights.min(), self.col_weights.min())
        return max(1.0, 1.0 / smallest)

    def is_uniform(self) -> bool:
        return bool(np.all(self.row_weights == 1.0) and np.all(self.col_weights == 1.0))

    def __eq__(self, other):
        if not isinstance(other, WeightPair):
            return NotImplemented
        return np.array_equal(self.row_weights, other.row_weights) and np.array_equal(
            self.col_weights, other.col_weights
        )

    __hash__ = None


class MeasureReport(NamedTuple):
    weighted_frobenius: float
    weighted_nuclear: float
    weighted_linf: float
    # None for the zero matrix, where both ratios are undefined
    spikiness: Optional[float]
    rank_measure: Optional[float]


class Membership(NamedTuple):
    inside: bool
    margin: float


class BallMembership(NamedTuple):
    inside: bool
    value: float


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def _check_dims(m: np.ndarray, w: WeightPair) -> None:
    if m.shape != w.shape:
        raise DimensionError(f"matrix shape {m.shape} does not match weights {w.shape}")


def half_dim(shape: tuple[int, int]) -> float:
    """``d = (d_r + d_c) / 2``."""
    return 0.5 * (shape[0] + shape[1])


def to_gamma(theta, w: WeightPair) -> np.ndarray:
    """Map ``Theta`` to ``Gamma = sqrt(R) Theta sqrt(C)``."""
    theta = as_matrix(theta, "theta")
    _check_dims(theta, w)
    return np.sqrt(w.row_weights)[:, None] * theta * np.sqrt(w.col_weights)[None, :]


def from_gamma(gamma, w: WeightPair) -> np.ndarray:
    """Inverse of :func:`to_gamma`."""
    gamma = as_matrix(gamma, "gamma")
    _check_dims(gamma, w)
    return gamma / np.sqrt(w.row_weights)[:, None] / np.sqrt(w.col_weights)[None, :]


def singular_values(m: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.svd(m, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"SVD did not converge: {exc}") from exc


def numerical_rank(m, tol: float = RANK_TOL) -> int:
    s = singular_values(as_matrix(m))
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s >= tol * s[0]))


def measures(theta, w: WeightPair) -> MeasureReport:
    """Weighted Frobenius/nuclear/l-infinity norms plus spikiness and rank measure.

    The two ratios are ``None`` when ``theta`` is zero.
    """
    gamma = to_gamma(theta, w)
    s = singular_values(gamma)
    fro = float(np.linalg.norm(gamma))
    nuc = float(s.sum())
    linf = float(np.abs(gamma).max())
    if fro == 0.0:
        return MeasureReport(fro, nuc, linf, None, None)
    d_r, d_c = gamma.shape
    spike = math.sqrt(d_r * d_c) * linf / fro
    return MeasureReport(fro, nuc, linf, spike, nuc / fro)


def spikiness(theta, w: WeightPair) -> float:
    rep = measures(theta, w)
    if rep.spikiness is None:
        raise ZeroMatrixError("spikiness is undefined for the zero matrix")
    return rep.spikiness


def rank_measure(theta, w: WeightPair) -> float:
    rep = measures(theta, w)
    if rep.rank_measure is None:
        raise ZeroMatrixError("rank measure is undefined for the zero matrix")
    return rep.rank_measure


def constraint_threshold(shape: tuple[int, int], n: int, c0: float = 1.0) -> float:
    """``(1/c0) sqrt(n / (d log d))`` with ``d = (d_r + d_c) / 2``."""
    if n <= 0:
        raise ValueError("n must be positive")
    if c0 <= 0:
        raise ValueError("c0 must be positive")
    d = half_dim(shape)
    return math.sqrt(n / (d * math.log(d))) / c0


def constraint_membership(delta, w: WeightPair, n: int, c0: float = 1.0) -> Membership:
    """Test ``spikiness * rank_measure <= (1/c0) sqrt(n / (d log d))``.

    Points on the boundary count as inside, with a ``1e-12`` relative
    allowance for rounding. ``margin`` is threshold minus product, so a
    clearly negative margin means the matrix lies outside the set.
    """
    threshold = constraint_threshold(w.shape, n, c0)
    rep = measures(delta, w)
    if rep.spikiness is None:
        raise ZeroMatrixError("constraint set excludes the zero matrix")
    margin = threshold - rep.spikiness * rep.rank_measure
    return Membership(bool(margin >= -1e-12 * threshold), float(margin))


def lq_value(theta, w: WeightPair, q: float) -> float:
    """``sum_j sigma_j(Gamma) ** q`` with the convention ``0 ** 0 = 0``."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    s = singular_values(to_gamma(theta, w))
    if s.size == 0 or s[0] == 0.0:
        return 0.0
    if q == 0.0:
        return float(np.sum(s >= RANK_TOL * s[0]))
    return float(np.sum(s**q))


def lq_membership(theta, w: WeightPair, q: float, rho_q: float) -> BallMembership:
    value = lq_value(theta, w, q)
    return BallMembership(bool(value <= rho_q), value)
