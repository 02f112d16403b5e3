"""Weighted entrywise sampling, the rescaled observation operator and noise.

Sample ``i`` picks row ``a(i)`` with probability ``R_a / d_r``, column ``b(i)``
with probability ``C_b / d_c`` and a Rademacher sign ``eps_i``. The
observation operator maps a matrix to the vector with entries
``sqrt(d_r d_c) * eps_i * Theta[a(i), b(i)]``.

Random streams are numpy ``Generator`` objects over the PCG64 bit generator.
Per-trial seeds come from :func:`derive_seed`, a BLAKE2b hash of the master
seed and the trial coordinates, so results never depend on scheduling.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional

import numpy as np

from .measures import DimensionError, WeightPair, as_matrix

NOISE_MODELS = ("gaussian", "laplace")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(master_seed: int, *keys) -> int:
    """Deterministic 64-bit seed for the stream identified by ``keys``."""
    text = ":".join(str(k) for k in (master_seed, *keys))
    digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class SampleIndex(NamedTuple):
    row: int
    col: int
    sign: int


@dataclass(frozen=True, eq=False)
class SampleIndices:
    """Vectorised sequence of :class:`SampleIndex` on a ``d_r x d_c`` grid."""

    rows: np.ndarray
    cols: np.ndarray
    signs: np.ndarray
    shape: tuple[int, int]

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).reshape(-1)
        cols = np.asarray(self.cols, dtype=np.int64).reshape(-1)
        signs = np.asarray(self.signs, dtype=np.int64).reshape(-1)
        shape = (int(self.shape[0]), int(self.shape[1]))
        if not rows.size == cols.size == signs.size:
            raise DimensionError("rows, cols and signs must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= shape[0]):
            raise IndexError(f"row index out of bounds for {shape[0]} rows")
        if cols.size and (cols.min() < 0 or cols.max() >= shape[1]):
            raise IndexError(f"column index out of bounds for {shape[1]} columns")
        if not np.all(np.abs(signs) == 1):
            raise ValueError("signs must be +1 or -1")
        for arr in (rows, cols, signs):
            arr.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "shape", shape)

    def __len__(self) -> int:
        return self.rows.size

    def __eq__(self, other):
        if not isinstance(other, SampleIndices):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.signs, other.signs)
        )

    __hash__ = None

    def __iter__(self) -> Iterator[SampleIndex]:
        for a, b, s in zip(self.rows.tolist(), self.cols.tolist(), self.signs.tolist()):
            yield SampleIndex(a, b, s)

    def __getitem__(self, i) -> SampleIndex:
        return SampleIndex(int(self.rows[i]), int(self.cols[i]), int(self.signs[i]))

    @property
    def scale(self) -> float:
        return math.sqrt(self.shape[0] * self.shape[1])

    def flat(self) -> np.ndarray:
        return self.rows * self.shape[1] + self.cols

    def multiplicity(self) -> np.ndarray:
        """How many times each cell was drawn, as a ``d_r x d_c`` integer array."""
        counts = np.bincount(self.flat(), minlength=self.shape[0] * self.shape[1])
        return counts.reshape(self.shape)

    @classmethod
    def full_grid(cls, d_r: int, d_c: int) -> "SampleIndices":
        """Every cell exactly once, all signs ``+1``, in row-major order."""
        rows, cols = np.divmod(np.arange(d_r * d_c), d_c)
        return cls(rows, cols, np.ones(d_r * d_c, dtype=np.int64), (d_r, d_c))


@dataclass(frozen=True, eq=False)
class ObservationSet:
    indices: SampleIndices
    responses: np.ndarray
    noise_level: float
    weights: WeightPair
    seed: Optional[int] = None
    noise: str = "gaussian"
    # raw noise draws xi (before scaling by noise_level), when known
    xi: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        y = np.asarray(self.responses, dtype=float).reshape(-1)
        if y.size == 0:
            raise ValueError("an observation set needs at least one sample")
        if y.size != len(self.indices):
            raise DimensionError("responses and indices differ in length")
        if self.indices.shape != self.weights.shape:
            raise DimensionError("index grid does not match the weights")
        if self.noise_level < 0:
            raise ValueError("noise level must be nonnegative")
        y.setflags(write=False)
        object.__setattr__(self, "responses", y)

    def __eq__(self, other):
        if not isinstance(other, ObservationSet):
            return NotImplemented
        return (
            self.indices == other.indices
            and np.array_equal(self.responses, other.responses)
            and self.noise_level == other.noise_level
            and self.weights == other.weights
            and self.seed == other.seed
            and self.noise == other.noise
        )

    __hash__ = None

    @property
    def n(self) -> int:
        return self.responses.size

    @property
    def dims(self) -> tuple[int, int]:
        return self.indices.shape


def sample_indices(
    w: WeightPair, n: int, rng: np.random.Generator, signs: bool = True
) -> SampleIndices:
    """Draw ``n`` i.i.d. cells from the weighted sampling distribution.

    Rows and columns are drawn independently by inverse-CDF lookup on the
    cumulative weights. With ``signs=False`` every sign is ``+1``, which gives
    the unsigned (but equally distributed) version of the model.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    d_r, d_c = w.shape
    row_cdf = np.cumsum(w.row_weights) / d_r
    col_cdf = np.cumsum(w.col_weights) / d_c
    u = rng.random(n)
    v = rng.random(n)
    rows = np.minimum(np.searchsorted(row_cdf, u, side="right"), d_r - 1)
    cols = np.minimum(np.searchsorted(col_cdf, v, side="right"), d_c - 1)
    if signs:
        eps = 2 * rng.integers(0, 2, size=n) - 1
    else:
        eps = np.ones(n, dtype=np.int64)
    return SampleIndices(rows, cols, eps, (d_r, d_c))


def draw_noise(kind: str, n: int, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean, unit-variance noise of the requested family."""
    if kind == "gaussian":
        return rng.standard_normal(n)
    if kind == "laplace":
        return rng.laplace(0.0, 1.0 / math.sqrt(2.0), size=n)
    raise ValueError(f"unknown noise model {kind!r}; expected one of {NOISE_MODELS}")


def apply_operator(indices: SampleIndices, theta) -> np.ndarray:
    theta = as_matrix(theta, "theta")
    if theta.shape != indices.shape:
        raise DimensionError(f"matrix shape {theta.shape} does not match {indices.shape}")
    return indices.scale * indices.signs * theta[indices.rows, indices.cols]


def apply_adjoint(indices: SampleIndices, v, dims: Optional[tuple[int, int]] = None) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != len(indices):
        raise DimensionError(f"vector of length {v.size} for {len(indices)} samples")
    if dims is not None and tuple(dims) != indices.shape:
        raise DimensionError(f"dims {dims} do not match {indices.shape}")
    d_r, d_c = indices.shape
    out = np.bincount(indices.flat(), weights=indices.scale * indices.signs * v, minlength=d_r * d_c)
    return out.reshape(d_r, d_c)


def observe(
    theta_star,
    indices: SampleIndices,
    nu: float,
    noise: str = "gaussian",
    rng: Optional[np.random.Generator] = None,
    weights: Optional[WeightPair] = None,
    seed: Optional[int] = None,
) -> ObservationSet:
    """Noisy responses ``y = X_n(Theta*) + nu * xi``."""
    if nu < 0:
        raise ValueError("noise level must be nonnegative")
    if noise not in NOISE_MODELS:
        raise ValueError(f"unknown noise model {noise!r}; expected one of {NOISE_MODELS}")
    clean = apply_operator(indices, theta_star)
    if rng is None:
        rng = make_rng(0 if seed is None else seed)
    xi = draw_noise(noise, len(indices), rng)
    if weights is None:
        weights = WeightPair.uniform(*indices.shape)
    return ObservationSet(indices, clean + nu * xi, float(nu), weights, seed, noise, xi)


class GammaOperator:
    """Observation operator acting on ``Gamma`` coordinates.

    Sample ``i`` reads ``sqrt(d_r d_c) eps_i Gamma[a, b] / sqrt(R_a C_b)``, so
    ``apply(to_gamma(Theta)) == apply_operator(indices, Theta)``.
    """

    def __init__(self, indices: SampleIndices, w: WeightPair):
        if indices.shape != w.shape:
            raise DimensionError("index grid does not match the weights")
        self.indices = indices
        self.weights = w
        inv = 1.0 / np.sqrt(w.row_weights[indices.rows] * w.col_weights[indices.cols])
        self.coef = indices.scale * indices.signs * inv
        self.coef.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.indices.shape

    def __len__(self) -> int:
        return len(self.indices)

    def apply(self, gamma) -> np.ndarray:
        gamma = as_matrix(gamma, "gamma")
        if gamma.shape != self.shape:
            raise DimensionError(f"matrix shape {gamma.shape} does not match {self.shape}")
        return self.coef * gamma[self.indices.rows, self.indices.cols]

    def adjoint(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.size != len(self):
            raise DimensionError(f"vector of length {v.size} for {len(self)} samples")
        d_r, d_c = self.shape
        out = np.bincount(self.indices.flat(), weights=self.coef * v, minlength=d_r * d_c)
        return out.reshape(d_r, d_c)

    def normal_diagonal(self) -> np.ndarray:
        """Diagonal of ``adjoint(apply(.))`` per cell; the operator is cell-diagonal."""
        d_r, d_c = self.shape
        out = np.bincount(self.indices.flat(), weights=self.coef**2, minlength=d_r * d_c)
        return out.reshape(d_r, d_c)


def gamma_operator(indices: SampleIndices, w: WeightPair) -> GammaOperator:
    return GammaOperator(indices, w)
