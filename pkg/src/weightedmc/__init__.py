"""Weighted noisy matrix completion with a constrained nuclear-norm estimator."""

from .measures import (
    DimensionError,
    WeightPair,
    ZeroMatrixError,
    constraint_membership,
    from_gamma,
    lq_membership,
    measures,
    to_gamma,
)
from .sampling import (
    ObservationSet,
    SampleIndices,
    apply_adjoint,
    apply_operator,
    gamma_operator,
    make_rng,
    observe,
    sample_indices,
)
from .solver import Estimate, SolverOptions, default_lambda, objective, prox_nuclear_in_box, solve, svt

__version__ = "0.1.0"
