"""Constrained weighted nuclear-norm estimator via proximal gradient.

The problem is solved in ``Gamma = sqrt(R) Theta sqrt(C)`` coordinates::

    minimize   (1/2n) ||y - X'(Gamma)||^2 + lam * ||Gamma||_nuc
    subject to max |Gamma_jk| <= alpha_star / sqrt(d_r d_c)

The joint proximal map of the nuclear norm and the box is computed with
Dykstra's alternating scheme. Because every sample touches one cell, the
normal operator ``X'^* X' / n`` is diagonal over cells, so each iteration
costs ``O(d_r d_c)`` plus one SVD regardless of ``n``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .measures import DimensionError, as_matrix, from_gamma, half_dim
from .sampling import GammaOperator, ObservationSet

log = logging.getLogger(__name__)

STEP_RULES = ("backtracking", "fixed")
PROX_MODES = ("dykstra", "approx")


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 5000
    rel_tol: float = 1e-9
    step_rule: str = "backtracking"
    dykstra_iters: int = 50
    dykstra_tol: float = 1e-10
    # monotone FISTA instead of plain proximal gradient
    accelerated: bool = False
    # "approx" is SVT followed by clipping: fast but not the exact joint prox
    prox_mode: str = "dykstra"

    def __post_init__(self):
        if self.max_iters < 1 or self.dykstra_iters < 1:
            raise ValueError("iteration limits must be positive")
        if self.rel_tol <= 0 or self.dykstra_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"step_rule must be one of {STEP_RULES}")
        if self.prox_mode not in PROX_MODES:
            raise ValueError(f"prox_mode must be one of {PROX_MODES}")


@dataclass
class Estimate:
    theta_hat: np.ndarray
    gamma_hat: np.ndarray
    objective_trace: list[float]
    iterations: int
    converged: bool
    lam: float
    alpha_star: float
    step_size: float = 1.0
    prox_exact: bool = True
    extra: dict = field(default_factory=dict)


def svt(m, tau: float) -> np.ndarray:
    """Soft-threshold the singular values of ``m`` by ``tau``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    m = as_matrix(m)
    if tau == 0:
        return m.copy()
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    keep = s > 0
    return (u[:, keep] * s[keep]) @ vt[keep]


def project_linf(m, bound: float) -> np.ndarray:
    if bound <= 0:
        raise ValueError("bound must be positive")
    return np.clip(m, -bound, bound)


def prox_nuclear_in_box(
    m, tau: float, bound: float = math.inf, opts: SolverOptions | None = None, full_output: bool = False
):
    """Proximal map of ``tau * ||.||_nuc`` plus the indicator of the box.

    Returns the minimiser of ``0.5 ||X - m||_F^2 + tau ||X||_nuc`` over
    ``max |X_jk| <= bound``. ``bound=math.inf`` disables the box.

    With ``full_output=True`` the return value is ``(X, exact, iterations)``;
    ``exact`` is False when Dykstra stopped on its iteration limit.
    """
    opts = opts or SolverOptions()
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if bound <= 0:
        raise ValueError("bound must be positive")
    m = as_matrix(m)
    if tau == 0:
        out = project_linf(m, bound) if math.isfinite(bound) else m.copy()
        return (out, True, 0) if full_output else out
    x = svt(m, tau)
    # A feasible SVT point already solves the constrained problem.
    if not math.isfinite(bound) or np.abs(x).max() <= bound:
        return (x, True, 1) if full_output else x
    if opts.prox_mode == "approx":
        out = project_linf(x, bound)
        return (out, False, 1) if full_output else out

    z = m
    p = np.zeros_like(m)
    q = np.zeros_like(m)
    exact = False
    it = 0
    for it in range(1, opts.dykstra_iters + 1):
        x = svt(z + p, tau)
        p = z + p - x
        z_new = project_linf(x + q, bound)
        q = x + q - z_new
        change = np.linalg.norm(z_new - z)
        z = z_new
        if change < opts.dykstra_tol:
            exact = True
            break
    return (z, exact, it) if full_output else z


def default_lambda(nu: float, L_bound: float, d: float, n: int) -> tuple[float, float]:
    """Return ``(lam_n, lam_star)``.

    ``lam_n = 4 L nu sqrt(d log d / n)`` and
    ``lam_star = max(lam_n, sqrt(d log d / n))``.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    base = math.sqrt(d * math.log(d) / n)
    lam = 4.0 * L_bound * nu * base
    return lam, max(lam, base)


def auto_lambda(obs: ObservationSet) -> float:
    return default_lambda(obs.noise_level, obs.weights.L_bound, half_dim(obs.dims), obs.n)[0]


def objective(gamma, obs: ObservationSet, lam: float) -> float:
    """``(1/2n) ||y - X'(Gamma)||^2 + lam ||Gamma||_nuc`` from the raw samples."""
    gamma = as_matrix(gamma, "gamma")
    if gamma.shape != obs.dims:
        raise DimensionError(f"matrix shape {gamma.shape} does not match {obs.dims}")
    op = GammaOperator(obs.indices, obs.weights)
    resid = obs.responses - op.apply(gamma)
    nuc = np.linalg.svd(gamma, compute_uv=False).sum()
    return float(resid @ resid / (2 * obs.n) + lam * nuc)


class _Quadratic:
    """Smooth part of the objective in cell-diagonal form.

    ``f(G) = 0.5 sum(h * G**2) - <b, G> + c`` with ``h`` the per-cell
    curvature and ``b = X'^*(y) / n``.
    """

    def __init__(self, obs: ObservationSet):
        op = GammaOperator(obs.indices, obs.weights)
        n = obs.n
        self.h = op.normal_diagonal() / n
        self.b = op.adjoint(obs.responses) / n
        y = obs.responses
        self.c = float(y @ y) / (2 * n)
        self.lipschitz = float(self.h.max())

    def value(self, g: np.ndarray) -> float:
        return float(0.5 * np.sum(self.h * g * g) - np.sum(self.b * g) + self.c)

    def grad(self, g: np.ndarray) -> np.ndarray:
        return self.h * g - self.b


def smooth_gradient(gamma, obs: ObservationSet) -> np.ndarray:
    """Gradient ``(1/n) X'^*(X'(Gamma) - y)`` of the quadratic loss."""
    op = GammaOperator(obs.indices, obs.weights)
    return op.adjoint(op.apply(gamma) - obs.responses) / obs.n


def _nuclear(g: np.ndarray) -> float:
    return float(np.linalg.svd(g, compute_uv=False).sum())


def solve(
    obs: ObservationSet, lam: float, alpha_star: float, opts: SolverOptions | None = None
) -> Estimate:
    """Compute the constrained weighted nuclear-norm estimate.

    Parameters
    ----------
    obs : ObservationSet
        Sampled indices and responses.
    lam : float
        Regularisation weight, positive.
    alpha_star : float
        Spikiness budget, at least 1. The box is ``alpha_star / sqrt(d_r d_c)``.
    opts : SolverOptions, optional

    Returns
    -------
    Estimate
        ``converged`` is False when ``max_iters`` ran out; the last iterate is
        still returned.
    """
    opts = opts or SolverOptions()
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if alpha_star <= 0:
        raise ValueError("alpha_star must be positive")
    if alpha_star < 1:
        raise ValueError("alpha_star must be at least 1")
    d_r, d_c = obs.dims
    bound = alpha_star / math.sqrt(d_r * d_c)
    quad = _Quadratic(obs)

    def F(g, nuc=None):
        return quad.value(g) + lam * (_nuclear(g) if nuc is None else nuc)

    def prox(v, s):
        out, exact, _ = prox_nuclear_in_box(v, s * lam, bound, opts, full_output=True)
        return out, exact

    gamma = np.zeros((d_r, d_c))
    f_cur = F(gamma)
    trace = [f_cur]
    if opts.step_rule == "fixed":
        step = 1.0 / quad.lipschitz if quad.lipschitz > 0 else 1.0
    else:
        step = 1.0
    converged = False
    prox_exact = True
    # FISTA state
    y_pt = gamma
    t_k = 1.0
    it = 0
    for it in range(1, opts.max_iters + 1):
        base = y_pt if opts.accelerated else gamma
        f_base = quad.value(base)
        g_base = quad.grad(base)
        while True:
            cand, exact = prox(base - step * g_base, step)
            if opts.step_rule == "fixed":
                break
            diff = cand - base
            upper = f_base + np.sum(g_base * diff) + np.sum(diff * diff) / (2 * step)
            if quad.value(cand) <= upper + 1e-12 * max(1.0, abs(upper)):
                break
            step *= 0.5
            if step < 1e-20:
                raise FloatingPointError("backtracking step size underflow")
        prox_exact &= exact
        f_cand = F(cand)
        if opts.accelerated:
            t_next = 0.5 * (1 + math.sqrt(1 + 4 * t_k * t_k))
            # monotone variant: keep the better of the candidate and the old point
            new = cand if f_cand <= f_cur else gamma
            f_new = min(f_cand, f_cur)
            y_pt = new + (t_k / t_next) * (cand - new) + ((t_k - 1) / t_next) * (new - gamma)
            t_k = t_next
        else:
            new, f_new = cand, f_cand
        decrease = f_cur - f_new
        gamma, f_prev, f_cur = new, f_cur, f_new
        trace.append(f_cur)
        stalled = decrease <= opts.rel_tol * max(abs(f_prev), np.finfo(float).tiny)
        # a rejected FISTA candidate is not a sign of convergence
        if stalled and (not opts.accelerated or new is cand):
            converged = True
            break
    else:
        log.warning("solver hit max_iters=%d without converging", opts.max_iters)

    theta = from_gamma(gamma, obs.weights)
    return Estimate(
        theta_hat=theta,
        gamma_hat=gamma,
        objective_trace=trace,
        iterations=it,
        converged=converged,
        lam=float(lam),
        alpha_star=float(alpha_star),
        step_size=step,
        prox_exact=prox_exact,
    )

