"""Slow, independent reference computations used only by the tests."""

import math

import numpy as np
from scipy.optimize import minimize_scalar


def scalar_prox_svt(m, tau):
    """SVT by minimising 0.5 (x - s)^2 + tau |x| numerically for each singular value."""
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    shrunk = []
    for sv in s:
        res = minimize_scalar(
            lambda x: 0.5 * (x - sv) ** 2 + tau * abs(x),
            bounds=(-1.0, sv + 1.0),
            method="bounded",
            options={"xatol": 1e-12},
        )
        shrunk.append(res.x)
    return (u * np.array(shrunk)) @ vt


def dual_prox_oracle(m, tau, bound, gap_tol=1e-13, max_iter=1_000_000):
    """Joint prox of tau*nuclear + box via accelerated projected gradient on the dual.

    The dual variable lives in the operator-norm ball of radius tau; the
    primal point is recovered as clip(m - Y). Stops once the duality gap
    certifies ||X - X*||_F^2 <= 2 * gap.
    """
    def primal(x):
        return 0.5 * np.sum((x - m) ** 2) + tau * np.linalg.svd(x, compute_uv=False).sum()

    def proj_opball(y):
        u, s, vt = np.linalg.svd(y, full_matrices=False)
        return (u * np.minimum(s, tau)) @ vt

    y = np.zeros_like(m)
    z = y
    t = 1.0
    gap = math.inf
    x = np.clip(m, -bound, bound)
    for k in range(max_iter):
        x_z = np.clip(m - z, -bound, bound)
        y_new = proj_opball(z + x_z)
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        z = y_new + (t - 1) / t_new * (y_new - y)
        y, t = y_new, t_new
        if k % 25 == 0:
            x = np.clip(m - y, -bound, bound)
            dual = 0.5 * np.sum((x - m) ** 2) + np.sum(y * x)
            gap = primal(x) - dual
            if gap < gap_tol:
                break
    return x, gap


def central_difference_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def plain_nuclear_ista(indices, y, shape, lam, iters=20000, tol=1e-14):
    """Unweighted nuclear-norm least squares straight from the raw operator, no box."""
    d_r, d_c = shape
    scale = math.sqrt(d_r * d_c)
    n = y.size
    coef = scale * indices.signs
    counts = np.bincount(indices.flat(), minlength=d_r * d_c)
    step = n / (scale**2 * counts.max())
    g = np.zeros(shape)
    for _ in range(iters):
        resid = coef * g[indices.rows, indices.cols] - y
        grad = np.bincount(indices.flat(), weights=coef * resid, minlength=d_r * d_c).reshape(shape) / n
        u, s, vt = np.linalg.svd(g - step * grad, full_matrices=False)
        new = (u * np.maximum(s - step * lam, 0)) @ vt
        if np.linalg.norm(new - g) < tol:
            g = new
            break
        g = new
    return g
