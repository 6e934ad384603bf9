"""Solvers for the perturbed problem ``min_w f(w) + sigma * ||w - c||_X``.

Every accepted step of the Ekeland iteration needs an approximate minimizer of
this problem; its exact minimizer satisfies the Ekeland inequality with
constant sigma.  Working in whitened coordinates ``y = R (w - c)`` (R the
Cholesky factor of the X Gram matrix) turns the X-norm into the Euclidean
norm, whose proximal map is a block soft-threshold.
"""

import functools
import math

import numpy as np
from scipy import optimize

from .spaces import dual_norm_X, gram_matrix, riesz_representative, whitening, xnorm


@functools.lru_cache(maxsize=64)
def _gram_eigh(model):
    mu, q = np.linalg.eigh(gram_matrix(model))
    return mu, q


def quadratic_perturbed_min(model, weight, target, center, sigma):
    """Exact minimizer of ``weight*|w - t|^2 + sigma*||w - c||_X``.

    Writing ``y = w - c`` and ``d = t - c``, a nonzero minimizer solves
    ``(2 weight I + lam A) y = 2 weight d`` with ``lam = sigma / ||y||_X``.
    ``lam * ||y(lam)||_X`` is increasing in lam, so the root is bracketed and
    found with Brent's method in the eigenbasis of A.
    """
    center = np.asarray(center, dtype=float)
    d = np.asarray(target, dtype=float) - center
    if dual_norm_X(model, -2.0 * weight * d) <= sigma:
        return center.copy()
    mu, q = _gram_eigh(model)
    coef = q.T @ (2.0 * weight * d)

    def excess(lam):
        scaled = coef / (2.0 * weight + lam * mu)
        return lam * math.sqrt(float(np.sum(mu * scaled**2))) - sigma

    hi = 1.0
    while excess(hi) <= 0:
        hi *= 2.0
    lam = optimize.brentq(excess, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=1000)
    return center + q @ (coef / (2.0 * weight + lam * mu))


def _shrink(y, thresh):
    norm = float(np.linalg.norm(y))
    if norm <= thresh:
        return np.zeros_like(y)
    return y * (1.0 - thresh / norm)


def proximal_perturbed_min(model, value, grad, center, sigma, tol, budget, start=None):
    """Proximal gradient with backtracking for the perturbed problem.

    ``value(x)`` and ``grad(x)`` act on raw arrays; ``grad`` may return any
    element of the generalized gradient.  Whitening makes the smooth part
    well conditioned for the catalog functionals, so no acceleration is used.
    Each accepted step satisfies the descent lemma, so the objective never
    exceeds its value at the center.  Stops when the unit-step residual
    ``|y - prox(y - grad F(y))|`` drops below ``tol``.

    Returns ``(w, info)``.
    """
    r, r_inv = whitening(model)
    c = np.asarray(center, dtype=float)

    def F(y):
        return value(c + r_inv @ y)

    def gF(y):
        return r_inv.T @ grad(c + r_inv @ y)

    y = np.zeros(model.n)
    gy = gF(y)
    if float(np.linalg.norm(gy)) <= sigma:
        return c.copy(), {"iterations": 0, "stationarity": 0.0, "converged": True}
    L = 1.0
    if start is not None:
        y = r @ (np.asarray(start, dtype=float) - c)
        gy = gF(y)
        L = max(L, _curvature(gF, y, gy))

    Fy = F(y)
    res = math.inf
    it = 0
    for it in range(1, budget + 1):
        # L only grows: near convergence the descent test is at roundoff level
        slack = 1e-14 * (1.0 + abs(Fy))
        while True:
            cand = _shrink(y - gy / L, sigma / L)
            step = cand - y
            Fc = F(cand)
            if Fc <= Fy + float(gy @ step) + 0.5 * L * float(step @ step) + slack:
                break
            L *= 2.0
        y, Fy = cand, Fc
        gy = gF(y)
        res = float(np.linalg.norm(y - _shrink(y - gy, sigma)))
        if res <= tol:
            break
    return c + r_inv @ y, {"iterations": it, "stationarity": res, "converged": res <= tol}


def _curvature(gF, y, gy):
    """Secant curvature estimate of F along the gradient, doubled for safety."""
    norm = float(np.linalg.norm(gy))
    if norm == 0:
        return 1.0
    step = -1e-4 * gy / norm
    return 2.0 * float(np.linalg.norm(gF(y + step) - gy)) / 1e-4


def bounded_perturbed_min(model, value, grad, center, sigma, tol, budget, lower, upper, start):
    """L-BFGS-B on ``f(w) + sigma*||w - c||_X`` over the box [lower, upper]."""
    a = gram_matrix(model)
    c = np.asarray(center, dtype=float)

    def obj(w):
        diff = w - c
        nrm = xnorm(model, diff)
        val = value(w) + sigma * nrm
        g = np.array(grad(w), dtype=float)
        if nrm > 0:
            g = g + sigma * (a @ diff) / nrm
        return val, g

    x0 = np.clip(start, lower, upper)
    res = optimize.minimize(
        obj,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=[(lower, upper)] * model.n,
        options={"maxiter": budget, "ftol": 0.0, "gtol": tol},
    )
    best = min((c, x0, res.x), key=lambda w: obj(w)[0])
    return best.copy(), {"iterations": int(res.nit), "converged": bool(res.success)}


def perturbed_min(model, value, grad, center, sigma, tol, budget, lower=0.0, upper=math.inf):
    """Globalized solve: bounded L-BFGS-B from the center, then a proximal
    gradient polish when the result is interior.

    Small descent steps from a point of the cone stay in the cone for the
    catalog functionals (their kinks at zero block descent), while long
    unconstrained steps can jump into sign-flipped basins of the off-cone
    extension.  Bounding the first phase keeps the solve in the right basin.
    """
    c = np.asarray(center, dtype=float)
    g = np.asarray(grad(c), dtype=float)
    if dual_norm_X(model, g) <= sigma:
        return c.copy(), {"iterations": 0, "stationarity": 0.0, "converged": True, "phase": "center"}

    def phi(w):
        return value(w) + sigma * xnorm(model, w - c)

    start = np.clip(c - 1e-3 * riesz_representative(model, g) / max(dual_norm_X(model, g), 1.0), lower, upper)
    w, info = bounded_perturbed_min(model, value, grad, c, sigma, tol, budget, lower, upper, start)
    info["phase"] = "bounded"
    if np.all(w > lower) and np.all(w < upper):
        w2, info2 = proximal_perturbed_min(model, value, grad, c, sigma, tol, budget, start=w)
        if np.all(w2 >= lower) and np.all(w2 <= upper) and phi(w2) <= phi(w) + 1e-15 * (1 + abs(phi(w))):
            w, info = w2, dict(info2, phase="polished")
    if phi(w) > value(c):
        return c.copy(), {"iterations": info["iterations"], "converged": False, "phase": "center"}
    return w, info
