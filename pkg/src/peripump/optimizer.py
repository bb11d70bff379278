"""Augmented-Lagrangian outer loop with dense BFGS inner solves.

The outer loop follows the two-branch update: a sufficiently feasible
inner solution either terminates (below the final tolerance) or updates
the multipliers and tightens the tolerance by sigma^-0.9; otherwise the
penalty grows tenfold and the tolerance resets to sigma^-0.1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import line_search as _wolfe_line_search

__all__ = ["ALState", "BFGSResult", "bfgs_minimize", "augmented_lagrangian",
           "ALResult", "al_value_and_gradient"]

log = logging.getLogger("peripump.optimizer")


@dataclass
class ALState:
    lam: np.ndarray
    sigma: float
    zeta: float
    zeta_star: float
    outer_iter: int = 0


@dataclass
class BFGSResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    evaluations: int
    status: str  # "gtol" | "stalled" | "maxiter" | "linesearch"


@dataclass
class ALResult:
    x: np.ndarray
    constraints: np.ndarray
    state: ALState
    history: list = field(default_factory=list)
    converged: bool = False
    inner_results: list = field(default_factory=list)


def al_value_and_gradient(objective, constraints, lam, sigma):
    """Build L_A(x) = J - lam.C + (sigma/2)|C|^2 and its gradient.

    objective(x) -> (J, gradJ); constraints(x) -> (C, gradC) with C a
    vector and gradC stacked rows.  Both callables may share work through
    caching upstream.
    """

    def fg(x):
        J, gJ = objective(x)
        C, gC = constraints(x)
        val = J - np.dot(lam, C) + 0.5 * sigma * np.dot(C, C)
        grad = gJ + (-lam + sigma * C) @ gC
        return val, grad

    return fg


def bfgs_minimize(fun_and_grad, x0, *, gtol=1e-5, maxiter=200,
                  callback=None) -> BFGSResult:
    """Dense BFGS with a strong-Wolfe line search (c1=1e-4, c2=0.9).

    Returns the best point seen; a line-search breakdown after repeated
    attempts ends the solve with status "linesearch".  Objective failures
    (exceptions from infeasible trial shapes) count as +inf so the line
    search backs off.
    """
    cache: dict = {}
    evals = [0]

    def fg(x):
        key = x.tobytes()
        if key not in cache:
            evals[0] += 1
            try:
                cache[key] = fun_and_grad(x)
            except Exception:  # infeasible trial step
                cache[key] = (np.inf, np.full_like(x, np.nan))
        return cache[key]

    x = np.asarray(x0, dtype=float).copy()
    n = len(x)
    f, g = fg(x)
    if not np.isfinite(f):
        raise ValueError("objective failed at the starting point")
    H = np.eye(n)
    best_x, best_f, best_g = x.copy(), f, g.copy()
    status = "maxiter"
    iters = 0
    while iters < maxiter:
        if np.linalg.norm(g) <= gtol:
            status = "gtol"
            break
        d = -H @ g
        with np.errstate(all="ignore"):
            alpha = _wolfe_line_search(lambda z: fg(z)[0], lambda z: fg(z)[1],
                                       x, d, gfk=g, old_fval=f,
                                       c1=1e-4, c2=0.9, maxiter=20)[0]
        if alpha is None or not np.isfinite(alpha) or alpha <= 0:
            # backtracking fallback on the Armijo condition
            alpha = 1.0
            gd = np.dot(g, d)
            for _ in range(25):
                fa = fg(x + alpha * d)[0]
                if np.isfinite(fa) and fa <= f + 1e-4 * alpha * gd:
                    break
                alpha *= 0.5
            else:
                status = "linesearch"
                log.warning("line search failed after %d iterations", iters)
                break
        iters += 1
        x_new = x + alpha * d
        f_new, g_new = fg(x_new)
        s = x_new - x
        y = g_new - g
        sy = np.dot(s, y)
        if np.isfinite(sy) and sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        x, f, g = x_new, f_new, g_new
        if f < best_f:
            best_x, best_f, best_g = x.copy(), f, g.copy()
        if callback is not None:
            callback(x, f, g)
        if np.linalg.norm(s) <= 1e-14 * (1 + np.linalg.norm(x)):
            status = "stalled"
            break
    return BFGSResult(x=best_x, fun=best_f, grad=best_g, iterations=iters,
                      evaluations=evals[0], status=status)


def augmented_lagrangian(objective, constraints, x0, *, lam0=(0.0, 0.0),
                         sigma0=10.0, zeta_star=0.01, outer_cap=25,
                         inner_maxiter=200, gtol_scale=1e-5,
                         record=None, inner_callback=None) -> ALResult:
    """Outer AL loop; `record(kind, **data)` observes progress if given."""
    x = np.asarray(x0, dtype=float).copy()
    state = ALState(lam=np.asarray(lam0, dtype=float).copy(), sigma=float(sigma0),
                    zeta=float(sigma0) ** -0.1, zeta_star=zeta_star)
    history = []
    inner_results = []
    converged = False
    C = None
    for m in range(1, outer_cap + 1):
        state.outer_iter = m
        fg = al_value_and_gradient(objective, constraints, state.lam, state.sigma)
        f0, _ = fg(x)
        gtol = gtol_scale * (1.0 + abs(f0))
        inner = bfgs_minimize(fg, x, gtol=gtol, maxiter=inner_maxiter,
                              callback=inner_callback)
        inner_results.append(inner)
        x = inner.x
        C, _ = constraints(x)
        J, _ = objective(x)
        entry = {"outer": m, "J": float(J), "C": np.array(C, dtype=float),
                 "sigma": state.sigma, "lam": state.lam.copy(),
                 "inner_iters": inner.iterations, "gnorm": float(np.linalg.norm(inner.grad)),
                 "zeta": state.zeta, "inner_status": inner.status}
        history.append(entry)
        if record is not None:
            record("outer", **entry)
        feas = np.max(np.abs(C))
        if feas < state.zeta:
            if feas < state.zeta_star:
                converged = True
                break
            # update multiplier
            state.lam = state.lam - state.sigma * np.asarray(C)
            state.zeta = state.sigma ** -0.9 * state.zeta
        else:
            # increase penalty
            state.sigma = 10.0 * state.sigma
            state.zeta = state.sigma ** -0.1
    return ALResult(x=x, constraints=np.asarray(C, dtype=float), state=state,
                    history=history, converged=converged,
                    inner_results=inner_results)
