"""Target-only reference fitters."""

from __future__ import annotations

import math

import numba
import numpy as np

from .errors import BadFolds, BadGrid
from .model import Dataset, GlmFamily, PriorSpec, validate_problem
from .vb_linear import LinearFitOptions, fit_linear
from .vb_logistic import LogisticFitOptions, fit_logistic


def fit_naive_vb(target: Dataset, family, priors: PriorSpec = None, options=None, scaling=None):
    """Spike-and-slab VB on the target alone (the engine with no sources).

    Source entries of ``priors`` are ignored.
    """
    family = GlmFamily.parse(family)
    problem = validate_problem(target, [], family)
    if priors is None:
        priors = PriorSpec.default(problem.p, 0)
    elif priors.K:
        priors = PriorSpec(q0=priors.q0, eta=priors.eta, a0=priors.a0, b0=priors.b0)
    if family is GlmFamily.GAUSSIAN:
        return fit_linear(problem, priors, options or LinearFitOptions(), scaling=scaling)
    return fit_logistic(problem, priors, options or LogisticFitOptions(), scaling=scaling)


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_objective(X, y, beta, lam, family=GlmFamily.GAUSSIAN) -> float:
    n = X.shape[0]
    eta = X @ beta
    if GlmFamily.parse(family) is GlmFamily.GAUSSIAN:
        loss = 0.5 * np.sum((y - eta) ** 2) / n
    else:
        loss = np.sum(np.logaddexp(0.0, eta) - y * eta) / n
    return float(loss + lam * np.sum(np.abs(beta)))


@numba.njit(cache=True)
def _cd_pass(X, r, wts, beta, lam, colsq):
    """One cyclic pass on ``sum(w r^2) / 2n + lam |b|_1``; updates ``r`` and
    ``beta`` in place and returns the largest coefficient change."""
    n, p = X.shape
    biggest = 0.0
    for j in range(p):
        if colsq[j] == 0.0:
            continue
        old = beta[j]
        rho = 0.0
        for i in range(n):
            rho += X[i, j] * wts[i] * r[i]
        rho = rho / n + colsq[j] * old
        mag = abs(rho) - lam
        new = 0.0
        if mag > 0.0:
            new = math.copysign(mag, rho) / colsq[j]
        if new != old:
            delta = new - old
            for i in range(n):
                r[i] -= X[i, j] * delta
            beta[j] = new
            biggest = max(biggest, abs(delta))
    return biggest


def _cd_quadratic(X, z, wts, beta, lam, colsq, tol, max_passes):
    r = z - X @ beta
    for _ in range(max_passes):
        if _cd_pass(X, r, wts, beta, lam, colsq) < tol:
            break
    return beta


def lasso_cd(X, y, lam, family=GlmFamily.GAUSSIAN, beta=None, tol=1e-8, max_passes=1000, max_irls=100):
    """Lasso fit by coordinate descent.

    Gaussian: cyclic soft-thresholding on ``||y - Xb||^2 / 2n + lam |b|_1``.
    Logistic: IRLS outer loop with a weighted coordinate-descent inner
    solve and step halving, so the penalized deviance never increases.
    Returns ``(beta, objective_history)`` with one entry per outer pass.
    """
    family = GlmFamily.parse(family)
    X = np.asfortranarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    beta = np.zeros(p) if beta is None else np.array(beta, dtype=float)
    history = [lasso_objective(X, y, beta, lam, family)]
    if family is GlmFamily.GAUSSIAN:
        colsq = np.sum(X * X, axis=0) / n
        wts = np.ones(n)
        r = y - X @ beta
        for _ in range(max_passes):
            moved = _cd_pass(X, r, wts, beta, lam, colsq)
            history.append(0.5 * float(r @ r) / n + lam * float(np.sum(np.abs(beta))))
            if moved < tol:
                break
        return beta, np.array(history)
    for _ in range(max_irls):
        eta = X @ beta
        prob = 1.0 / (1.0 + np.exp(-eta))
        wts = np.maximum(prob * (1.0 - prob), 1e-5)
        z = eta + (y - prob) / wts
        colsq = (wts @ (X * X)) / n
        proposal = _cd_quadratic(X, z, wts, beta.copy(), lam, colsq, tol, max_passes)
        step = 1.0
        while True:
            cand = beta + step * (proposal - beta)
            value = lasso_objective(X, y, cand, lam, family)
            if value <= history[-1] or step < 1e-6:
                break
            step *= 0.5
        if value > history[-1]:
            break
        moved = np.max(np.abs(cand - beta), initial=0.0)
        beta = cand
        history.append(value)
        if moved < tol:
            break
    return beta, np.array(history)


def lambda_max(X, y, family=GlmFamily.GAUSSIAN) -> float:
    n = X.shape[0]
    centre = 0.0 if GlmFamily.parse(family) is GlmFamily.GAUSSIAN else 0.5
    return float(np.max(np.abs(X.T @ (y - centre))) / n)


def default_grid(X, y, family=GlmFamily.GAUSSIAN, size=50, ratio=1e-3) -> np.ndarray:
    top = lambda_max(X, y, family)
    return np.geomspace(top, top * ratio, size)


def _cv_loss(X, y, beta, family):
    eta = X @ beta
    if family is GlmFamily.GAUSSIAN:
        return float(np.mean((y - eta) ** 2))
    return float(np.mean(np.logaddexp(0.0, eta) - y * eta))


def fit_lasso_cd(dataset: Dataset, family, lambda_grid=None, cv_folds: int = 5, seed: int = 0):
    """Lasso with the penalty chosen by K-fold cross-validation.

    Fold membership is a seeded permutation, so the result is
    deterministic given ``seed``. Returns ``(coefficients, chosen_lambda)``.
    """
    family = GlmFamily.parse(family)
    X, y = dataset.X, dataset.y
    n = X.shape[0]
    if lambda_grid is None:
        lambda_grid = default_grid(X, y, family)
    grid = np.sort(np.asarray(lambda_grid, dtype=float).reshape(-1))[::-1]
    if grid.size == 0 or np.any(grid <= 0) or not np.all(np.isfinite(grid)):
        raise BadGrid("lambda grid must be a nonempty set of positive values")
    if not 2 <= cv_folds <= n:
        raise BadFolds(f"cv_folds must be in 2..n={n}, got {cv_folds}")
    rng = np.random.Generator(np.random.Philox(seed))
    fold = rng.permutation(n) % cv_folds
    losses = np.zeros(grid.size)
    for f in range(cv_folds):
        train, test = fold != f, fold == f
        beta = None
        for i, lam in enumerate(grid):
            beta, _ = lasso_cd(X[train], y[train], lam, family, beta)
            losses[i] += _cv_loss(X[test], y[test], beta, family) / cv_folds
    best = int(np.argmin(losses))
    beta = None
    for lam in grid[:best + 1]:
        beta, _ = lasso_cd(X, y, lam, family, beta)
    return beta, float(grid[best])
