"""CAVI for the logistic transfer model via Polya-Gamma augmentation.

Each observation gets a latent ``omega ~ PG(1, 0)``; its variational factor
is ``PG(1, c)``. Conditionally on ``omega`` the likelihood is Gaussian in
the linear predictor, so the coefficient blocks reuse the Gaussian kernels
with weights ``E[omega]`` and pseudo-responses ``y - 1/2``. Slab variances
are ``eta^2`` and ``tau_k^2`` (no noise scale).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _cavi
from ._cavi import FitOptions, Workspace, slab_terms  # noqa: F401
from .errors import NegativeTilt, NotLogistic
from .model import GlmFamily, MultiSourceProblem, PriorSpec, VariationalState, coefficient_moments, make_result

PG_SERIES_CUTOFF = 1e-4
MAX_TILT = 1e3


@dataclass
class LogisticFitOptions(FitOptions):
    irls_steps: int = 5


def pg_mean(c):
    """Mean of ``PG(1, c)``: ``tanh(c/2) / (2c)``, with limit 1/4 at ``c = 0``.

    Below ``c = 1e-4`` the two-term series ``1/4 - c^2/48`` is used.
    Accepts scalars or arrays.
    """
    c = np.asarray(c, dtype=float)
    if np.any(c < 0) or np.any(np.isnan(c)):
        raise NegativeTilt("Polya-Gamma tilt must be nonnegative")
    small = c <= PG_SERIES_CUTOFF
    safe = np.where(small, 1.0, c)
    out = np.where(small, 0.25 - c * c / 48.0, np.tanh(0.5 * safe) / (2.0 * safe))
    return float(out) if out.ndim == 0 else out


def log_cosh_half(c):
    """``log cosh(c/2)`` without overflow."""
    h = 0.5 * np.asarray(c, dtype=float)
    return np.logaddexp(h, -h) - np.log(2.0)


def _require_logistic(problem: MultiSourceProblem) -> None:
    if problem.family is not GlmFamily.LOGISTIC:
        raise NotLogistic(f"expected a logistic problem, got {problem.family.value}")


def _set_tilts(state: VariationalState, ws: Workspace, k: int) -> None:
    r = ws.rows(k)
    w = pg_mean(state.c[k])
    ws.w[r] = w
    ws.d[k] = w @ ws.Xsq[r]


def workspace(state: VariationalState, problem: MultiSourceProblem, priors: PriorSpec) -> Workspace:
    _require_logistic(problem)
    priors.check(problem)
    ws = Workspace(problem, priors, state)
    ws.z[:] = ws.y - 0.5
    for k in range(state.K + 1):
        _set_tilts(state, ws, k)
    return ws


def _irls_ridge(X, y, lam, steps, damping=0.5):
    n, p = X.shape
    beta = np.zeros(p)
    if n == 0:
        return beta
    for _ in range(steps):
        eta = X @ beta
        prob = 1.0 / (1.0 + np.exp(-eta))
        W = prob * (1.0 - prob)
        grad = X.T @ (y - prob) - lam * beta
        H = (X.T * W) @ X + lam * np.eye(p)
        beta = beta + damping * np.linalg.solve(H, grad)
    return beta


def _expected_tilts(state: VariationalState, ws: Workspace) -> list:
    mean, second = coefficient_moments(state)
    var = np.maximum(second - mean * mean, 0.0)
    return [np.minimum(np.sqrt(ws.expected_sq_linear(k, var)), MAX_TILT) for k in range(state.K + 1)]


def initial_state(problem, priors, options) -> VariationalState:
    K, p = problem.K, problem.p
    state = _cavi.new_state(K, p, options.intercept)
    slab_var = priors.slab_var()
    for k, d in enumerate(problem.datasets):
        X = d.X
        if options.intercept:
            X = np.column_stack([X, np.ones(d.n)])
        if options.init == "ridge":
            beta = _irls_ridge(X, d.y, d.n / slab_var[k], options.irls_steps)
        else:
            beta = np.zeros(X.shape[1])
            state.gamma[k] = priors.q0 if k == 0 else priors.qk[k - 1]
        state.mu[k] = beta[:p]
        if options.intercept:
            state.intercept_mean[k] = beta[p]
            state.intercept_var[k] = 4.0 / max(d.n, 1)
    state.sigma = np.sqrt(slab_var)[:, None] * np.ones((1, p))
    state.c = [np.zeros(d.n) for d in problem.datasets]
    ws = Workspace(problem, priors, state)
    state.c = _expected_tilts(state, ws)
    ws = workspace(state, problem, priors)
    state.sigma = np.sqrt(1.0 / (ws.d + 1.0 / slab_var[:, None]))
    state.c = _expected_tilts(state, ws)
    return state


def update_pg(state, problem, k, i, workspace_=None, priors=None):
    """Set ``c_i`` of dataset ``k`` to ``sqrt(E[(x_i'b_k)^2])``."""
    ws = workspace_ if workspace_ is not None else workspace(
        state, problem, priors or PriorSpec.default(problem.p, problem.K))
    mean, second = coefficient_moments(state)
    var = np.maximum(second - mean * mean, 0.0)
    row = ws.offs[k] + i
    e2 = ws.lin[row] ** 2 + ws.Xsq[row] @ var[k] + ws.icpt_var[k]
    state.c[k][i] = min(np.sqrt(e2), MAX_TILT)
    _set_tilts(state, ws, k)
    return state


def update_all_pg(state, ws) -> None:
    state.c = _expected_tilts(state, ws)
    for k in range(state.K + 1):
        _set_tilts(state, ws, k)


def update_target_coordinate_logistic(state, problem, priors, j, workspace_=None):
    ws = workspace_ if workspace_ is not None else workspace(state, problem, priors)
    _cavi.target_update(int(j), *ws.kernel_args(state))
    return state


def update_source_coordinate_logistic(state, problem, priors, k, j, workspace_=None):
    if not 1 <= k <= state.K:
        raise IndexError(f"source index must be in 1..{state.K}")
    ws = workspace_ if workspace_ is not None else workspace(state, problem, priors)
    _cavi.source_update(int(k), int(j), *ws.kernel_args(state))
    return state


def elbo_logistic(state, problem, priors, workspace_=None) -> float:
    """ELBO of the augmented model.

    Per observation: ``-log 2 + kappa E[eta] - E[omega] E[eta^2] / 2``
    minus ``KL(PG(1,c) || PG(1,0)) = log cosh(c/2) - c^2 E[omega] / 2``.
    """
    ws = workspace_ if workspace_ is not None else workspace(state, problem, priors)
    mean, second = coefficient_moments(state)
    var = np.maximum(second - mean * mean, 0.0)
    total = 0.0
    for k in range(state.K + 1):
        r = ws.rows(k)
        c = state.c[k]
        w = ws.w[r]
        e2 = ws.expected_sq_linear(k, var)
        total += float(np.sum(
            -np.log(2.0) + ws.z[r] * ws.lin[r] - 0.5 * w * e2 - log_cosh_half(c) + 0.5 * c * c * w
        ))
    total -= _cavi.prior_kl(state, ws, priors)
    total += _cavi.intercept_entropy(ws)
    return total


def fit_logistic(problem: MultiSourceProblem, priors: Optional[PriorSpec] = None,
                 options: Optional[LogisticFitOptions] = None, scaling=None, state=None):
    """Fit the logistic transfer model; the Polya-Gamma tilts are refreshed once per sweep."""
    _require_logistic(problem)
    priors = priors if priors is not None else PriorSpec.default(problem.p, problem.K)
    options = options if options is not None else LogisticFitOptions()
    priors.check(problem)
    if state is None:
        state = initial_state(problem, priors, options)
    ws = workspace(state, problem, priors)

    def objective(st, w):
        return elbo_logistic(st, problem, priors, w)

    trace, converged, sweeps = _cavi.run_sweeps(state, ws, options, update_all_pg, objective)
    _cavi.warn_not_converged(converged, sweeps)
    return make_result(state, trace, converged, sweeps, GlmFamily.LOGISTIC, options.threshold, scaling)
