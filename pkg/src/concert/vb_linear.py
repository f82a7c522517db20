"""CAVI for the Gaussian-likelihood transfer model with inverse-Gamma noise.

Slab variances are scaled by each dataset's own noise variance: the target
slab is ``N(0, eta^2 s2_0)`` and source ``k``'s slab is
``N(beta0_j, tau_k^2 s2_k)``. Every block update below is the exact
maximizer of the ELBO with all other blocks held fixed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import digamma, gammaln

from . import _cavi
from ._cavi import FitOptions, Workspace, ridge, slab_terms
from .errors import NotGaussian
from .model import GlmFamily, MultiSourceProblem, PriorSpec, VariationalState, coefficient_moments, make_result


@dataclass
class LinearFitOptions(FitOptions):
    """Options for :func:`fit_linear`.

    ``known_noise`` fixes the noise variance of every dataset (length
    ``K+1``) instead of fitting inverse-Gamma factors.
    """

    known_noise: Optional[tuple] = None


def _require_gaussian(problem: MultiSourceProblem) -> None:
    if problem.family is not GlmFamily.GAUSSIAN:
        raise NotGaussian(f"expected a Gaussian problem, got {problem.family.value}")


def _set_noise(ws: Workspace, k: int, precision: float, logvar: float) -> None:
    r = ws.rows(k)
    ws.w[r] = precision
    ws.z[r] = precision * ws.y[r]
    ws.d[k] = precision * ws.colsq[k]
    ws.prior_scale[k] = precision
    ws.logvar[k] = logvar


def _sync_noise(state: VariationalState, ws: Workspace) -> None:
    for k in range(state.K + 1):
        if state.known_noise is not None:
            v = state.known_noise[k]
            _set_noise(ws, k, 1.0 / v, np.log(v))
        else:
            a, b = state.a[k], state.b[k]
            _set_noise(ws, k, a / b, np.log(b) - digamma(a))


def workspace(state: VariationalState, problem: MultiSourceProblem, priors: PriorSpec) -> Workspace:
    """Build the residual caches for ``state`` (``O(Np)``)."""
    _require_gaussian(problem)
    priors.check(problem)
    ws = Workspace(problem, priors, state)
    _sync_noise(state, ws)
    return ws


def initial_state(problem: MultiSourceProblem, priors: PriorSpec, options: LinearFitOptions) -> VariationalState:
    K, p = problem.K, problem.p
    state = _cavi.new_state(K, p, options.intercept)
    slab_var = priors.slab_var()
    centres = []
    for k, d in enumerate(problem.datasets):
        centre = float(d.y.mean()) if (options.intercept and d.n) else 0.0
        centres.append(centre)
        if options.init == "ridge":
            state.mu[k] = ridge(d.X, d.y - centre, d.n / slab_var[k])
        else:
            state.gamma[k] = priors.q0 if k == 0 else priors.qk[k - 1]
    if options.intercept:
        state.intercept_mean[:] = centres
    if options.known_noise is not None:
        noise = np.asarray(options.known_noise, dtype=float).reshape(-1)
        if noise.size != K + 1 or np.any(noise <= 0):
            raise ValueError("known_noise needs K+1 positive variances")
        state.known_noise = noise
        precision = 1.0 / noise
    else:
        # each dataset's own fit, not the gamma-mixed predictor: a source's
        # mixed residual carries its whole departure from the target, and
        # a noise start that large lets the noise absorb that departure
        if options.init == "ridge":
            fitted = [d.X @ state.mu[k] for k, d in enumerate(problem.datasets)]
        else:
            fitted = [np.zeros(d.n) for d in problem.datasets]
        resid = np.array([np.sum((d.y - centres[k] - fitted[k]) ** 2) for k, d in enumerate(problem.datasets)])
        n = np.array([d.n for d in problem.datasets])
        state.a = priors.a0 + 0.5 * n
        state.b = priors.b0 + 0.5 * resid
        precision = state.a / state.b
    colsq = np.array([np.sum(d.X ** 2, axis=0) for d in problem.datasets]).reshape(K + 1, p)
    state.sigma = np.sqrt(1.0 / (precision[:, None] * (colsq + 1.0 / slab_var[:, None])))
    if options.intercept:
        state.intercept_var[:] = [1.0 / (precision[k] * max(d.n, 1)) for k, d in enumerate(problem.datasets)]
    return state


def update_target_coordinate(state, problem, priors, j, workspace_=None):
    """Replace the target's ``(gamma, mu, sigma)`` at coordinate ``j`` by its block maximizer."""
    ws = workspace_ if workspace_ is not None else workspace(state, problem, priors)
    _cavi.target_update(int(j), *ws.kernel_args(state))
    return state


def update_source_coordinate(state, problem, priors, k, j, workspace_=None):
    """Block maximizer for source ``k`` (``1 <= k <= K``) at coordinate ``j``."""
    if not 1 <= k <= state.K:
        raise IndexError(f"source index must be in 1..{state.K}")
    ws = workspace_ if workspace_ is not None else workspace(state, problem, priors)
    _cavi.source_update(int(k), int(j), *ws.kernel_args(state))
    return state


def expected_sq_residual(state: VariationalState, ws: Workspace) -> np.ndarray:
    """``E_Q ||y_k - X_k b_k||^2`` for every dataset."""
    mean, second = coefficient_moments(state)
    var = np.maximum(second - mean * mean, 0.0)
    out = np.empty(state.K + 1)
    for k in range(state.K + 1):
        r = ws.rows(k)
        res = ws.y[r] - ws.lin[r]
        out[k] = res @ res + ws.colsq[k] @ var[k] + ws.n[k] * ws.icpt_var[k]
    return out


def update_noise(state, problem, priors, k, workspace_=None):
    """Inverse-Gamma block maximizer for dataset ``k``'s noise variance.

    The shape gains half the expected number of slab coordinates and the
    rate half the slab quadratic, because slab variances carry the noise
    variance as a factor. No-op when the noise is fixed.
    """
    if state.known_noise is not None:
        return state
    ws = workspace_ if workspace_ is not None else workspace(state, problem, priors)
    _update_noise_block(state, ws, priors, [k])
    return state


def _update_noise_block(state, ws, priors, ks):
    ess = expected_sq_residual(state, ws)
    count, quad, _ = slab_terms(state, ws.slab_var)
    for k in ks:
        state.a[k] = priors.a0 + 0.5 * ws.n[k] + 0.5 * count[k]
        state.b[k] = priors.b0 + 0.5 * ess[k] + 0.5 * quad[k]
        _set_noise(ws, k, state.a[k] / state.b[k], np.log(state.b[k]) - digamma(state.a[k]))


def elbo_linear(state, problem, priors, workspace_=None) -> float:
    """Evidence lower bound, including all normalizing constants."""
    ws = workspace_ if workspace_ is not None else workspace(state, problem, priors)
    ess = expected_sq_residual(state, ws)
    n = ws.n
    loglik = -0.5 * n * np.log(2.0 * np.pi) - 0.5 * n * ws.logvar - 0.5 * ws.prior_scale * ess
    total = float(np.sum(loglik))
    if state.known_noise is None:
        a0, b0 = priors.a0, priors.b0
        a, b = state.a, state.b
        elogv = ws.logvar
        eprec = ws.prior_scale
        log_prior = a0 * np.log(b0) - gammaln(a0) - (a0 + 1.0) * elogv - b0 * eprec
        log_q = a * np.log(b) - gammaln(a) - (a + 1.0) * elogv - a
        total += float(np.sum(log_prior - log_q))
    total -= _cavi.prior_kl(state, ws, priors)
    total += _cavi.intercept_entropy(ws)
    return total


def fit_linear(problem: MultiSourceProblem, priors: Optional[PriorSpec] = None,
               options: Optional[LinearFitOptions] = None, scaling=None, state=None):
    """Fit the Gaussian transfer model by coordinate-ascent VI.

    Each sweep updates target coordinates, then every source's
    coordinates, then all noise blocks. Returns a :class:`FitResult`;
    ``converged`` is false (with a :class:`DidNotConverge` warning) if
    ``max_sweeps`` ran out first.
    """
    _require_gaussian(problem)
    priors = priors if priors is not None else PriorSpec.default(problem.p, problem.K)
    options = options if options is not None else LinearFitOptions()
    priors.check(problem)
    if state is None:
        state = initial_state(problem, priors, options)
    ws = workspace(state, problem, priors)
    all_sets = list(range(problem.K + 1))

    def nuisance(st, w):
        if st.known_noise is None:
            _update_noise_block(st, w, priors, all_sets)

    def objective(st, w):
        return elbo_linear(st, problem, priors, w)

    trace, converged, sweeps = _cavi.run_sweeps(state, ws, options, nuisance, objective)
    _cavi.warn_not_converged(converged, sweeps)
    return make_result(state, trace, converged, sweeps, GlmFamily.GAUSSIAN, options.threshold, scaling)
