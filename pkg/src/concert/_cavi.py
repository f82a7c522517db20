"""Coordinate-ascent machinery shared by the Gaussian and logistic engines.

Both likelihoods are handled through one quadratic form per observation,
``z_i * x_i'b - w_i * (x_i'b)**2 / 2``: for Gaussian data ``w_i`` is the
expected noise precision and ``z_i = w_i * y_i``; under Polya-Gamma
augmentation ``w_i = E[omega_i]`` and ``z_i = y_i - 1/2``. The slab priors
enter through a per-dataset precision multiplier (``prior_scale``: expected
noise precision for Gaussian data, 1 for logistic) and the expected log
noise variance (``logvar``).

All datasets are row-stacked into one Fortran-ordered design so that a
column slice is contiguous; ``offs[k]:offs[k+1]`` are dataset ``k``'s rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .model import GAMMA_EPS, VariationalState, coefficient_moments


@numba.njit(cache=True)
def _expit(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@numba.njit(cache=True)
def _clip_gamma(g):
    return min(max(g, GAMMA_EPS), 1.0 - GAMMA_EPS)


@numba.njit(cache=True)
def _partial_fit(X, j, lo, hi, z, w, lin):
    r = 0.0
    for i in range(lo, hi):
        r += X[i, j] * (z[i] - w[i] * lin[i])
    return r


@numba.njit(cache=True)
def target_update(j, X, offs, z, w, lin, d, gamma, mu, sigma,
                  prior_scale, logvar, logit_q, slab_var):
    n_sets = gamma.shape[0]
    m0_old = gamma[0, j] * mu[0, j]
    A = prior_scale[0] / slab_var[0]
    B = 0.0
    for k in range(n_sets):
        if k == 0:
            mk = m0_old
        else:
            mk = gamma[k, j] * mu[k, j] + (1.0 - gamma[k, j]) * m0_old
        R = _partial_fit(X, j, offs[k], offs[k + 1], z, w, lin) + d[k, j] * mk
        if k == 0:
            A += d[0, j]
            B += R
        else:
            gk = gamma[k, j]
            prec = prior_scale[k] / slab_var[k]
            A += (1.0 - gk) * d[k, j] + gk * prec
            B += (1.0 - gk) * R + gk * prec * mu[k, j]
    m = B / A
    logit = logit_q[0] + 0.5 * B * m - 0.5 * math.log(A * slab_var[0]) - 0.5 * logvar[0]
    g = _clip_gamma(_expit(logit))
    gamma[0, j] = g
    mu[0, j] = m
    sigma[0, j] = math.sqrt(1.0 / A)
    delta = g * m - m0_old
    for k in range(n_sets):
        coef = delta if k == 0 else (1.0 - gamma[k, j]) * delta
        if coef != 0.0:
            for i in range(offs[k], offs[k + 1]):
                lin[i] += X[i, j] * coef


@numba.njit(cache=True)
def source_update(k, j, X, offs, z, w, lin, d, gamma, mu, sigma,
                  prior_scale, logvar, logit_q, slab_var):
    m0 = gamma[0, j] * mu[0, j]
    M0 = gamma[0, j] * (mu[0, j] ** 2 + sigma[0, j] ** 2)
    mk_old = gamma[k, j] * mu[k, j] + (1.0 - gamma[k, j]) * m0
    lo = offs[k]
    hi = offs[k + 1]
    R = _partial_fit(X, j, lo, hi, z, w, lin) + d[k, j] * mk_old
    prec = prior_scale[k] / slab_var[k]
    A = d[k, j] + prec
    B = R + prec * m0
    m = B / A
    slab_on = 0.5 * B * m - 0.5 * prec * M0 - 0.5 * math.log(A * slab_var[k]) - 0.5 * logvar[k]
    slab_off = -0.5 * d[k, j] * M0 + R * m0
    g = _clip_gamma(_expit(logit_q[k] + slab_on - slab_off))
    gamma[k, j] = g
    mu[k, j] = m
    sigma[k, j] = math.sqrt(1.0 / A)
    delta = g * m + (1.0 - g) * m0 - mk_old
    if delta != 0.0:
        for i in range(lo, hi):
            lin[i] += X[i, j] * delta


@numba.njit(cache=True)
def intercept_update(k, offs, z, w, lin, icpt_mean, icpt_var):
    lo = offs[k]
    hi = offs[k + 1]
    if hi == lo:
        return
    wsum = 0.0
    r = 0.0
    for i in range(lo, hi):
        wsum += w[i]
        r += z[i] - w[i] * lin[i]
    old = icpt_mean[k]
    new = old + r / wsum
    icpt_mean[k] = new
    icpt_var[k] = 1.0 / wsum
    for i in range(lo, hi):
        lin[i] += new - old


@numba.njit(cache=True)
def sweep_coefficients(target_order, source_order, use_intercept, X, offs, z, w, lin, d,
                       gamma, mu, sigma, prior_scale, logvar, logit_q, slab_var,
                       icpt_mean, icpt_var):
    n_sets = gamma.shape[0]
    if use_intercept:
        for k in range(n_sets):
            intercept_update(k, offs, z, w, lin, icpt_mean, icpt_var)
    for j in target_order:
        target_update(j, X, offs, z, w, lin, d, gamma, mu, sigma,
                      prior_scale, logvar, logit_q, slab_var)
    for k in range(1, n_sets):
        for j in source_order[k - 1]:
            source_update(k, j, X, offs, z, w, lin, d, gamma, mu, sigma,
                          prior_scale, logvar, logit_q, slab_var)


@dataclass
class FitOptions:
    """Stopping rule, initialization and sweep-order controls.

    ``init`` is ``"ridge"`` (warm start) or ``"prior"``; ``sweep_order`` is
    ``"fixed"`` or ``"permuted"`` (a fresh coordinate order each sweep,
    drawn from ``seed``). A positive ``param_tol`` additionally requires
    the largest change in any ``(gamma, mu, sigma)`` over a sweep to fall
    below it, for solves tighter than the ELBO's floating-point resolution.
    """

    max_sweeps: int = 500
    rel_tol: float = 1e-6
    param_tol: float = 0.0
    init: str = "ridge"
    seed: int = 0
    sweep_order: str = "fixed"
    intercept: bool = False
    threshold: float = 0.5

    def __post_init__(self):
        if int(self.max_sweeps) < 1:
            raise ValueError("max_sweeps must be at least 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if not self.param_tol >= 0:
            raise ValueError("param_tol must be nonnegative")
        if self.init not in ("ridge", "prior"):
            raise ValueError(f"init must be 'ridge' or 'prior', got {self.init!r}")
        if self.sweep_order not in ("fixed", "permuted"):
            raise ValueError(f"sweep_order must be 'fixed' or 'permuted', got {self.sweep_order!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


class Workspace:
    """Row-stacked data plus caches that must track the variational state."""

    def __init__(self, problem, priors, state: VariationalState):
        datasets = problem.datasets
        p = problem.p
        self.n = np.array([d.n for d in datasets], dtype=np.int64)
        self.offs = np.concatenate(([0], np.cumsum(self.n))).astype(np.int64)
        self.X = np.asfortranarray(np.vstack([d.X for d in datasets]).reshape(-1, p))
        self.y = np.concatenate([d.y for d in datasets])
        self.Xsq = self.X * self.X
        self.colsq = np.array([self.Xsq[self.rows(k)].sum(axis=0) for k in range(len(datasets))])
        self.logit_q = priors.logit_q()
        self.slab_var = priors.slab_var()
        n_sets = len(datasets)
        self.prior_scale = np.ones(n_sets)
        self.logvar = np.zeros(n_sets)
        self.w = np.ones(self.y.size)
        self.z = self.y.copy()
        self.d = self.colsq.copy()
        self.use_intercept = state.intercept_mean is not None
        if self.use_intercept:
            self.icpt_mean = state.intercept_mean
            self.icpt_var = state.intercept_var
        else:
            self.icpt_mean = np.zeros(n_sets)
            self.icpt_var = np.zeros(n_sets)
        self.lin = np.zeros(self.y.size)
        self.refresh_linear(state)

    def rows(self, k: int) -> slice:
        return slice(self.offs[k], self.offs[k + 1])

    def refresh_linear(self, state: VariationalState) -> None:
        mean, _ = coefficient_moments(state)
        for k in range(len(self.n)):
            r = self.rows(k)
            self.lin[r] = self.X[r] @ mean[k] + self.icpt_mean[k]

    def kernel_args(self, state: VariationalState):
        return (self.X, self.offs, self.z, self.w, self.lin, self.d,
                state.gamma, state.mu, state.sigma,
                self.prior_scale, self.logvar, self.logit_q, self.slab_var)

    def expected_sq_linear(self, k: int, variance: np.ndarray) -> np.ndarray:
        """Per-row ``E[(x_i'b + intercept)**2]`` for dataset ``k``."""
        r = self.rows(k)
        return self.lin[r] ** 2 + self.Xsq[r] @ variance[k] + self.icpt_var[k]


def slab_terms(state: VariationalState, slab_var: np.ndarray):
    """Per-dataset expected slab count and slab quadratic ``E[(b - centre)^2] / var``.

    The slab of source ``k`` is centred at the target coefficient, so its
    quadratic includes the target's first and second moments.
    """
    g, mu, s = state.gamma, state.mu, state.sigma
    m0 = g[0] * mu[0]
    M0 = g[0] * (mu[0] ** 2 + s[0] ** 2)
    quad = np.empty_like(mu)
    quad[0] = (mu[0] ** 2 + s[0] ** 2) / slab_var[0]
    quad[1:] = (s[1:] ** 2 + mu[1:] ** 2 - 2.0 * mu[1:] * m0 + M0) / slab_var[1:, None]
    return g.sum(axis=1), (g * quad).sum(axis=1), quad


def prior_kl(state: VariationalState, ws: Workspace, priors) -> float:
    """KL divergence of the coefficient/indicator factors from the prior."""
    g = state.gamma
    q = np.array((priors.q0, *priors.qk))[:, None]
    bern = g * (np.log(g) - np.log(q)) + (1.0 - g) * (np.log1p(-g) - np.log1p(-q))
    _, _, quad = slab_terms(state, ws.slab_var)
    slab = 0.5 * (
        ws.prior_scale[:, None] * quad - 1.0 + np.log(ws.slab_var)[:, None]
        + ws.logvar[:, None] - 2.0 * np.log(state.sigma)
    )
    return float(np.sum(bern) + np.sum(g * slab))


def intercept_entropy(ws: Workspace) -> float:
    if not ws.use_intercept:
        return 0.0
    v = ws.icpt_var[ws.n > 0]
    return float(0.5 * np.sum(np.log(2.0 * np.pi * np.e * v)))


def run_sweeps(state, ws, options, update_nuisance, elbo):
    """Iterate full CAVI sweeps until the relative ELBO change drops below ``rel_tol``.

    Returns ``(trace, converged, sweeps)``.
    """
    K, p = state.K, state.p
    target_order = np.arange(p, dtype=np.int64)
    source_order = np.tile(target_order, (K, 1)).reshape(K, p)
    rng = np.random.Generator(np.random.Philox(options.seed)) if options.sweep_order == "permuted" else None
    trace = []
    converged = False
    sweeps = 0
    for sweeps in range(1, int(options.max_sweeps) + 1):
        if rng is not None:
            target_order = rng.permutation(p).astype(np.int64)
            source_order = np.array([rng.permutation(p) for _ in range(K)], dtype=np.int64).reshape(K, p)
        if options.param_tol:
            before = np.concatenate([state.gamma, state.mu, state.sigma])
        sweep_coefficients(target_order, source_order, ws.use_intercept, *ws.kernel_args(state),
                           ws.icpt_mean, ws.icpt_var)
        update_nuisance(state, ws)
        value = elbo(state, ws)
        settled = not options.param_tol or np.max(
            np.abs(np.concatenate([state.gamma, state.mu, state.sigma]) - before)) <= options.param_tol
        if trace and settled and abs(value - trace[-1]) <= options.rel_tol * abs(trace[-1]):
            trace.append(value)
            converged = True
            break
        trace.append(value)
    return np.array(trace), converged, sweeps


def ridge(X: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Ridge solution ``(X'X + lam I)^{-1} X'y``; uses the dual form when ``p > n``."""
    n, p = X.shape
    if n == 0:
        return np.zeros(p)
    if p <= n:
        return np.linalg.solve(X.T @ X + lam * np.eye(p), X.T @ y)
    return X.T @ np.linalg.solve(X @ X.T + lam * np.eye(n), y)


def new_state(K: int, p: int, intercept: bool) -> VariationalState:
    shape = (K + 1, p)
    state = VariationalState(
        gamma=np.full(shape, 0.5), mu=np.zeros(shape), sigma=np.ones(shape)
    )
    if intercept:
        state.intercept_mean = np.zeros(K + 1)
        state.intercept_var = np.zeros(K + 1)
    return state


def warn_not_converged(converged: bool, sweeps: int) -> None:
    if not converged:
        import warnings

        from .errors import DidNotConverge

        warnings.warn(f"CAVI stopped after {sweeps} sweeps without meeting rel_tol", DidNotConverge, stacklevel=3)
