"""Ground-truth posteriors for small instances.

Two independent routes to the exact posterior of the transfer model:

* :func:`enumerate_posterior` sums over every spike/slab configuration
  ``(S, T_1, ..., T_K)`` with known noise variances. Each configuration is
  a linear-Gaussian model whose marginal likelihood is available in closed
  form.
* :func:`gibbs_sample` is a blocked Gibbs sampler over ``(Z_j, beta0_j)``,
  ``(I_kj, beta_kj)``, the noise variances, and (for logistic data)
  Polya-Gamma latents.

Neither shares code with the variational engines.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Union

import numba
import numpy as np
from scipy.special import logsumexp

from .errors import BadIterationCounts, NotGaussian, TooLarge
from .model import GlmFamily, MultiSourceProblem, PriorSpec

MAX_ENUMERATION_BITS = 12
PG_TERMS = 200


@dataclass
class ExactPosterior:
    model_probs: dict
    inclusion_probs: np.ndarray
    beta_mean: np.ndarray
    log_marginal: float
    beta_second: np.ndarray = None

    def map_model(self):
        """Most probable configuration as a ``(K+1, p)`` 0/1 array."""
        key = max(self.model_probs, key=self.model_probs.get)
        return np.array(key, dtype=int)


@dataclass
class GibbsSummary:
    inclusion_freq: np.ndarray
    beta_mean: np.ndarray
    beta_ci: np.ndarray
    n_kept: int
    seed: int
    noise_mean: np.ndarray = None


def _config_log_marginal(datasets, noise, S, T, eta2, tau2):
    """Log marginal likelihood, posterior mean and second moment of ``beta0_S``
    for one configuration."""
    n = [d.n for d in datasets]
    N = sum(n)
    offs = np.concatenate(([0], np.cumsum(n)))
    cols, prior_var = [], []
    for j in S:
        col = np.zeros(N)
        for k, d in enumerate(datasets):
            col[offs[k]:offs[k + 1]] = d.X[:, j]
        cols.append(col)
        prior_var.append(eta2 * noise[0])
    for k, Tk in enumerate(T, start=1):
        for j in Tk:
            col = np.zeros(N)
            col[offs[k]:offs[k + 1]] = datasets[k].X[:, j]
            cols.append(col)
            prior_var.append(tau2[k - 1] * noise[k])
    row_sd = np.concatenate([np.full(nk, math.sqrt(v)) for nk, v in zip(n, noise)])
    yw = np.concatenate([d.y for d in datasets]) / row_sd
    const = -0.5 * N * math.log(2 * math.pi) - 0.5 * float(np.dot(n, np.log(noise)))
    if not cols:
        return const - 0.5 * float(yw @ yw), np.zeros(0), np.zeros(0)
    M = np.column_stack(cols) / row_sd[:, None]
    D = np.array(prior_var)
    aug = np.vstack([M, np.diag(1.0 / np.sqrt(D))])
    rhs = np.concatenate([yw, np.zeros(D.size)])
    Q, R = np.linalg.qr(aug)
    qty = Q.T @ rhs
    theta = np.linalg.solve(R, qty)
    rss = float(rhs @ rhs - qty @ qty)
    logdet_P = 2.0 * float(np.sum(np.log(np.abs(np.diag(R)))))
    value = const - 0.5 * float(np.sum(np.log(D))) - 0.5 * logdet_P - 0.5 * rss
    # posterior covariance is (R'R)^-1, so its diagonal is the row norms of R^-1
    Rinv = np.linalg.solve(R, np.eye(R.shape[0]))
    var = np.sum(Rinv[:len(S)] ** 2, axis=1)
    return value, theta[:len(S)], var + theta[:len(S)] ** 2


def enumerate_posterior(problem: MultiSourceProblem, priors: PriorSpec, sigma_known) -> ExactPosterior:
    """Exact posterior by enumerating all ``2^((K+1)p)`` indicator configurations.

    ``sigma_known`` holds the K+1 noise *variances*. Keys of ``model_probs``
    are ``(K+1)``-tuples of 0/1 tuples (row 0 = target indicators ``Z``,
    row ``k`` = similarity indicators ``I^(k)``).
    """
    if problem.family is not GlmFamily.GAUSSIAN:
        raise NotGaussian("enumeration requires the Gaussian family")
    K, p = problem.K, problem.p
    if (K + 1) * p > MAX_ENUMERATION_BITS:
        raise TooLarge(f"(K+1)p = {(K + 1) * p} exceeds {MAX_ENUMERATION_BITS}")
    priors.check(problem)
    noise = np.asarray(sigma_known, dtype=float).reshape(-1)
    if noise.size == 1:
        noise = np.repeat(noise, K + 1)
    if noise.size != K + 1 or np.any(noise <= 0):
        raise ValueError("sigma_known must hold K+1 positive noise variances")
    q = np.array((priors.q0, *priors.qk))
    eta2 = priors.eta ** 2
    tau2 = np.array(priors.tauk) ** 2
    datasets = problem.datasets

    keys, logw, means, seconds = [], [], [], []
    for bits in itertools.product((0, 1), repeat=(K + 1) * p):
        grid = np.array(bits).reshape(K + 1, p)
        S = [j for j in range(p) if grid[0, j]]
        T = [[j for j in range(p) if grid[k, j]] for k in range(1, K + 1)]
        lml, mean_S, second_S = _config_log_marginal(datasets, noise, S, T, eta2, tau2)
        active = grid.sum(axis=1)
        log_prior = float(np.sum(active * np.log(q) + (p - active) * np.log1p(-q)))
        beta = np.zeros(p)
        beta[S] = mean_S
        sq = np.zeros(p)
        sq[S] = second_S
        keys.append(tuple(tuple(int(b) for b in row) for row in grid))
        logw.append(lml + log_prior)
        means.append(beta)
        seconds.append(sq)
    logw = np.array(logw)
    log_marginal = float(logsumexp(logw))
    probs = np.exp(logw - log_marginal)
    grids = np.array(keys, dtype=float)
    inclusion = np.tensordot(probs, grids, axes=1)
    beta_mean = probs @ np.array(means)
    beta_second = probs @ np.array(seconds)
    return ExactPosterior(dict(zip(keys, probs)), inclusion, beta_mean, log_marginal, beta_second)


@numba.njit(cache=True)
def _gibbs_sweep(G, Xty, noise, beta0, Z, bk, I, logit_q, eta2, tau2, u, nz):
    n_sets, p = G.shape[0], G.shape[1]
    idx = 0
    # effective coefficients of each dataset
    eff = np.empty((n_sets, p))
    for k in range(n_sets):
        for j in range(p):
            if k == 0 or I[k - 1, j] == 0:
                eff[k, j] = beta0[j]
            else:
                eff[k, j] = bk[k - 1, j]
    for j in range(p):
        A = G[0, j, j] / noise[0] + 1.0 / (eta2 * noise[0])
        B = 0.0
        for k in range(n_sets):
            r = Xty[k, j]
            for l in range(p):
                if l != j:
                    r -= G[k, j, l] * eff[k, l]
            if k == 0:
                B += r / noise[0]
            elif I[k - 1, j] == 0:
                A += G[k, j, j] / noise[k]
                B += r / noise[k]
            else:
                A += 1.0 / (tau2[k - 1] * noise[k])
                B += bk[k - 1, j] / (tau2[k - 1] * noise[k])
        log_odds = logit_q[0] + 0.5 * B * B / A - 0.5 * math.log(A * eta2 * noise[0])
        if u[idx] < 1.0 / (1.0 + math.exp(-log_odds)):
            Z[j] = 1
            beta0[j] = B / A + nz[idx] / math.sqrt(A)
        else:
            Z[j] = 0
            beta0[j] = 0.0
        idx += 1
        eff[0, j] = beta0[j]
        for k in range(1, n_sets):
            if I[k - 1, j] == 0:
                eff[k, j] = beta0[j]
    for k in range(1, n_sets):
        v = noise[k]
        t2 = tau2[k - 1]
        for j in range(p):
            r = Xty[k, j]
            for l in range(p):
                if l != j:
                    r -= G[k, j, l] * eff[k, l]
            b0 = beta0[j]
            A = G[k, j, j] / v + 1.0 / (t2 * v)
            B = r / v + b0 / (t2 * v)
            slab = 0.5 * B * B / A - 0.5 * b0 * b0 / (t2 * v) - 0.5 * math.log(A * t2 * v)
            spike = -0.5 * G[k, j, j] * b0 * b0 / v + r * b0 / v
            log_odds = logit_q[k] + slab - spike
            if u[idx] < 1.0 / (1.0 + math.exp(-log_odds)):
                I[k - 1, j] = 1
                bk[k - 1, j] = B / A + nz[idx] / math.sqrt(A)
            else:
                I[k - 1, j] = 0
                bk[k - 1, j] = b0
            eff[k, j] = bk[k - 1, j]
            idx += 1


@numba.njit(cache=True)
def _pg_sum(c, g):
    n, terms = g.shape
    out = np.empty(n)
    for i in range(n):
        a2 = (c[i] / (2.0 * np.pi)) ** 2
        head = 0.0
        head_mean = 0.0
        for k in range(terms):
            inv = 1.0 / ((k + 0.5) ** 2 + a2)
            head += g[i, k] * inv
            head_mean += inv
        if c[i] < 1e-4:
            full = 0.25 - c[i] * c[i] / 48.0
        else:
            full = math.tanh(c[i] / 2.0) / (2.0 * c[i])
        out[i] = (head - head_mean) / (2.0 * np.pi ** 2) + full
    return out


def sample_pg(c, rng, terms: int = PG_TERMS) -> np.ndarray:
    """Approximate ``PG(1, c)`` draws from the truncated sum-of-gammas representation.

    The first ``terms`` exponential terms are sampled; the remainder is
    replaced by its expectation so the draw has the exact mean.
    """
    c = np.abs(np.asarray(c, dtype=float)).reshape(-1)
    return _pg_sum(c, rng.standard_exponential((c.size, terms)))


def gibbs_sample(problem: MultiSourceProblem, priors: PriorSpec,
                 noise: Union[str, np.ndarray, list] = "ig", n_iter: int = 10_000,
                 burn_in: int = 1_000, seed: int = 0) -> GibbsSummary:
    """Run one Gibbs chain and summarize it.

    ``noise`` is either ``"ig"`` (inverse-Gamma noise variances sampled
    under the prior in ``priors``) or ``K+1`` known variances; it is
    ignored for logistic problems. The 95% intervals are equal-tailed
    quantiles of the target coefficients, widened if necessary to contain
    the posterior mean.
    """
    if not (0 <= burn_in < n_iter):
        raise BadIterationCounts(f"need n_iter > burn_in >= 0, got n_iter={n_iter}, burn_in={burn_in}")
    priors.check(problem)
    K, p = problem.K, problem.p
    datasets = problem.datasets
    logistic = problem.family is GlmFamily.LOGISTIC
    rng = np.random.Generator(np.random.Philox(seed))

    sample_noise = False
    if logistic:
        v = np.ones(K + 1)
    elif isinstance(noise, str):
        if noise != "ig":
            raise ValueError("noise must be 'ig' or a sequence of variances")
        sample_noise = True
        v = np.array([float(np.var(d.y)) if d.n > 1 else 1.0 for d in datasets])
        v = np.maximum(v, 1e-6)
    else:
        v = np.asarray(noise, dtype=float).reshape(-1)
        if v.size == 1:
            v = np.repeat(v, K + 1)
        if v.size != K + 1 or np.any(v <= 0):
            raise ValueError("known noise needs K+1 positive variances")

    G = np.stack([d.X.T @ d.X for d in datasets]).reshape(K + 1, p, p)
    if logistic:
        Xty = np.stack([d.X.T @ (d.y - 0.5) for d in datasets]).reshape(K + 1, p)
    else:
        Xty = np.stack([d.X.T @ d.y for d in datasets]).reshape(K + 1, p)

    logit_q = np.log(np.array((priors.q0, *priors.qk))) - np.log1p(-np.array((priors.q0, *priors.qk)))
    eta2 = priors.eta ** 2
    tau2 = np.array(priors.tauk, dtype=float) ** 2
    beta0 = np.zeros(p)
    Z = np.zeros(p, dtype=np.int64)
    bk = np.zeros((K, p))
    I = np.zeros((K, p), dtype=np.int64)

    n_kept = n_iter - burn_in
    z_count = np.zeros(p)
    i_count = np.zeros((K, p))
    beta_draws = np.empty((n_kept, p))
    noise_sum = np.zeros(K + 1)
    per_iter = (K + 1) * p
    chunk = max(1, min(n_iter, 4096))
    u = nz = None

    for it in range(n_iter):
        pos = it % chunk
        if pos == 0:
            u = rng.random((chunk, per_iter))
            nz = rng.standard_normal((chunk, per_iter))
        if logistic:
            for k, d in enumerate(datasets):
                coef = beta0 if k == 0 else np.where(I[k - 1] == 1, bk[k - 1], beta0)
                omega = sample_pg(d.X @ coef, rng)
                G[k] = (d.X.T * omega) @ d.X
        _gibbs_sweep(G, Xty, v, beta0, Z, bk, I, logit_q, eta2, tau2, u[pos], nz[pos])
        if sample_noise:
            for k, d in enumerate(datasets):
                coef = beta0 if k == 0 else np.where(I[k - 1] == 1, bk[k - 1], beta0)
                res = d.y - d.X @ coef
                if k == 0:
                    slab_n = Z.sum()
                    quad = float(np.sum(beta0[Z == 1] ** 2)) / eta2
                else:
                    on = I[k - 1] == 1
                    slab_n = on.sum()
                    quad = float(np.sum((bk[k - 1, on] - beta0[on]) ** 2)) / tau2[k - 1]
                shape = priors.a0 + 0.5 * d.n + 0.5 * slab_n
                rate = priors.b0 + 0.5 * float(res @ res) + 0.5 * quad
                v[k] = rate / rng.gamma(shape)
        if it >= burn_in:
            z_count += Z
            i_count += I
            beta_draws[it - burn_in] = beta0
            noise_sum += v

    freq = np.vstack([z_count, i_count]) / n_kept
    mean = beta_draws.mean(axis=0)
    lo, hi = np.quantile(beta_draws, [0.025, 0.975], axis=0)
    ci = np.column_stack([np.minimum(lo, mean), np.maximum(hi, mean)])
    return GibbsSummary(freq, mean, ci, n_kept, seed, noise_sum / n_kept)
