"""Domain types, prior specification and variational moment helpers.

Index conventions: datasets are indexed ``k = 0..K`` with ``k = 0`` the
target; coordinates are 0-based column indices ``j = 0..p-1``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    BadResponse,
    BadThreshold,
    DimensionMismatch,
    IndexOutOfRange,
    NonFinite,
    ZeroVarianceColumn,
)

GAMMA_EPS = 1e-10


class GlmFamily(str, enum.Enum):
    GAUSSIAN = "gaussian"
    LOGISTIC = "logistic"

    def psi(self, u):
        """Cumulant function: ``u**2/2`` (Gaussian) or ``log(1+e^u)`` (logistic)."""
        u = np.asarray(u, dtype=float)
        if self is GlmFamily.GAUSSIAN:
            return 0.5 * u * u
        return np.logaddexp(0.0, u)

    @classmethod
    def parse(cls, value) -> "GlmFamily":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown family {value!r}; expected 'gaussian' or 'logistic'") from None


@dataclass(frozen=True, eq=False)
class Dataset:
    """One regression dataset: ``X`` is ``(n, p)``, ``y`` has length ``n``.

    ``n = 0`` is allowed (a dataset carrying no likelihood information).
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if y.size == X.size else X.reshape(1, -1)
        if X.ndim != 2:
            raise DimensionMismatch(f"X must be 2-dimensional, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"X has {X.shape[0]} rows but y has length {y.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise NonFinite("dataset contains NaN or infinite values")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True, eq=False)
class MultiSourceProblem:
    target: Dataset
    sources: tuple
    family: GlmFamily
    p: int

    @property
    def K(self) -> int:
        return len(self.sources)

    @property
    def datasets(self) -> tuple:
        return (self.target,) + tuple(self.sources)

    @property
    def N(self) -> int:
        return sum(d.n for d in self.datasets)

    def with_sources(self, sources: Sequence[Dataset]) -> "MultiSourceProblem":
        return validate_problem(self.target, sources, self.family)


def validate_problem(target: Dataset, sources: Sequence[Dataset], family) -> MultiSourceProblem:
    """Check dimensions, finiteness and the response domain, and bundle the data."""
    family = GlmFamily.parse(family)
    datasets = [target, *sources]
    datasets = [d if isinstance(d, Dataset) else Dataset(*d) for d in datasets]
    p = datasets[0].p
    for k, d in enumerate(datasets):
        if d.p != p:
            raise DimensionMismatch(f"dataset {k} has {d.p} columns, target has {p}")
        if family is GlmFamily.LOGISTIC:
            bad = np.flatnonzero((d.y != 0.0) & (d.y != 1.0))
            if bad.size:
                raise BadResponse(
                    f"dataset {k}: logistic responses must be 0 or 1 "
                    f"(row {bad[0]} has {d.y[bad[0]]!r})"
                )
    return MultiSourceProblem(datasets[0], tuple(datasets[1:]), family, p)


@dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters of the (conditional) spike-and-slab prior.

    ``q0``/``eta`` govern the target spike-and-slab, ``qk``/``tauk`` the
    per-source conditional priors, ``a0``/``b0`` the inverse-Gamma prior on
    each Gaussian noise variance.
    """

    q0: float
    eta: float = 10.0
    qk: tuple = ()
    tauk: tuple = ()
    a0: float = 2.0
    b0: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "qk", tuple(float(q) for q in self.qk))
        object.__setattr__(self, "tauk", tuple(float(t) for t in self.tauk))
        if len(self.qk) != len(self.tauk):
            raise ValueError("qk and tauk must have the same length")
        for q in (self.q0, *self.qk):
            if not 0.0 < q < 1.0:
                raise ValueError(f"prior inclusion probabilities must lie in (0, 1), got {q}")
        for s in (self.eta, *self.tauk, self.a0, self.b0):
            if not (s > 0.0 and np.isfinite(s)):
                raise ValueError(f"prior scales must be positive and finite, got {s}")

    @property
    def K(self) -> int:
        return len(self.qk)

    @classmethod
    def default(cls, p: int, K: int, eta=10.0, tau=10.0, a0=2.0, b0=1.0) -> "PriorSpec":
        """Inclusion probabilities of order ``1/p``, slab scales of 10."""
        q = min(1.0 / p, 0.5)
        return cls(q0=q, eta=eta, qk=(q,) * K, tauk=(tau,) * K, a0=a0, b0=b0)

    def logit_q(self) -> np.ndarray:
        q = np.array((self.q0, *self.qk))
        return np.log(q) - np.log1p(-q)

    def slab_var(self) -> np.ndarray:
        return np.array((self.eta, *self.tauk)) ** 2

    def check(self, problem: MultiSourceProblem) -> None:
        if self.K != problem.K:
            raise DimensionMismatch(
                f"prior has {self.K} source entries but problem has {problem.K} sources"
            )


@dataclass(frozen=True)
class ScalingRecord:
    """Per-dataset column factors: ``X_std = X / factors[k]``.

    Columns listed in ``dropped`` were removed before fitting and map back
    to a zero coefficient.
    """

    factors: np.ndarray
    dropped: tuple = ()
    p_original: int = 0

    def to_original(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        kept = np.setdiff1d(np.arange(self.p_original), self.dropped)
        out = np.zeros(self.p_original)
        out[kept] = beta / self.factors[0]
        return out


def standardize(problem: MultiSourceProblem, on_constant: str = "raise"):
    """Rescale every column so its squared norm equals the dataset's row count.

    Returns ``(standardized_problem, ScalingRecord)``. A column that is
    constant in any dataset raises :class:`ZeroVarianceColumn`, unless
    ``on_constant="drop"`` in which case it is removed from all datasets.
    """
    if on_constant not in ("raise", "drop"):
        raise ValueError("on_constant must be 'raise' or 'drop'")
    p = problem.p
    constant = set()
    for k, d in enumerate(problem.datasets):
        if d.n == 0:
            continue
        flat = np.flatnonzero(np.ptp(d.X, axis=0) == 0.0)
        if flat.size and on_constant == "raise":
            raise ZeroVarianceColumn(int(flat[0]), k)
        constant.update(int(j) for j in flat)
    dropped = tuple(sorted(constant))
    kept = np.setdiff1d(np.arange(p), dropped)
    factors = np.ones((problem.K + 1, kept.size))
    scaled = []
    for k, d in enumerate(problem.datasets):
        X = d.X[:, kept]
        if d.n:
            factors[k] = np.sqrt(np.sum(X * X, axis=0) / d.n)
        scaled.append(Dataset(X / factors[k], d.y))
    new = validate_problem(scaled[0], scaled[1:], problem.family)
    return new, ScalingRecord(factors, dropped, p)


class CoordinateVariational(NamedTuple):
    gamma: float
    mu: float
    sigma: float


@dataclass
class VariationalState:
    """Variational parameters for all ``K+1`` datasets.

    ``gamma``, ``mu``, ``sigma`` are ``(K+1, p)`` arrays (row 0 = target).
    Gaussian fits carry inverse-Gamma parameters ``a``/``b`` per dataset (or
    fixed ``known_noise`` variances); logistic fits carry one tilting
    constant per observation in ``c``.
    """

    gamma: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    a: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    c: Optional[list] = None
    known_noise: Optional[np.ndarray] = None
    intercept_mean: Optional[np.ndarray] = None
    intercept_var: Optional[np.ndarray] = None

    @property
    def K(self) -> int:
        return self.gamma.shape[0] - 1

    @property
    def p(self) -> int:
        return self.gamma.shape[1]

    def coord(self, k: int, j: int) -> CoordinateVariational:
        _check_index(self, k, j)
        return CoordinateVariational(
            float(self.gamma[k, j]), float(self.mu[k, j]), float(self.sigma[k, j])
        )

    def copy(self) -> "VariationalState":
        def cp(x):
            if x is None:
                return None
            if isinstance(x, list):
                return [np.array(v) for v in x]
            return np.array(x)

        return VariationalState(
            cp(self.gamma), cp(self.mu), cp(self.sigma), cp(self.a), cp(self.b),
            cp(self.c), cp(self.known_noise), cp(self.intercept_mean), cp(self.intercept_var),
        )


def _check_index(state: VariationalState, k: int, j: int) -> None:
    if not (0 <= k <= state.K):
        raise IndexOutOfRange(f"dataset index {k} outside 0..{state.K}")
    if not (0 <= j < state.p):
        raise IndexOutOfRange(f"coordinate index {j} outside 0..{state.p - 1}")


def coefficient_moments(state: VariationalState):
    """Variational means and second moments of every coefficient.

    Returns ``(mean, second)`` arrays of shape ``(K+1, p)``. A source
    coordinate in its spike equals the target coordinate, so its moments
    mix the slab moments with the target's.
    """
    g, mu, s = state.gamma, state.mu, state.sigma
    slab2 = mu * mu + s * s
    mean = np.empty_like(mu)
    second = np.empty_like(mu)
    mean[0] = g[0] * mu[0]
    second[0] = g[0] * slab2[0]
    mean[1:] = g[1:] * mu[1:] + (1.0 - g[1:]) * mean[0]
    second[1:] = g[1:] * slab2[1:] + (1.0 - g[1:]) * second[0]
    return mean, second


def expected_coefficient(state: VariationalState, k: int, j: int) -> float:
    _check_index(state, k, j)
    target = state.gamma[0, j] * state.mu[0, j]
    if k == 0:
        return float(target)
    g = state.gamma[k, j]
    return float(g * state.mu[k, j] + (1.0 - g) * target)


def second_moment(state: VariationalState, k: int, j: int) -> float:
    _check_index(state, k, j)
    target = state.gamma[0, j] * (state.mu[0, j] ** 2 + state.sigma[0, j] ** 2)
    if k == 0:
        return float(target)
    g = state.gamma[k, j]
    return float(g * (state.mu[k, j] ** 2 + state.sigma[k, j] ** 2) + (1.0 - g) * target)


def point_estimate(state: VariationalState, scaling: Optional[ScalingRecord] = None) -> np.ndarray:
    """Posterior mean of the target coefficients, ``gamma * mu``.

    With a scaling record the estimate is mapped back to original units.
    """
    beta = state.gamma[0] * state.mu[0]
    if scaling is not None:
        return scaling.to_original(beta)
    return beta


def _check_threshold(threshold: float) -> None:
    if not 0.0 < threshold < 1.0:
        raise BadThreshold(f"threshold must lie in (0, 1), got {threshold}")


def select_variables(state: VariationalState, threshold: float = 0.5) -> frozenset:
    """Coordinates whose target inclusion probability strictly exceeds ``threshold``."""
    _check_threshold(threshold)
    return frozenset(int(j) for j in np.flatnonzero(state.gamma[0] > threshold))


def select_transferable(state: VariationalState, k: int, threshold: float = 0.5) -> frozenset:
    """Coordinates of source ``k`` estimated to be shared with the target."""
    if not (1 <= k <= state.K):
        raise IndexOutOfRange(f"source index must be in 1..{state.K}, got {k}")
    _check_threshold(threshold)
    return frozenset(int(j) for j in np.flatnonzero(state.gamma[k] <= threshold))


@dataclass
class FitResult:
    state: VariationalState
    elbo_trace: np.ndarray
    beta_hat: np.ndarray
    selected_signals: frozenset
    transferable: list
    converged: bool
    sweeps: int
    family: GlmFamily = GlmFamily.GAUSSIAN
    threshold: float = 0.5
    scaling: Optional[ScalingRecord] = field(default=None, repr=False)

    @property
    def elbo(self) -> float:
        return float(self.elbo_trace[-1])

    @property
    def non_transferable(self) -> list:
        p = self.state.p
        return [frozenset(range(p)) - t for t in self.transferable]

    def coef(self) -> np.ndarray:
        """Target point estimate in original covariate units."""
        return point_estimate(self.state, self.scaling)


def make_result(state, elbo_trace, converged, sweeps, family, threshold=0.5, scaling=None):
    return FitResult(
        state=state,
        elbo_trace=np.asarray(elbo_trace, dtype=float),
        beta_hat=point_estimate(state),
        selected_signals=select_variables(state, threshold),
        transferable=[select_transferable(state, k, threshold) for k in range(1, state.K + 1)],
        converged=bool(converged),
        sweeps=int(sweeps),
        family=family,
        threshold=threshold,
        scaling=scaling,
    )
