"""Seeded generators for the multi-source simulation regimes.

Randomness comes from Philox streams derived from ``SeedSequence(seed)``
with fixed spawn keys, so each piece of a replication can be regenerated
independently:

* ``(0,)``    combinatorial structure (index sets and signs)
* ``(1, k)``  covariates and responses of dataset ``k`` (0 = target)
* ``(2,)``    held-out target test set
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import BadConfig
from .model import Dataset, GlmFamily, validate_problem

REGIMES = ("informative_set", "heterogeneous", "redundant", "demo")
DEMO_LABELS = ("TargetPositive", "TargetNegative", "SourcePositive", "SourceNegative")
NONINFORMATIVE_SIZE = 20
REDUNDANT_SIZES = (4, 8, 12, 16, 20)


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one simulated replication.

    ``A_size``/``h`` drive the informative-set regime, ``w`` the
    heterogeneous regime, ``rho`` the redundant regime and ``U_size`` the
    number of perturbed non-signal coordinates in the latter two. ``signal``
    defaults to 0.5 for Gaussian and 1.0 for logistic data.
    """

    regime: str = "informative_set"
    n0: int = 150
    nk: int = 100
    K: int = 10
    p: int = 200
    s: int = 16
    family: GlmFamily = GlmFamily.GAUSSIAN
    A_size: int = 0
    h: int = 4
    w: float = 1.0
    rho: float = 0.5
    U_size: int = 20
    sigma_y: float = 1.0
    seed: int = 0
    signal: float = None
    demo_case: str = "heterogeneous"

    def __post_init__(self):
        object.__setattr__(self, "family", GlmFamily.parse(self.family))
        if self.signal is None:
            object.__setattr__(self, "signal", 0.5 if self.family is GlmFamily.GAUSSIAN else 1.0)

    @classmethod
    def demo(cls, **kw) -> "SimConfig":
        base = dict(regime="demo", n0=100, nk=100, K=2, p=30, s=8, w=0.5, rho=1.0, U_size=6, signal=1.0)
        base.update(kw)
        return cls(**base)

    @property
    def shared_count(self) -> int:
        # round first: 0.6 * 10 is 6.000000000000001 in binary floating point
        return math.ceil(round(self.w * self.s, 9))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["family"] = self.family.value
        return d

    def replace(self, **kw) -> "SimConfig":
        return replace(self, **kw)


@dataclass
class SimTruth:
    beta0: np.ndarray
    betak: list
    S_true: frozenset
    Tk_true: list
    structure: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "beta0": self.beta0.tolist(),
            "betak": [b.tolist() for b in self.betak],
            "S_true": sorted(self.S_true),
            "Tk_true": [sorted(t) for t in self.Tk_true],
            "structure": self.structure,
        }


def _check(cfg: SimConfig, regime: str) -> None:
    if cfg.regime != regime:
        raise BadConfig(f"config regime is {cfg.regime!r}, expected {regime!r}")
    if min(cfg.n0, cfg.nk, cfg.p) < 1 or cfg.K < 0 or cfg.s < 0:
        raise BadConfig("sizes must be positive (K, s nonnegative)")
    if cfg.s > cfg.p:
        raise BadConfig(f"s={cfg.s} exceeds p={cfg.p}")
    if cfg.sigma_y <= 0:
        raise BadConfig("sigma_y must be positive")
    if regime == "informative_set":
        if not 0 <= cfg.A_size <= cfg.K:
            raise BadConfig(f"A_size={cfg.A_size} must be in 0..K={cfg.K}")
        if not 0 <= cfg.h <= cfg.p:
            raise BadConfig(f"h={cfg.h} must be in 0..p")
        if cfg.A_size < cfg.K and NONINFORMATIVE_SIZE > cfg.p:
            raise BadConfig(f"non-informative sources perturb {NONINFORMATIVE_SIZE} coordinates; p too small")
    if regime in ("heterogeneous", "demo") and not 0 < cfg.w <= 1:
        raise BadConfig(f"w={cfg.w} must lie in (0, 1]")
    if regime in ("heterogeneous", "redundant", "demo"):
        if not 0 <= cfg.U_size <= cfg.p - cfg.s:
            raise BadConfig(f"U_size={cfg.U_size} must be in 0..p-s={cfg.p - cfg.s}")
    if regime in ("redundant", "demo") and cfg.rho < 0:
        raise BadConfig("rho must be nonnegative")
    if regime == "demo" and cfg.demo_case not in ("heterogeneous", "redundant"):
        raise BadConfig("demo_case must be 'heterogeneous' or 'redundant'")


def _target_beta(cfg: SimConfig) -> np.ndarray:
    beta = np.zeros(cfg.p)
    beta[:cfg.s] = cfg.signal
    return beta


def _signs(rng, size):
    return rng.choice(np.array([-1.0, 1.0]), size=size)


def _draw_dataset(cfg: SimConfig, beta: np.ndarray, n: int, rng) -> Dataset:
    X = rng.standard_normal((n, cfg.p))
    eta = X @ beta
    if cfg.family is GlmFamily.GAUSSIAN:
        y = eta + cfg.sigma_y * rng.standard_normal(n)
    else:
        y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    return Dataset(X, y)


def _assemble(cfg: SimConfig, beta0, betak, structure):
    target = _draw_dataset(cfg, beta0, cfg.n0, stream(cfg.seed, 1, 0))
    sources = [_draw_dataset(cfg, b, cfg.nk, stream(cfg.seed, 1, k)) for k, b in enumerate(betak, start=1)]
    problem = validate_problem(target, sources, cfg.family)
    truth = SimTruth(
        beta0=beta0,
        betak=betak,
        S_true=frozenset(int(j) for j in np.flatnonzero(beta0)),
        Tk_true=[frozenset(int(j) for j in np.flatnonzero(b != beta0)) for b in betak],
        structure=structure,
    )
    return problem, truth


def gen_test_set(cfg: SimConfig, truth: SimTruth, n: int) -> Dataset:
    """Fresh target-distribution data for prediction error."""
    return _draw_dataset(cfg, truth.beta0, n, stream(cfg.seed, 2))


def gen_informative_set(cfg: SimConfig):
    """Sources ``1..|A|`` perturb ``h`` random coordinates by ``+-0.5``; the
    rest perturb 20 random coordinates by ``+-1``."""
    _check(cfg, "informative_set")
    rng = stream(cfg.seed, 0)
    beta0 = _target_beta(cfg)
    betak, H = [], []
    for k in range(1, cfg.K + 1):
        informative = k <= cfg.A_size
        size, step = (cfg.h, 0.5) if informative else (NONINFORMATIVE_SIZE, 1.0)
        idx = np.sort(rng.choice(cfg.p, size=size, replace=False))
        b = beta0.copy()
        b[idx] += step * _signs(rng, size)
        betak.append(b)
        H.append(idx.tolist())
    return _assemble(cfg, beta0, betak, {"A": list(range(1, cfg.A_size + 1)), "H": H})


def gen_heterogeneous(cfg: SimConfig):
    """Each source keeps ``ceil(w s)`` target signals (zeroing the rest) and
    perturbs ``U_size`` non-signal coordinates by ``+-0.5``."""
    _check(cfg, "heterogeneous")
    return _heterogeneous(cfg, 0.5)


def _heterogeneous(cfg, step):
    rng = stream(cfg.seed, 0)
    beta0 = _target_beta(cfg)
    betak, W, U = [], [], []
    keep = cfg.shared_count
    for _ in range(cfg.K):
        w_idx = np.sort(rng.choice(cfg.s, size=keep, replace=False))
        u_idx = np.sort(cfg.s + rng.choice(cfg.p - cfg.s, size=cfg.U_size, replace=False))
        b = beta0.copy()
        b[np.setdiff1d(np.arange(cfg.s), w_idx)] = 0.0
        b[u_idx] += step * _signs(rng, cfg.U_size)
        betak.append(b)
        W.append(w_idx.tolist())
        U.append(u_idx.tolist())
    return _assemble(cfg, beta0, betak, {"W": W, "U": U})


def gen_redundant(cfg: SimConfig):
    """All target signals are shared; ``U_size`` non-signal coordinates are
    perturbed by ``+-rho``."""
    _check(cfg, "redundant")
    return _redundant(cfg)


def _redundant(cfg):
    rng = stream(cfg.seed, 0)
    beta0 = _target_beta(cfg)
    betak, U = [], []
    for _ in range(cfg.K):
        u_idx = np.sort(cfg.s + rng.choice(cfg.p - cfg.s, size=cfg.U_size, replace=False))
        b = beta0.copy()
        b[u_idx] += cfg.rho * _signs(rng, cfg.U_size)
        betak.append(b)
        U.append(u_idx.tolist())
    return _assemble(cfg, beta0, betak, {"U": U})


def gen_demo(cfg: SimConfig):
    """Small partial-similarity instance for plotting per-coordinate
    inclusion probabilities; ``demo_case`` picks the heterogeneous or the
    redundant structure."""
    _check(cfg, "demo")
    if cfg.demo_case == "heterogeneous":
        problem, truth = _heterogeneous(cfg, cfg.rho)
    else:
        problem, truth = _redundant(cfg)
    truth.structure["labels"] = demo_labels(truth).tolist()
    return problem, truth


def demo_labels(truth: SimTruth) -> np.ndarray:
    """``(K+1, p)`` array of identity labels: target signal or not, source
    coordinate transferable or not."""
    p = truth.beta0.size
    K = len(truth.betak)
    labels = np.empty((K + 1, p), dtype=object)
    labels[0] = ["TargetPositive" if j in truth.S_true else "TargetNegative" for j in range(p)]
    for k, T in enumerate(truth.Tk_true, start=1):
        labels[k] = ["SourceNegative" if j in T else "SourcePositive" for j in range(p)]
    return labels


GENERATORS = {
    "informative_set": gen_informative_set,
    "heterogeneous": gen_heterogeneous,
    "redundant": gen_redundant,
    "demo": gen_demo,
}


def generate(cfg: SimConfig):
    """Dispatch on ``cfg.regime``."""
    try:
        gen = GENERATORS[cfg.regime]
    except KeyError:
        raise BadConfig(f"unknown regime {cfg.regime!r}; expected one of {REGIMES}") from None
    return gen(cfg)


def gen_from_coefficients(beta0, betak, n0: int, nk: int, sigma_y: float = 1.0, seed: int = 0,
                          family=GlmFamily.GAUSSIAN):
    """Draw target and source datasets for given true coefficient vectors.

    Streams follow the module layout, so a dataset depends only on its own
    coefficients, its size and ``seed``.
    """
    beta0 = np.asarray(beta0, dtype=float).reshape(-1)
    betak = [np.asarray(b, dtype=float).reshape(-1) for b in betak]
    if any(b.shape != beta0.shape for b in betak):
        raise BadConfig("source coefficient vectors must match the target length")
    if min(beta0.size, n0, nk) < 1 or sigma_y <= 0:
        raise BadConfig("p, n0 and nk must be positive and sigma_y > 0")
    cfg = SimConfig(regime="custom", n0=n0, nk=nk, K=len(betak), p=beta0.size, s=0,
                    family=family, sigma_y=sigma_y, seed=seed, signal=0.0)
    return _assemble(cfg, beta0, betak, {})


def gen_tiny(p: int, K: int, n: int = 50, sigma: float = 0.5, signal: float = 1.0,
             seed: int = 0, family=GlmFamily.GAUSSIAN):
    """Small instance for oracle comparisons.

    Each target coordinate is ``+-signal`` or zero with equal probability;
    each source coordinate independently keeps the target value or moves
    away from it by ``+-signal``. All datasets share ``n`` rows.
    """
    if min(p, n) < 1 or K < 0:
        raise BadConfig("p and n must be positive, K nonnegative")
    rng = stream(seed, 0)
    beta0 = signal * _signs(rng, p) * (rng.random(p) < 0.5)
    betak = [beta0 + signal * _signs(rng, p) * (rng.random(p) < 0.5) for _ in range(K)]
    return gen_from_coefficients(beta0, betak, n, n, sigma, seed, family)
