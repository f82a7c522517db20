"""Family dispatch for the transfer-learning fit."""

from __future__ import annotations

from .model import GlmFamily, MultiSourceProblem, PriorSpec
from .vb_linear import LinearFitOptions, elbo_linear, fit_linear
from .vb_logistic import LogisticFitOptions, elbo_logistic, fit_logistic


def fit_options(family, **kw):
    """Options object of the right type for ``family``."""
    if GlmFamily.parse(family) is GlmFamily.GAUSSIAN:
        return LinearFitOptions(**kw)
    return LogisticFitOptions(**kw)


def fit(problem: MultiSourceProblem, priors: PriorSpec = None, options=None, scaling=None, state=None):
    """Fit CONCERT with the engine matching ``problem.family``."""
    if problem.family is GlmFamily.GAUSSIAN:
        return fit_linear(problem, priors, options, scaling=scaling, state=state)
    return fit_logistic(problem, priors, options, scaling=scaling, state=state)


def elbo(state, problem: MultiSourceProblem, priors: PriorSpec) -> float:
    if problem.family is GlmFamily.GAUSSIAN:
        return elbo_linear(state, problem, priors)
    return elbo_logistic(state, problem, priors)
