"""Bayesian transfer learning for sparse generalized linear models.

Target coefficients get a spike-and-slab prior; each source coefficient is
either equal to its target counterpart or drawn from a wide slab around it.
The posterior is approximated by coordinate-ascent variational inference.
"""

__version__ = "0.1.0"

from .baselines import fit_lasso_cd, fit_naive_vb
from .errors import *  # noqa: F401,F403
from .fitting import elbo, fit, fit_options
from .metrics import estimation_error, prediction_error, selection_metrics
from .model import (
    Dataset,
    FitResult,
    GlmFamily,
    MultiSourceProblem,
    PriorSpec,
    VariationalState,
    select_transferable,
    select_variables,
    standardize,
    validate_problem,
)
from .oracle import enumerate_posterior, gibbs_sample
from .simgen import SimConfig, gen_from_coefficients, generate
from .vb_linear import LinearFitOptions, fit_linear
from .vb_logistic import LogisticFitOptions, fit_logistic, pg_mean
