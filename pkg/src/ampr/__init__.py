"""Semi-analytic resampling statistics of Lasso estimators.

The package computes bootstrap and randomized-penalty averages of Lasso
estimators without running the bootstrap, via an approximate message passing
fixed point, and cross-checks them against a direct Monte-Carlo harness.
"""

from .data import (ColumnScaling, Dataset, OverlapEstimate, SyntheticSpec,
                   Truth, augment_noise, fetch_wine, gen_correlated, gen_iid,
                   load_csv, load_wine, mean_overlap, standardize)
from .moments import (GaussSoftMoments, PenaltyMixture, PoissonAverages,
                      gauss_soft_moments, penalty_average, poisson_averages,
                      soft_threshold)
from .resampling import (EmpiricalMoments, ResampleDraw, ResamplingConfig,
                         ResamplingError, draw_counts, draw_penalties,
                         make_draw)
from .resampling import run as resample_run
from .selection import (CvResult, RejectionRegion, SelectionReport,
                        StabilityPath, bolasso, cross_validate, lambda_grid,
                        normalized_mse, rejection_region, stability_path,
                        tp_fp)
from .solver import (AmprConfig, AmprDivergenceError, AmprOutput, AmprState,
                     macroscopics, marginal_cdf, positive_probability)
from .solver import run as ampr_run
from .state_evolution import (SeParams, SePrior, SeState, initial_state,
                              se_fixed_point, se_run, se_step)
from .wlasso import (LassoSolution, WeightedLassoProblem, fit, fit_path,
                     kkt_residual)

__all__ = [
    # penalty mixtures and scalar moment kernels
    "GaussSoftMoments", "PenaltyMixture", "PoissonAverages",
    "gauss_soft_moments", "penalty_average", "poisson_averages",
    "soft_threshold",
    # weighted Lasso solver
    "LassoSolution", "WeightedLassoProblem", "fit", "fit_path",
    "kkt_residual",
    # semi-analytic engine
    "AmprConfig", "AmprDivergenceError", "AmprOutput", "AmprState",
    "ampr_run", "macroscopics", "marginal_cdf", "positive_probability",
    # macroscopic recursion
    "SeParams", "SePrior", "SeState", "initial_state", "se_fixed_point",
    "se_run", "se_step",
    # Monte-Carlo harness
    "EmpiricalMoments", "ResampleDraw", "ResamplingConfig",
    "ResamplingError", "draw_counts", "draw_penalties", "make_draw",
    "resample_run",
    # datasets
    "ColumnScaling", "Dataset", "OverlapEstimate", "SyntheticSpec", "Truth",
    "augment_noise", "fetch_wine", "gen_correlated", "gen_iid", "load_csv",
    "load_wine", "mean_overlap", "standardize",
    # selection pipelines
    "CvResult", "RejectionRegion", "SelectionReport", "StabilityPath",
    "bolasso", "cross_validate", "lambda_grid", "normalized_mse",
    "rejection_region", "stability_path", "tp_fp",
]

__version__ = "0.1.0"
