"""Covariate-dependent threshold selection for peaks-over-threshold tail estimation."""
from ._kernels import BACKEND
from .distributions import (Family, FamilySpec, GpdParams, family_cdf, family_quantile,
                            family_sample, gpd_cdf, gpd_logpdf, gpd_quantile)
from .gpd_mle import (FitResult, Link, LinkedGpdModel, fit_conditional_gpd, gamma_at,
                      gradient_check, neg_loglik)
from .ingest import Dataset, read_csv, write_fit_report, write_metrics
from .simulation import MetricRow, SimConfig, gamma_true, mad, median_bias, run_study
from .thresholds import (INTERCEPT_ONLY, LINEAR, Basis, ExceedanceSet, Method, ThresholdModel,
                         calibrate_p_for_k, constant_threshold, exceedances, expectile_check,
                         fit_expectile_regression, fit_quantile_regression, quantile_check)

__version__ = "0.1.0"
