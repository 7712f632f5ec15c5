"""Residual diagnostics for censored failure-time regression.

Fits AFT (Weibull, log-normal, log-logistic, exponential) and Cox PH models,
computes survival-probability based residuals including randomized survival
probabilities (RSP) and their normal transform (NRSP), and tests them with
Shapiro-Wilk, Kolmogorov-Smirnov and Lilliefors-corrected KS tests.
"""

__version__ = "0.1.0"

from .aft import AftFit, SingularDesignError, aft_loglik, fit_aft, predict_surv
from .coxph import CoxFit, cox_partial_loglik, fit_cox, predict_surv_cox
from .data import (DataError, Dataset, RowError, SchemaError, SurvivalRecord,
                   censoring_fraction, load_csv, write_csv)
from .dist import DistFamily, DomainError, normal_cdf, normal_quantile
from .gof import GofError, GofResult, ks_test, lcks_test, shapiro_wilk
from .nonparam import CumHazCurve, KmCurve, cumhaz_of_cs, kaplan_meier
from .residuals import (DEFAULT_ETA, ResidualSet, compute_residuals, cox_snell,
                        cs_modified, deviance, martingale, msp, nmsp, nrsp,
                        residuals_cv, rsp, usp)

__all__ = [
    "__version__",
    "AftFit", "SingularDesignError", "aft_loglik", "fit_aft", "predict_surv",
    "CoxFit", "cox_partial_loglik", "fit_cox", "predict_surv_cox",
    "DataError", "Dataset", "RowError", "SchemaError", "SurvivalRecord",
    "censoring_fraction", "load_csv", "write_csv",
    "DistFamily", "DomainError", "normal_cdf", "normal_quantile",
    "GofError", "GofResult", "ks_test", "lcks_test", "shapiro_wilk",
    "CumHazCurve", "KmCurve", "cumhaz_of_cs", "kaplan_meier",
    "DEFAULT_ETA", "ResidualSet", "compute_residuals", "cox_snell", "cs_modified",
    "deviance", "martingale", "msp", "nmsp", "nrsp", "residuals_cv", "rsp", "usp",
]
