"""Maximum-likelihood accelerated failure time models for right-censored data.

The model is ``log T = x'beta + sigma * W`` with an intercept in ``x`` and a
standardized error ``W`` chosen by the family.  Parameters are optimized on
``(beta, log sigma)`` so the scale stays positive without constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset, SurvivalRecord
from .dist import DistFamily, error_derivatives, error_logpdf, error_logsf, surv_logtime

__all__ = [
    "SingularDesignError",
    "AftFit",
    "design_matrix",
    "aft_loglik",
    "fit_aft",
    "predict_surv",
]

GRAD_TOL = 1e-7
MAX_ITER = 200
INTERCEPT = "(Intercept)"


class SingularDesignError(ValueError):
    """Design matrix is not of full column rank."""


def design_matrix(covariates: np.ndarray) -> np.ndarray:
    covariates = np.asarray(covariates, dtype=float)
    n = covariates.shape[0]
    return np.column_stack([np.ones(n), covariates.reshape(n, -1)])


def aft_loglik(params, X, logt, status, family, *, derivatives=True):
    """Censored log-likelihood of an AFT model.

    ``params`` is ``(beta..., log_sigma)``; for the exponential family the
    trailing ``log_sigma`` is omitted and fixed at zero.

    Returns ``loglik`` or ``(loglik, gradient, hessian)``.
    """
    family = DistFamily.parse(family)
    params = np.asarray(params, dtype=float)
    p = X.shape[1]
    beta = params[:p]
    log_sigma = 0.0 if family.fixed_scale else params[p]
    d = np.asarray(status, dtype=float)
    err = family.error
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        sigma = float(np.exp(log_sigma))
        z = (logt - X @ beta) / sigma
        ll_i = np.where(d == 1, error_logpdf(err, z) - log_sigma - logt, error_logsf(err, z))
        ll = float(ll_i.sum())
    if not derivatives:
        return ll if np.isfinite(ll) else -np.inf

    # trial points of a line search may overflow; they are rejected by value
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        df1, df2, ds1, ds2 = error_derivatives(err, z)
        k1 = np.where(d == 1, df1, ds1)
        k2 = np.where(d == 1, df2, ds2)
        g_beta = -(X.T @ k1) / sigma
        h_bb = (X.T * k2) @ X / sigma**2
        if family.fixed_scale:
            return ll, g_beta, h_bb
        g_s = float(-(k1 @ z) - d.sum())
        h_bs = X.T @ (k2 * z + k1) / sigma
        h_ss = float(k2 @ (z * z) + k1 @ z)
    grad = np.append(g_beta, g_s)
    hess = np.empty((p + 1, p + 1))
    hess[:p, :p] = h_bb
    hess[:p, p] = hess[p, :p] = h_bs
    hess[p, p] = h_ss
    return ll, grad, hess


@dataclass
class AftFit:
    """A fitted (or fully specified) AFT model."""

    family: DistFamily
    beta: np.ndarray
    log_sigma: float
    loglik: float = float("nan")
    covariance: np.ndarray | None = None
    converged: bool = True
    iterations: int = 0
    grad_norm: float = 0.0
    covariate_names: tuple[str, ...] = ()
    message: str = ""
    n_obs: int = 0
    n_events: int = 0
    data_columns: dict = field(default_factory=dict)

    @property
    def sigma(self) -> float:
        return math.exp(self.log_sigma)

    @property
    def n_params(self) -> int:
        return len(self.beta) + (0 if self.family.fixed_scale else 1)

    @property
    def aic(self) -> float:
        return -2.0 * self.loglik + 2.0 * self.n_params

    @property
    def coef_names(self) -> list[str]:
        return [INTERCEPT, *self.covariate_names]

    @property
    def se(self) -> np.ndarray:
        if self.covariance is None:
            return np.full(self.n_params, np.nan)
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def model_id(self) -> str:
        return f"aft:{self.family.value}"

    @classmethod
    def from_params(cls, family, beta: Sequence[float], sigma: float,
                    covariate_names: Sequence[str] = ()) -> "AftFit":
        """Wrap known (e.g. data-generating) parameters as a model."""
        family = DistFamily.parse(family)
        beta = np.asarray(beta, dtype=float)
        if len(beta) != len(covariate_names) + 1:
            raise ValueError("beta must hold an intercept plus one entry per covariate")
        return cls(family, beta, math.log(sigma), covariate_names=tuple(covariate_names),
                   message="fixed parameters")

    def linear_predictor(self, covariates) -> np.ndarray:
        covariates = np.asarray(covariates, dtype=float)
        p = len(self.covariate_names)
        if covariates.ndim < 2:
            covariates = covariates.reshape(-1, p) if p else covariates.reshape(max(covariates.size, 1), 0)
        self._check_dim(covariates.shape[1])
        return design_matrix(covariates) @ self.beta

    def survival(self, times, covariates) -> np.ndarray:
        """S_i(t_i) for paired times and covariate rows."""
        times = np.asarray(times, dtype=float)
        mu = self.linear_predictor(covariates)
        if mu.shape != times.shape:
            raise ValueError("times and covariate rows differ in length")
        return surv_logtime(self.family, times, mu, np.full_like(times, self.sigma))

    def survival_of(self, d: Dataset) -> np.ndarray:
        self._check_dim(d.dim)
        return self.survival(d.times, d.covariates)

    def _check_dim(self, dim):
        if dim != len(self.covariate_names):
            raise ValueError(f"model expects {len(self.covariate_names)} covariates, got {dim}")

    def to_dict(self) -> dict:
        cov = None if self.covariance is None else self.covariance.tolist()
        names = self.coef_names
        se = self.se
        out = {
            "schema_version": 1,
            "model": "aft",
            "family": self.family.value,
            "covariates": list(self.covariate_names),
            "coefficients": dict(zip(names, map(float, self.beta))),
            "standard_errors": dict(zip(names, map(float, se[: len(names)]))),
            "log_sigma": self.log_sigma,
            "sigma": self.sigma,
            "loglik": self.loglik,
            "aic": self.aic,
            "n_params": self.n_params,
            "n_obs": self.n_obs,
            "n_events": self.n_events,
            "covariance": cov,
            "convergence": {
                "converged": self.converged,
                "iterations": self.iterations,
                "grad_sup_norm": self.grad_norm,
                "tolerance": GRAD_TOL,
                "message": self.message,
            },
        }
        if not self.family.fixed_scale:
            out["standard_errors"]["log_sigma"] = float(se[-1])
        if self.data_columns:
            out["data_columns"] = dict(self.data_columns)
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "AftFit":
        if doc.get("model") != "aft":
            raise ValueError("not an AFT fit document")
        names = tuple(doc["covariates"])
        beta = np.array([doc["coefficients"][k] for k in (INTERCEPT, *names)], dtype=float)
        cov = doc.get("covariance")
        conv = doc.get("convergence", {})
        return cls(DistFamily.parse(doc["family"]), beta, float(doc["log_sigma"]),
                   loglik=float(doc.get("loglik", float("nan"))),
                   covariance=None if cov is None else np.array(cov, dtype=float),
                   converged=bool(conv.get("converged", True)),
                   iterations=int(conv.get("iterations", 0)),
                   grad_norm=float(conv.get("grad_sup_norm", 0.0)),
                   covariate_names=names, message=conv.get("message", ""),
                   n_obs=int(doc.get("n_obs", 0)), n_events=int(doc.get("n_events", 0)),
                   data_columns=dict(doc.get("data_columns", {})))


def predict_surv(fit: AftFit, record: SurvivalRecord) -> float:
    """Survival probability of ``record`` at its own observed time."""
    fit._check_dim(len(record.covariates))
    mu = float(fit.linear_predictor(np.array(record.covariates))[0])
    return surv_logtime(fit.family, record.time, mu, fit.sigma)


def _initial_params(X, logt, status, family):
    events = status == 1
    rows = events if events.sum() > X.shape[1] else np.ones_like(events, dtype=bool)
    Xe, ye = X[rows], logt[rows]
    beta, *_ = np.linalg.lstsq(Xe, ye, rcond=None)
    if np.linalg.matrix_rank(Xe) < X.shape[1]:
        beta, *_ = np.linalg.lstsq(X, logt, rcond=None)
    resid = ye - Xe @ beta
    dof = max(len(ye) - X.shape[1], 1)
    sd = math.sqrt(float(resid @ resid) / dof)
    if family.fixed_scale:
        return beta
    return np.append(beta, math.log(sd) if sd > 1e-8 else 0.0)


def _maximize(f, x0, max_iter=MAX_ITER, tol=GRAD_TOL):
    """Newton ascent with Armijo backtracking and a BFGS fallback.

    ``f(x)`` returns ``(value, gradient, hessian)``.  The BFGS matrix
    approximates the negative Hessian and is used whenever the exact
    Hessian is not negative definite.
    """
    x = np.array(x0, dtype=float)
    val, g, H = f(x)
    if not np.isfinite(val):
        raise FloatingPointError("log-likelihood is not finite at the starting point")
    k = len(x)
    B = np.eye(k) * max(1.0, float(np.max(np.abs(np.diag(H)))) if k else 1.0)
    it = 0
    message = ""
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) < tol:
            return x, val, g, H, True, it - 1, "converged"
        try:
            L = np.linalg.cholesky(-H)
            direction = np.linalg.solve(L.T, np.linalg.solve(L, g))
            used_newton = True
        except np.linalg.LinAlgError:
            direction = np.linalg.solve(B, g)
            used_newton = False
        slope = float(g @ direction)
        if slope <= 0:
            direction, slope = g.copy(), float(g @ g)
        if used_newton and slope <= 1e3 * np.finfo(float).eps * max(1.0, abs(val)):
            # predicted gain is below rounding noise in the log-likelihood
            x_new = x + direction
            val_new, g_new, H_new = f(x_new)
            if np.isfinite(val_new) and np.max(np.abs(g_new)) < np.max(np.abs(g)):
                x, val, g, H = x_new, val_new, g_new, H_new
                continue
        step = 1.0
        while step >= 1e-14:
            x_new = x + step * direction
            val_new, g_new, H_new = f(x_new)
            if np.isfinite(val_new) and val_new >= val + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            message = "line search failed"
            if used_newton:
                break
            # stale secant model: restart it from a scaled identity
            B = np.eye(k) * max(1.0, float(np.max(np.abs(np.diag(H)))))
            continue
        s = x_new - x
        y = g - g_new
        sy = float(s @ y)
        if sy > 1e-12:
            Bs = B @ s
            B = B - np.outer(Bs, Bs) / float(s @ Bs) + np.outer(y, y) / sy
        x, val, g, H = x_new, val_new, g_new, H_new
    converged = bool(np.max(np.abs(g)) < tol)
    if not converged and not message:
        message = "iteration limit reached"
    return x, val, g, H, converged, it, "converged" if converged else message


def fit_aft(d: Dataset, family, *, max_iter: int = MAX_ITER, tol: float = GRAD_TOL,
            start=None) -> AftFit:
    """Fit an AFT model by maximum likelihood.

    Non-convergence is reported through ``converged=False`` rather than an
    exception.

    Raises
    ------
    SingularDesignError
        If the intercept-plus-covariates design is rank deficient.
    """
    family = DistFamily.parse(family)
    X = design_matrix(d.covariates)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise SingularDesignError("design matrix (intercept + covariates) is rank deficient")
    logt = np.log(d.times)
    status = np.asarray(d.status)
    x0 = _initial_params(X, logt, status, family) if start is None else np.asarray(start, float)

    def f(params):
        return aft_loglik(params, X, logt, status, family)

    try:
        params, ll, g, H, converged, iters, message = _maximize(f, x0, max_iter, tol)
    except FloatingPointError as exc:
        params, ll, g, H, converged, iters, message = x0, -np.inf, np.full_like(x0, np.nan), \
            None, False, 0, str(exc)
    cov = None
    if H is not None:
        try:
            cov = np.linalg.inv(-H)
            cov = 0.5 * (cov + cov.T)
        except np.linalg.LinAlgError:
            cov = None
    p = X.shape[1]
    return AftFit(
        family=family,
        beta=params[:p].copy(),
        log_sigma=0.0 if family.fixed_scale else float(params[p]),
        loglik=float(ll),
        covariance=cov,
        converged=converged,
        iterations=iters,
        grad_norm=float(np.max(np.abs(g))) if g is not None and len(g) else 0.0,
        covariate_names=d.covariate_names,
        message=message,
        n_obs=d.n,
        n_events=int(np.count_nonzero(d.status)),
    )
