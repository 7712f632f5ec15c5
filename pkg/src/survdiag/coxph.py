"""Cox proportional hazards regression with a Breslow baseline hazard."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .aft import SingularDesignError
from .data import Dataset, SurvivalRecord

__all__ = ["CoxFit", "cox_partial_loglik", "fit_cox", "predict_surv_cox", "breslow_baseline"]

GRAD_TOL = 1e-7
MAX_ITER = 100
STEP_TOL = 1e-6


def _risk_index(times: np.ndarray):
    """Sort order and, per sorted position, the first index of its tie block."""
    order = np.argsort(times, kind="stable")
    ts = times[order]
    first = np.searchsorted(ts, ts, side="left")
    return order, ts, first


def cox_partial_loglik(beta, X, times, status, *, derivatives=True):
    """Breslow log partial likelihood, with score and Hessian if requested.

    Every subject with ``t_j >= t_i`` is at risk at event time ``t_i``;
    tied events share one risk set.
    """
    beta = np.asarray(beta, dtype=float)
    order, _, first = _risk_index(np.asarray(times, dtype=float))
    Xs = np.asarray(X, dtype=float)[order]
    ds = np.asarray(status)[order] == 1
    eta = Xs @ beta
    shift = float(eta.max()) if eta.size else 0.0
    w = np.exp(eta - shift)
    # reverse cumulative sums give sums over {k >= position}
    s0 = np.cumsum(w[::-1])[::-1][first]
    ll = float(np.sum(eta[ds] - np.log(s0[ds]) - shift))
    if not derivatives:
        return ll
    wx = w[:, None] * Xs
    s1 = np.cumsum(wx[::-1], axis=0)[::-1][first]
    m = s1[ds] / s0[ds, None]
    grad = Xs[ds].sum(axis=0) - m.sum(axis=0)
    wxx = wx[:, :, None] * Xs[:, None, :]
    s2 = np.cumsum(wxx[::-1], axis=0)[::-1][first][ds] / s0[ds, None, None]
    hess = -(s2.sum(axis=0) - m.T @ m)
    return ll, grad, hess


def breslow_baseline(beta, X, times, status):
    """Breslow cumulative baseline hazard at the distinct event times."""
    times = np.asarray(times, dtype=float)
    status = np.asarray(status)
    eta = np.asarray(X, dtype=float) @ np.asarray(beta, dtype=float)
    event_times = np.unique(times[status == 1])
    w = np.exp(eta)
    # risk-set weight sum at each distinct event time
    order = np.argsort(times, kind="stable")
    tail = np.cumsum(w[order][::-1])[::-1]
    pos = np.searchsorted(times[order], event_times, side="left")
    at_risk = tail[pos]
    n_events = np.array([np.count_nonzero((times == u) & (status == 1)) for u in event_times])
    return event_times, np.cumsum(n_events / at_risk)


@dataclass
class CoxFit:
    beta: np.ndarray
    baseline_times: np.ndarray
    baseline_cumhaz: np.ndarray
    log_partial_lik: float
    covariance: np.ndarray | None
    converged: bool
    iterations: int = 0
    grad_norm: float = 0.0
    covariate_names: tuple[str, ...] = ()
    fixed: np.ndarray | None = None
    message: str = ""
    n_obs: int = 0
    n_events: int = 0
    data_columns: dict = field(default_factory=dict)

    @property
    def model_id(self) -> str:
        return "coxph:breslow"

    @property
    def se(self) -> np.ndarray:
        if self.covariance is None:
            return np.full(len(self.beta), np.nan)
        se = np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))
        if self.fixed is not None:
            se = np.where(self.fixed, np.nan, se)
        return se

    def cumhaz(self, t, left: bool = False) -> np.ndarray:
        """Baseline cumulative hazard H0(t); ``left=True`` gives H0(t-)."""
        t = np.asarray(t, dtype=float)
        side = "left" if left else "right"
        k = np.searchsorted(self.baseline_times, t, side=side)
        padded = np.concatenate([[0.0], self.baseline_cumhaz])
        return padded[k]

    def survival(self, times, covariates) -> np.ndarray:
        """Right-continuous S_i(t) = exp(-H0(t) exp(x_i'beta))."""
        times = np.asarray(times, dtype=float)
        covariates = np.asarray(covariates, dtype=float).reshape(-1, len(self.beta))
        if covariates.shape[0] != times.shape[0]:
            raise ValueError("times and covariate rows differ in length")
        return np.exp(-self.cumhaz(times) * np.exp(covariates @ self.beta))

    def survival_of(self, d: Dataset) -> np.ndarray:
        if d.dim != len(self.beta):
            raise ValueError(f"model expects {len(self.beta)} covariates, got {d.dim}")
        return self.survival(d.times, d.covariates)

    def to_dict(self) -> dict:
        se = self.se
        return {
            "schema_version": 1,
            "model": "coxph",
            "ties": "breslow",
            "covariates": list(self.covariate_names),
            "coefficients": dict(zip(self.covariate_names, map(float, self.beta))),
            "standard_errors": {k: (None if math.isnan(v) else float(v))
                                for k, v in zip(self.covariate_names, se)},
            "fixed_zero": [k for k, f in zip(self.covariate_names,
                                             self.fixed if self.fixed is not None else [])
                           if f],
            "log_partial_lik": self.log_partial_lik,
            "n_obs": self.n_obs,
            "n_events": self.n_events,
            "covariance": None if self.covariance is None else self.covariance.tolist(),
            "baseline": np.column_stack([self.baseline_times, self.baseline_cumhaz]).tolist(),
            "convergence": {
                "converged": self.converged,
                "iterations": self.iterations,
                "grad_sup_norm": self.grad_norm,
                "tolerance": GRAD_TOL,
                "message": self.message,
            },
            **({"data_columns": dict(self.data_columns)} if self.data_columns else {}),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CoxFit":
        if doc.get("model") != "coxph":
            raise ValueError("not a Cox fit document")
        names = tuple(doc["covariates"])
        base = np.array(doc["baseline"], dtype=float).reshape(-1, 2)
        cov = doc.get("covariance")
        conv = doc.get("convergence", {})
        fixed = np.array([k in doc.get("fixed_zero", []) for k in names], dtype=bool)
        return cls(np.array([doc["coefficients"][k] for k in names], dtype=float),
                   base[:, 0].copy(), base[:, 1].copy(), float(doc["log_partial_lik"]),
                   None if cov is None else np.array(cov, dtype=float),
                   bool(conv.get("converged", True)), int(conv.get("iterations", 0)),
                   float(conv.get("grad_sup_norm", 0.0)), names, fixed,
                   conv.get("message", ""), int(doc.get("n_obs", 0)),
                   int(doc.get("n_events", 0)), dict(doc.get("data_columns", {})))


def fit_cox(d: Dataset, *, max_iter: int = MAX_ITER, tol: float = GRAD_TOL) -> CoxFit:
    """Fit a Cox model by Newton-Raphson on the Breslow partial likelihood.

    Covariates with zero variance carry no partial-likelihood information;
    their coefficients are fixed at zero and reported in ``fixed``.
    A likelihood that keeps increasing without a finite maximizer (e.g. a
    perfectly separating covariate) yields ``converged=False``.
    """
    X = np.asarray(d.covariates, dtype=float)
    times = np.asarray(d.times)
    status = np.asarray(d.status)
    p = X.shape[1]
    fixed = np.ptp(X, axis=0) == 0 if p else np.zeros(0, dtype=bool)
    free = ~fixed
    Xc = X[:, free] - X[:, free].mean(axis=0)
    k = Xc.shape[1]
    if k and np.linalg.matrix_rank(Xc) < k:
        raise SingularDesignError("covariates are linearly dependent on the risk sets")

    b = np.zeros(k)
    ll, g, H = cox_partial_loglik(b, Xc, times, status)
    converged = k == 0
    message = "no free covariates" if k == 0 else ""
    it = 0
    for it in range(1, max_iter + 1):
        if k == 0:
            break
        try:
            L = np.linalg.cholesky(-H)
        except np.linalg.LinAlgError:
            message = "information matrix singular: monotone likelihood, coefficient diverging"
            break
        delta = np.linalg.solve(L.T, np.linalg.solve(L, g))
        if np.max(np.abs(g)) < tol and np.max(np.abs(delta)) < STEP_TOL * (1.0 + np.max(np.abs(b))):
            converged = True
            message = "converged"
            it -= 1
            break
        step = 1.0
        while True:
            b_new = b + step * delta
            ll_new, g_new, H_new = cox_partial_loglik(b_new, Xc, times, status)
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * abs(ll):
                break
            step *= 0.5
            if step < 1e-10:
                break
        if step < 1e-10:
            message = "step halving failed"
            break
        b, ll, g, H = b_new, ll_new, g_new, H_new
    else:
        message = "iteration limit reached: monotone likelihood suspected"

    beta = np.zeros(p)
    beta[free] = b
    cov = None
    try:
        inv = np.linalg.inv(-H) if k else np.zeros((0, 0))
        cov = np.zeros((p, p))
        cov[np.ix_(free, free)] = 0.5 * (inv + inv.T)
    except np.linalg.LinAlgError:
        cov = None
    bt, bh = breslow_baseline(beta, X, times, status)
    return CoxFit(beta=beta, baseline_times=bt, baseline_cumhaz=bh,
                  log_partial_lik=float(ll), covariance=cov,
                  converged=converged, iterations=it if k else 0,
                  grad_norm=float(np.max(np.abs(g))) if k else 0.0,
                  covariate_names=d.covariate_names, fixed=fixed, message=message,
                  n_obs=d.n, n_events=int(np.count_nonzero(status)))


def predict_surv_cox(fit: CoxFit, record: SurvivalRecord) -> float:
    if len(record.covariates) != len(fit.beta):
        raise ValueError(f"model expects {len(fit.beta)} covariates, got {len(record.covariates)}")
    return float(fit.survival(np.array([record.time]), np.array([record.covariates]))[0])
