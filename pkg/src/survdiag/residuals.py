"""Residuals for censored failure-time regression.

Every residual here is a transform of the survival probability ``S_i(T_i)``
evaluated at each subject's observed (possibly censored) time:

* ``usp``          unmodified survival probabilities
* ``msp``          censored rows shrunk by ``eta``
* ``cs``           Cox-Snell, ``-log usp``
* ``cs_modified``  Cox-Snell plus ``delta`` on censored rows
* ``martingale``   ``d_i - cs_i``
* ``deviance``     signed-root transform of the martingale residual
* ``nmsp``         normal quantile of ``msp``
* ``rsp``          randomized survival probabilities, ``U_i * usp`` when censored
* ``nrsp``         normal quantile of ``rsp``

Randomized rows draw ``U_i`` from a stream keyed by ``(seed, row index)``.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .aft import fit_aft
from .data import Dataset
from .dist import normal_quantile
from .rng import row_uniforms

__all__ = [
    "KINDS",
    "DEFAULT_ETA",
    "ModelInconsistencyError",
    "BoundaryWarning",
    "ResidualSet",
    "usp",
    "msp",
    "cox_snell",
    "cs_modified",
    "martingale",
    "deviance",
    "rsp",
    "nrsp",
    "nmsp",
    "compute_residuals",
    "residuals_cv",
]

KINDS = ("usp", "msp", "cs", "cs_modified", "martingale", "deviance", "nmsp", "rsp", "nrsp")
DEFAULT_ETA = math.exp(-1.0)
EPS = 1e-16


class ModelInconsistencyError(ValueError):
    """A survival evaluator produced values outside [0, 1]."""


class BoundaryWarning(RuntimeWarning):
    """Probabilities at 0 or 1 were clamped before a quantile transform."""


@dataclass(frozen=True)
class ResidualSet:
    kind: str
    values: np.ndarray
    status: np.ndarray
    eta: float | None = None
    seed: int | None = None
    model_id: str = ""
    flags: np.ndarray | None = None
    times: np.ndarray | None = None
    rows: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.values)
        if self.flags is None:
            object.__setattr__(self, "flags", np.zeros(n, dtype=bool))
        if self.rows is None:
            object.__setattr__(self, "rows", np.arange(n))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def censored(self) -> np.ndarray:
        return np.asarray(self.status) == 0

    def _derive(self, kind, values, **changes) -> "ResidualSet":
        return replace(self, kind=kind, values=np.asarray(values, dtype=float), **changes)

    def metadata(self) -> dict:
        out = {"schema_version": 1, "kind": self.kind, "n": len(self),
               "model_id": self.model_id, "eta": self.eta, "seed": self.seed,
               "n_flagged": int(np.count_nonzero(self.flags))}
        out.update(self.meta)
        return out

    def to_csv(self, path) -> None:
        path = Path(path)
        times = self.times if self.times is not None else np.full(len(self), np.nan)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "time", "status", "value", "flag"])
            for r, t, s, v, f in zip(self.rows, times, self.status, self.values, self.flags):
                w.writerow([int(r), repr(float(t)), int(s), repr(float(v)), int(bool(f))])

    def to_json(self) -> dict:
        doc = self.metadata()
        doc["values"] = [None if not np.isfinite(v) else float(v) for v in self.values]
        doc["status"] = [int(s) for s in self.status]
        doc["flags"] = [int(bool(f)) for f in self.flags]
        return doc

    def write(self, csv_path, json_path=None) -> None:
        self.to_csv(csv_path)
        if json_path is not None:
            Path(json_path).write_text(json.dumps(self.metadata(), indent=2, sort_keys=True) + "\n")


def _require(rs: ResidualSet, *kinds):
    if rs.kind not in kinds:
        raise ValueError(f"expected residual kind {' or '.join(kinds)}, got {rs.kind!r}")


def _check_eta(eta):
    if not (0.0 < eta < 1.0):
        raise ValueError(f"eta must lie in (0, 1), got {eta!r}")


def _survival_values(model, d: Dataset) -> np.ndarray:
    if hasattr(model, "survival_of"):
        return np.asarray(model.survival_of(d), dtype=float)
    if callable(model):
        return np.asarray(model(d.times, d.covariates), dtype=float)
    raise TypeError("model must provide survival_of(dataset) or be a callable (times, X)")


def usp(model, d: Dataset) -> ResidualSet:
    """Survival probabilities at the observed times, censored or not.

    ``model`` is a fitted model exposing ``survival_of(dataset)`` or a
    callable ``f(times, covariates)``.  Values that underflow to exactly 0
    are clamped to 1e-16 and flagged.  Event rows at exactly 1 (a hazard
    too small to represent) are set to the largest double below 1 and
    flagged, so their Cox-Snell residual stays positive.
    """
    s = _survival_values(model, d)
    if s.shape != (d.n,) or not np.all(np.isfinite(s)) or np.any(s < 0) or np.any(s > 1):
        raise ModelInconsistencyError("survival evaluator returned values outside [0, 1]")
    low = s <= 0.0
    high = (s >= 1.0) & (np.asarray(d.status) == 1)
    s = np.where(low, EPS, np.where(high, np.nextafter(1.0, 0.0), s))
    flags = low | high
    return ResidualSet("usp", s, np.asarray(d.status).copy(),
                       model_id=getattr(model, "model_id", ""), flags=flags,
                       times=np.asarray(d.times).copy())


def msp(u: ResidualSet, eta: float = DEFAULT_ETA) -> ResidualSet:
    """Shrink censored survival probabilities by ``eta``."""
    _require(u, "usp")
    _check_eta(eta)
    return u._derive("msp", np.where(u.censored, eta * u.values, u.values), eta=float(eta))


def cox_snell(u: ResidualSet) -> ResidualSet:
    _require(u, "usp")
    zero = u.values <= 0
    with np.errstate(divide="ignore"):
        values = -np.log(u.values)
    return u._derive("cs", values, flags=u.flags | zero)


def cs_modified(u: ResidualSet, delta: float = 1.0) -> ResidualSet:
    """Cox-Snell residuals with ``delta`` added on censored rows."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    cs = cox_snell(u)
    return cs._derive("cs_modified", np.where(u.censored, cs.values + delta, cs.values),
                      eta=math.exp(-delta))


def martingale(cs: ResidualSet) -> ResidualSet:
    _require(cs, "cs")
    return cs._derive("martingale", np.asarray(cs.status, dtype=float) - cs.values)


def deviance(mart: ResidualSet) -> ResidualSet:
    """sign(M) * sqrt(-2 [M + d log(d - M)]), with d log(.) = 0 when d = 0."""
    _require(mart, "martingale")
    m = mart.values
    d = np.asarray(mart.status, dtype=float)
    if np.any((d == 1) & (d - m <= 0)):
        raise ValueError("martingale residual inconsistent with an event row (d - M <= 0)")
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.where(d == 1, np.log(np.where(d == 1, d - m, 1.0)), 0.0)
    inner = np.maximum(-2.0 * (m + d * log_term), 0.0)
    return mart._derive("deviance", np.sign(m) * np.sqrt(inner))


def rsp(u: ResidualSet, seed: int, uniforms=None) -> ResidualSet:
    """Randomized survival probabilities.

    Censored rows become ``U_i * usp_i`` with ``U_i`` on (0, 1]; event rows
    are unchanged.  ``uniforms`` overrides the random draws (one per row).
    """
    _require(u, "usp")
    if uniforms is None:
        uniforms = row_uniforms(seed, u.rows)
    uniforms = np.asarray(uniforms, dtype=float)
    if uniforms.shape != u.values.shape:
        raise ValueError("need one uniform per row")
    values = np.where(u.censored, uniforms * u.values, u.values)
    return u._derive("rsp", values, seed=None if seed is None else int(seed))


def _normal_scores(rs: ResidualSet, kind: str) -> ResidualSet:
    p = rs.values
    low, high = p <= 0.0, p >= 1.0
    boundary = low | high
    if boundary.any():
        warnings.warn(f"{int(boundary.sum())} probabilities at 0 or 1 clamped before the "
                      "normal quantile transform", BoundaryWarning, stacklevel=3)
    clamped = np.clip(p, EPS, 1.0 - EPS)
    return rs._derive(kind, normal_quantile(clamped), flags=rs.flags | boundary)


def nrsp(r: ResidualSet) -> ResidualSet:
    _require(r, "rsp")
    return _normal_scores(r, "nrsp")


def nmsp(m: ResidualSet) -> ResidualSet:
    _require(m, "msp")
    return _normal_scores(m, "nmsp")


def from_usp(u: ResidualSet, kind: str, *, eta: float = DEFAULT_ETA, seed: int | None = None,
             uniforms=None) -> ResidualSet:
    """Derive any residual kind from unmodified survival probabilities."""
    if kind == "usp":
        return u
    if kind == "msp":
        return msp(u, eta)
    if kind == "nmsp":
        return nmsp(msp(u, eta))
    if kind == "cs":
        return cox_snell(u)
    if kind == "cs_modified":
        return cs_modified(u, -math.log(eta))
    if kind == "martingale":
        return martingale(cox_snell(u))
    if kind == "deviance":
        return deviance(martingale(cox_snell(u)))
    if kind in ("rsp", "nrsp"):
        if seed is None and uniforms is None:
            raise ValueError(f"{kind} residuals need a seed")
        r = rsp(u, seed, uniforms)
        return r if kind == "rsp" else nrsp(r)
    raise ValueError(f"unknown residual kind {kind!r}; expected one of {KINDS}")


def compute_residuals(model, d: Dataset, kind: str, *, eta: float = DEFAULT_ETA,
                      seed: int | None = None) -> ResidualSet:
    """Evaluate ``model`` on ``d`` and return residuals of the requested kind."""
    return from_usp(usp(model, d), kind, eta=eta, seed=seed)


def residuals_cv(d: Dataset, family, kind: str, seed: int | None = None, *,
                 eta: float = DEFAULT_ETA) -> ResidualSet:
    """Leave-one-out residuals for an AFT model.

    Row ``i`` is evaluated under a fit to all other rows.  Rows whose
    held-out fit does not converge are flagged and get NaN.  Randomized
    kinds key ``U_i`` by the original row index, as in the full-data case.
    """
    if d.n < d.dim + 3:
        raise ValueError(f"leave-one-out needs n >= covariates + 3 ({d.dim + 3}), got {d.n}")
    s = np.full(d.n, np.nan)
    failed = np.zeros(d.n, dtype=bool)
    model_id = ""
    for i in range(d.n):
        try:
            fit = fit_aft(d.drop(i), family)
        except Exception:
            failed[i] = True
            continue
        model_id = fit.model_id
        if not fit.converged:
            failed[i] = True
            continue
        s[i] = fit.survival(d.times[i:i + 1], d.covariates[i:i + 1])[0]
    base = np.where(failed, 0.5, s)
    if np.any(base < 0) or np.any(base > 1):
        raise ModelInconsistencyError("survival evaluator returned values outside [0, 1]")
    underflow = base <= 0
    u = ResidualSet("usp", np.where(underflow, EPS, base), np.asarray(d.status).copy(),
                    model_id=f"loo:{model_id}", flags=underflow | failed,
                    times=np.asarray(d.times).copy(), meta={"cv": "leave-one-out",
                                                            "n_failed": int(failed.sum())})
    out = from_usp(u, kind, eta=eta, seed=seed)
    values = np.where(failed, np.nan, out.values)
    return replace(out, values=values)
