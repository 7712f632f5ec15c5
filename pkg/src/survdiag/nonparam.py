"""Kaplan-Meier estimation and the cumulative-hazard plot of Cox-Snell residuals."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["KmCurve", "CumHazCurve", "kaplan_meier", "cumhaz_of_cs"]


@dataclass(frozen=True)
class KmCurve:
    """Product-limit estimate, one step per distinct event time."""

    times: np.ndarray
    survival: np.ndarray
    n_risk: np.ndarray
    n_event: np.ndarray
    censor_marks: np.ndarray
    last_time: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.times.tolist(), self.survival.tolist()))

    def __call__(self, t) -> np.ndarray:
        """S_hat(t); NaN beyond the largest observation."""
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.times, t, side="right")
        out = np.concatenate([[1.0], self.survival])[k]
        return np.where(t > self.last_time, np.nan, out)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "S", "n_risk", "n_event"])
            for row in zip(self.times, self.survival, self.n_risk, self.n_event):
                w.writerow([repr(float(row[0])), repr(float(row[1])), int(row[2]), int(row[3])])


def kaplan_meier(times, status) -> KmCurve:
    """Product-limit estimator with ties aggregated at each distinct event time."""
    times = np.asarray(times, dtype=float).ravel()
    status = np.asarray(status).ravel()
    if times.size == 0:
        raise ValueError("kaplan_meier needs at least one observation")
    if times.size != status.size:
        raise ValueError("times and status differ in length")
    if np.any(times <= 0):
        raise ValueError("times must be positive")
    # distinct event times; at-risk counts include everyone with t_j >= t
    ev = np.unique(times[status == 1])
    sorted_t = np.sort(times)
    n_risk = sorted_t.size - np.searchsorted(sorted_t, ev, side="left")
    ev_sorted = np.sort(times[status == 1])
    n_event = (np.searchsorted(ev_sorted, ev, side="right")
               - np.searchsorted(ev_sorted, ev, side="left"))
    surv = np.cumprod(1.0 - n_event / n_risk)
    return KmCurve(ev, surv, n_risk, n_event, np.sort(times[status == 0]), float(sorted_t[-1]))


@dataclass(frozen=True)
class CumHazCurve:
    """H(r) = -log S_hat(r) over residual values; ``truncated`` marks S_hat = 0."""

    residuals: np.ndarray
    cumhaz: np.ndarray
    n_risk: np.ndarray
    n_event: np.ndarray
    truncated: bool

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r", "H", "n_risk", "n_event"])
            for row in zip(self.residuals, self.cumhaz, self.n_risk, self.n_event):
                w.writerow([repr(float(row[0])), repr(float(row[1])), int(row[2]), int(row[3])])


def cumhaz_of_cs(cs, status=None) -> CumHazCurve:
    """KM cumulative hazard of Cox-Snell residuals treated as censored data.

    Under a correct model the curve follows the unit-slope line through the
    origin.  Steps where the KM estimate reaches zero are dropped and the
    curve is flagged as truncated.
    """
    if hasattr(cs, "kind"):
        if cs.kind not in ("cs", "cs_modified"):
            raise ValueError(f"expected Cox-Snell residuals, got {cs.kind!r}")
        values, status = cs.values, cs.status
    else:
        values = cs
        if status is None:
            raise ValueError("status is required with a bare residual array")
    values = np.asarray(values, dtype=float)
    status = np.asarray(status)
    if values.size and np.all(status == 0):
        return CumHazCurve(np.empty(0), np.empty(0), np.empty(0, int), np.empty(0, int), False)
    # KM requires positive support; a zero residual is an event at the origin
    km = kaplan_meier(np.maximum(values, np.finfo(float).tiny), status)
    keep = km.survival > 0
    return CumHazCurve(km.times[keep], -np.log(km.survival[keep]), km.n_risk[keep],
                       km.n_event[keep], bool(not keep.all()))
