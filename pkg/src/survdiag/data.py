"""Survival records, the dataset container and CSV ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "DataError",
    "SchemaError",
    "RowError",
    "SurvivalRecord",
    "Dataset",
    "load_csv",
    "write_csv",
    "censoring_fraction",
]


class DataError(ValueError):
    """Invalid survival data."""


class SchemaError(DataError):
    pass


class RowError(DataError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


@dataclass(frozen=True)
class SurvivalRecord:
    time: float
    status: int
    covariates: tuple[float, ...] = ()

    def __post_init__(self):
        if not (math.isfinite(self.time) and self.time > 0):
            raise DataError(f"time must be positive and finite, got {self.time!r}")
        if self.status not in (0, 1):
            raise DataError(f"status must be 0 or 1, got {self.status!r}")


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


class Dataset:
    """Immutable column store of right-censored observations.

    Parameters
    ----------
    times : array of positive finite reals
    status : array of 0/1 event indicators (1 = observed failure)
    covariates : (n, p) array, may have zero columns
    covariate_names : p identifiers
    require_event : reject all-censored data (needed for model fitting)
    """

    def __init__(self, times, status, covariates=None, covariate_names: Sequence[str] = (),
                 require_event: bool = True):
        times = np.asarray(times, dtype=float).ravel()
        n = times.size
        if n == 0:
            raise DataError("dataset is empty")
        status_arr = np.asarray(status).ravel()
        if status_arr.size != n:
            raise DataError("times and status differ in length")
        if covariates is None:
            covariates = np.empty((n, 0))
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates.reshape(n, -1) if covariates.size else np.empty((n, 0))
        names = tuple(str(c) for c in covariate_names)
        if covariates.shape != (n, len(names)):
            raise DataError(
                f"covariate matrix shape {covariates.shape} does not match "
                f"{n} rows x {len(names)} names")
        if not np.all(np.isfinite(times) & (times > 0)):
            bad = int(np.flatnonzero(~(np.isfinite(times) & (times > 0)))[0])
            raise RowError(bad, "time must be positive and finite")
        if not np.all((status_arr == 0) | (status_arr == 1)):
            bad = int(np.flatnonzero(~((status_arr == 0) | (status_arr == 1)))[0])
            raise RowError(bad, "status must be 0 or 1")
        if not np.all(np.isfinite(covariates)):
            raise DataError("covariates must be finite")
        if require_event and not np.any(status_arr == 1):
            raise DataError("dataset has no observed events")
        self._times = _frozen(times, float)
        self._status = _frozen(status_arr, np.int8)
        self._x = _frozen(covariates, float)
        self._names = names

    @property
    def times(self) -> np.ndarray:
        return self._times

    @property
    def status(self) -> np.ndarray:
        return self._status

    @property
    def covariates(self) -> np.ndarray:
        return self._x

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return self._names

    @property
    def n(self) -> int:
        return self._times.size

    @property
    def dim(self) -> int:
        return len(self._names)

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[SurvivalRecord]:
        for i in range(self.n):
            yield self.record(i)

    @property
    def records(self) -> list[SurvivalRecord]:
        return list(self)

    def record(self, i: int) -> SurvivalRecord:
        return SurvivalRecord(float(self._times[i]), int(self._status[i]),
                              tuple(float(v) for v in self._x[i]))

    @classmethod
    def from_records(cls, records: Sequence[SurvivalRecord], covariate_names: Sequence[str] = (),
                     require_event: bool = True) -> "Dataset":
        records = list(records)
        if not records:
            raise DataError("dataset is empty")
        p = len(covariate_names)
        for i, r in enumerate(records):
            if len(r.covariates) != p:
                raise RowError(i, f"expected {p} covariates, got {len(r.covariates)}")
        return cls([r.time for r in records], [r.status for r in records],
                   np.array([r.covariates for r in records], dtype=float).reshape(len(records), p),
                   covariate_names, require_event=require_event)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self._times[rows], self._status[rows], self._x[rows], self._names)

    def drop(self, i: int) -> "Dataset":
        keep = np.ones(self.n, dtype=bool)
        keep[i] = False
        return self.subset(keep)

    def with_covariates(self, covariates, names: Sequence[str]) -> "Dataset":
        return Dataset(self._times, self._status, covariates, names, require_event=False)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self._names == other._names
                and np.array_equal(self._times, other._times)
                and np.array_equal(self._status, other._status)
                and np.array_equal(self._x, other._x))

    def __repr__(self) -> str:
        return (f"Dataset(n={self.n}, covariates={list(self._names)}, "
                f"censored={censoring_fraction(self):.3f})")


def censoring_fraction(d: Dataset) -> float:
    """Fraction of right-censored observations."""
    return float(np.count_nonzero(d.status == 0)) / d.n


def _parse_float(text: str, row: int, column: str) -> float:
    if text is None or text.strip() == "":
        raise RowError(row, f"empty cell in column {column!r}")
    try:
        return float(text)
    except ValueError:
        raise RowError(row, f"non-numeric value {text!r} in column {column!r}") from None


def load_csv(path, time_col: str, status_col: str, covariate_cols: Sequence[str] = (),
             require_event: bool = True) -> Dataset:
    """Read a comma-separated file with a header row into a :class:`Dataset`.

    Row indices in error messages are 0-based data rows (header excluded).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: file is empty") from None
        index = {}
        for role, col in [("time_col", time_col), ("status_col", status_col)] + [
                ("covariate_cols", c) for c in covariate_cols]:
            if col not in header:
                raise SchemaError(f"{role} not found: column {col!r} missing from {path}")
            index[col] = header.index(col)

        times, status, xs = [], [], []
        for row, cells in enumerate(reader):
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) != len(header):
                raise RowError(row, f"expected {len(header)} cells, got {len(cells)}")
            t = _parse_float(cells[index[time_col]], row, time_col)
            if not (math.isfinite(t) and t > 0):
                raise RowError(row, f"time must be positive, got {cells[index[time_col]]!r}")
            s = _parse_float(cells[index[status_col]], row, status_col)
            if s not in (0.0, 1.0):
                raise RowError(row, f"status must be 0 or 1, got {cells[index[status_col]]!r}")
            times.append(t)
            status.append(int(s))
            xs.append([_parse_float(cells[index[c]], row, c) for c in covariate_cols])
    if not times:
        raise DataError(f"{path}: no data rows")
    return Dataset(times, status, np.array(xs, dtype=float).reshape(len(times), len(covariate_cols)),
                   covariate_cols, require_event=require_event)


def write_csv(d: Dataset, path, time_col: str = "time", status_col: str = "status") -> None:
    """Write a dataset so that :func:`load_csv` reproduces it exactly."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([time_col, status_col, *d.covariate_names])
        for t, s, x in zip(d.times, d.status, d.covariates):
            w.writerow([repr(float(t)), int(s), *(repr(float(v)) for v in x)])
