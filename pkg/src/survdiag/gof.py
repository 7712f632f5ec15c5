"""Goodness-of-fit tests for residual vectors.

* Shapiro-Wilk W with Royston's (1995, AS R94) coefficients and p-values,
  valid for 3 <= n <= 5000.
* One-sample Kolmogorov-Smirnov against a fully specified standard normal
  or unit exponential target.
* Lilliefors-corrected KS: parameters estimated from the sample, p-value
  calibrated by Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special

from .dist import normal_cdf, normal_quantile
from .rng import derive_seed, generator

__all__ = [
    "GofError",
    "GofResult",
    "shapiro_wilk",
    "ks_statistic",
    "ks_pvalue",
    "ks_test",
    "lcks_test",
    "TARGETS",
]

TARGETS = ("standard_normal", "unit_exponential")
EXACT_KS_MAX_N = 100


class GofError(ValueError):
    """Sample unsuitable for the requested test."""


@dataclass(frozen=True)
class GofResult:
    method: str
    statistic: float
    p_value: float
    n: int
    mc_replicates: int | None = None
    dropped: int | None = None
    seed: int | None = None

    def to_dict(self) -> dict:
        out = {"schema_version": 1, **asdict(self)}
        return {k: v for k, v in out.items() if v is not None}


# ---------------------------------------------------------------------------
# Shapiro-Wilk
# ---------------------------------------------------------------------------

_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(coef, x):
    """coef[0] + coef[1] x + coef[2] x^2 + ..."""
    out = 0.0
    for c in reversed(coef):
        out = out * x + c
    return out


@lru_cache(maxsize=256)
def _sw_coefficients(n: int) -> np.ndarray:
    """Full antisymmetric coefficient vector, unit norm, for sorted data."""
    half = n // 2
    if n == 3:
        a = np.array([math.sqrt(0.5)])
    else:
        m = -normal_quantile((np.arange(1, half + 1) - 0.375) / (n + 0.25))
        summ2 = 2.0 * float(m @ m)
        ssumm2 = math.sqrt(summ2)
        rsn = 1.0 / math.sqrt(n)
        a = m / ssumm2
        a1 = _poly(_C1, rsn) + m[0] / ssumm2
        if n > 5:
            a2 = _poly(_C2, rsn) + m[1] / ssumm2
            fac = math.sqrt((summ2 - 2.0 * m[0] ** 2 - 2.0 * m[1] ** 2)
                            / (1.0 - 2.0 * a1 ** 2 - 2.0 * a2 ** 2))
            a = m / fac
            a[0], a[1] = a1, a2
        else:
            fac = math.sqrt((summ2 - 2.0 * m[0] ** 2) / (1.0 - 2.0 * a1 ** 2))
            a = m / fac
            a[0] = a1
    coef = np.zeros(n)
    coef[:half] = -a
    coef[n - half:] = a[::-1]
    coef.setflags(write=False)
    return coef


def _sw_pvalue(w: float, n: int) -> float:
    if n == 3:
        p = 6.0 / math.pi * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return min(max(p, 0.0), 1.0)
    w1 = 1.0 - w
    if w1 <= 0.0:
        return 1.0
    y = math.log(w1)
    if n <= 11:
        gamma = _poly(_G, n)
        if y >= gamma:
            return 1e-99
        y = -math.log(gamma - y)
        m = _poly(_C3, n)
        s = math.exp(_poly(_C4, n))
    else:
        xx = math.log(n)
        m = _poly(_C5, xx)
        s = math.exp(_poly(_C6, xx))
    return float(special.ndtr(-(y - m) / s))


def shapiro_wilk(x) -> GofResult:
    """Shapiro-Wilk normality test.

    Raises
    ------
    GofError
        If ``n`` is outside [3, 5000] or the sample has zero range.
    """
    x = np.sort(np.asarray(x, dtype=float).ravel(), kind="stable")
    n = x.size
    if n < 3 or n > 5000:
        raise GofError(f"Shapiro-Wilk requires 3 <= n <= 5000, got n = {n}")
    if not np.all(np.isfinite(x)):
        raise GofError("sample contains non-finite values")
    if x[-1] - x[0] <= 0.0:
        raise GofError("sample has zero variance")
    a = _sw_coefficients(n)
    xc = (x - x.mean()) / (x[-1] - x[0])
    ssx = float(xc @ xc)
    sax = float(a @ xc)
    # squared correlation with the unit-norm, zero-sum coefficient vector
    w = min(sax * sax / ssx, 1.0)
    return GofResult("sw", w, _sw_pvalue(w, n), n)


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov
# ---------------------------------------------------------------------------

def _target_cdf(target: str) -> Callable[[np.ndarray], np.ndarray]:
    if target in ("standard_normal", "normal"):
        return normal_cdf
    if target in ("unit_exponential", "exponential"):
        return lambda v: -np.expm1(-np.maximum(v, 0.0))
    raise GofError(f"unknown KS target {target!r}; expected one of {TARGETS}")


def ks_statistic(x, cdf) -> np.ndarray:
    """sup |F_n - F| for each row of ``x`` (1-D input gives a scalar)."""
    x = np.asarray(x, dtype=float)
    xs = np.sort(x, axis=-1)
    n = xs.shape[-1]
    f = cdf(xs)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - f, axis=-1)
    d_minus = np.max(f - (i - 1) / n, axis=-1)
    return np.maximum(d_plus, d_minus)


def _mtw_log_cdf(n: int, d: float) -> float:
    """log P(D_n < d) by the Marsaglia-Tsang-Wang matrix method."""
    k = int(n * d) + 1
    m = 2 * k - 1
    h = k - n * d
    idx = np.arange(m)
    H = (idx[:, None] - idx[None, :] + 1 >= 0).astype(float)
    hp = h ** (idx + 1)
    H[:, 0] -= hp
    H[m - 1, :] -= hp[::-1]
    if 2 * h - 1 > 0:
        H[m - 1, 0] += (2 * h - 1) ** m
    diff = idx[:, None] - idx[None, :] + 1
    pos = diff > 0
    H[pos] /= special.factorial(diff[pos])

    def mul(A, ea, B, eb):
        C = A @ B
        e = ea + eb
        big = np.max(np.abs(C))
        if big > 1e140:
            C = C / big
            e += math.log(big)
        return C, e

    result, er = None, 0.0
    base, eb = H, 0.0
    p = n
    while p:
        if p & 1:
            result, er = (base, eb) if result is None else mul(result, er, base, eb)
        p >>= 1
        if p:
            base, eb = mul(base, eb, base, eb)
    q = result[k - 1, k - 1]
    if q <= 0:
        return -math.inf
    return math.log(q) + er + math.lgamma(n + 1) - n * math.log(n)


def _kolmogorov_sf(lam: float) -> float:
    if lam <= 0.0:
        return 1.0
    if lam < 0.2:
        return 1.0
    k = np.arange(1, 101)
    terms = 2.0 * (-1.0) ** (k - 1) * np.exp(-2.0 * k * k * lam * lam)
    return float(min(max(terms.sum(), 0.0), 1.0))


def ks_pvalue(d: float, n: int) -> float:
    """P(D_n >= d) for a fully specified continuous target.

    Exact (Marsaglia-Tsang-Wang) for n <= 100; otherwise the asymptotic
    Kolmogorov distribution at (sqrt(n) + 0.12 + 0.11/sqrt(n)) * d.
    """
    if d <= 0.5 / n:
        return 1.0
    if d >= 1.0:
        return 0.0
    if n <= EXACT_KS_MAX_N:
        return float(min(max(-math.expm1(_mtw_log_cdf(n, d)), 0.0), 1.0))
    rn = math.sqrt(n)
    return _kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d)


def ks_test(x, target: str = "standard_normal") -> GofResult:
    """One-sample KS test against a target with no estimated parameters."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 1:
        raise GofError("KS test needs at least one observation")
    if not np.all(np.isfinite(x)):
        raise GofError("sample contains non-finite values")
    cdf = _target_cdf(target)
    d = float(ks_statistic(x, cdf))
    method = "ks_normal" if cdf is normal_cdf else "ks_exponential"
    return GofResult(method, d, ks_pvalue(d, x.size), int(x.size))


# ---------------------------------------------------------------------------
# Lilliefors-corrected KS
# ---------------------------------------------------------------------------

def _fit_normal(x):
    x = np.asarray(x, dtype=float)
    return x.mean(axis=-1), x.std(axis=-1, ddof=1)


def _fit_exponential(x):
    return (np.asarray(x, dtype=float).mean(axis=-1),)


def _family(target: str):
    if target in ("standard_normal", "normal"):
        def cdf(v, mu, sd):
            return normal_cdf((v - mu[..., None]) / sd[..., None])

        def sample(rng, params, size):
            mu, sd = params
            return mu + sd * rng.standard_normal(size)

        def valid(params):
            return np.isfinite(params[0]) & (params[1] > 0)

        return "lcks_normal", _fit_normal, cdf, sample, valid
    if target in ("unit_exponential", "exponential"):
        def cdf(v, mean):
            return -np.expm1(-np.maximum(v, 0.0) / mean[..., None])

        def sample(rng, params, size):
            return params[0] * rng.standard_exponential(size)

        def valid(params):
            return np.isfinite(params[0]) & (params[0] > 0)

        return "lcks_exponential", _fit_exponential, cdf, sample, valid
    raise GofError(f"unknown LCKS target {target!r}; expected one of {TARGETS}")


def lcks_test(x, target: str = "standard_normal", fit_proc=None, mc_replicates: int = 1000,
              seed: int = 0) -> GofResult:
    """Lilliefors-corrected KS test.

    The statistic compares ``x`` with the target family at parameters
    estimated from ``x``.  The p-value is the fraction of Monte Carlo
    samples, drawn from the fitted target and re-estimated, whose statistic
    is at least the observed one.  Replicate ``r`` uses a generator keyed by
    ``(seed, r)``; replicates whose estimator fails are dropped and counted.

    ``fit_proc`` maps a sample (1-D array) to the target's parameter tuple:
    ``(mean, sd)`` for normal, ``(mean,)`` for exponential.
    """
    if mc_replicates < 500:
        raise GofError("LCKS needs at least 500 Monte Carlo replicates")
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 2 or not np.all(np.isfinite(x)):
        raise GofError("LCKS needs at least two finite observations")
    method, default_fit, cdf, sample, valid = _family(target)
    fit = fit_proc or default_fit

    def estimate(rows):
        if fit_proc is None:
            return tuple(np.atleast_1d(np.asarray(p, dtype=float)) for p in fit(rows))
        out = []
        for row in rows:
            try:
                out.append(tuple(float(p) for p in fit(row)))
            except Exception:
                out.append(tuple(np.nan for _ in range(len(out[0]) if out else 2)))
        return tuple(np.array(col) for col in zip(*out))

    params = estimate(x[None, :])
    if not bool(valid(params)[0]):
        raise GofError("parameter estimation failed on the observed sample")
    d_obs = float(ks_statistic(x[None, :], lambda v: cdf(v, *params))[0])

    sims = np.empty((mc_replicates, n))
    for r in range(mc_replicates):
        rng = generator(derive_seed(seed, r))
        sims[r] = sample(rng, tuple(float(p[0]) for p in params), n)
    sim_params = estimate(sims)
    ok = valid(sim_params)
    with np.errstate(invalid="ignore", divide="ignore"):
        d_sim = ks_statistic(sims, lambda v: cdf(v, *sim_params))
    ok &= np.isfinite(d_sim)
    used = int(ok.sum())
    if used == 0:
        raise GofError("every Monte Carlo replicate failed")
    p = float(np.count_nonzero(d_sim[ok] >= d_obs)) / used
    return GofResult(method, d_obs, p, n, mc_replicates=used,
                     dropped=mc_replicates - used, seed=int(seed))
