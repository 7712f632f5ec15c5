"""Scalar distribution primitives for log-location-scale failure-time models.

A failure time ``T`` follows ``log T = mu + sigma * W`` where ``W`` is a
standardized error: minimum extreme value (Weibull times), standard normal
(log-normal times) or standard logistic (log-logistic times).  Exponential
times are Weibull times with ``sigma = 1``.

All functions accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

import enum
import math

import numpy as np
from scipy import special

__all__ = [
    "DistFamily",
    "DomainError",
    "normal_cdf",
    "normal_quantile",
    "error_logsf",
    "error_logpdf",
    "error_cdf",
    "error_ppf",
    "error_isf",
    "open_uniform",
    "surv_logtime",
    "logpdf_logtime",
    "sample_logtime_error",
]


class DomainError(ValueError):
    """Argument outside the domain of a distribution function."""


class DistFamily(str, enum.Enum):
    WEIBULL = "weibull"
    LOGNORMAL = "lognormal"
    LOGLOGISTIC = "loglogistic"
    EXPONENTIAL = "exponential"

    @property
    def error(self) -> str:
        """Name of the standardized log-time error distribution."""
        return {
            "weibull": "extreme_value",
            "exponential": "extreme_value",
            "lognormal": "normal",
            "loglogistic": "logistic",
        }[self.value]

    @property
    def fixed_scale(self) -> bool:
        return self is DistFamily.EXPONENTIAL

    @classmethod
    def parse(cls, value: "str | DistFamily") -> "DistFamily":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown distribution family {value!r}") from None


def _out(x, scalar):
    return float(x) if scalar else x


# ---------------------------------------------------------------------------
# standard normal
# ---------------------------------------------------------------------------

# Wichura (1988), algorithm AS 241 (PPND16).
_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _poly(coef, x):
    out = np.zeros_like(x)
    for c in reversed(coef):
        out = out * x + c
    return out


def _ppnd16_lower(p):
    """AS 241 for ``p <= 0.5``; returns non-positive quantiles."""
    q = p - 0.5
    x = np.empty_like(p)
    central = np.abs(q) <= 0.425
    if central.any():
        qc = q[central]
        r = 0.180625 - qc * qc
        x[central] = qc * _poly(_A, r) / _poly(_B, r)
    tail = ~central
    if tail.any():
        r = np.sqrt(-np.log(p[tail]))
        near = r <= 5.0
        xt = np.empty_like(r)
        rn = r[near] - 1.6
        xt[near] = _poly(_C, rn) / _poly(_D, rn)
        rf = r[~near] - 5.0
        xt[~near] = _poly(_E, rf) / _poly(_F, rf)
        x[tail] = -xt
    return x


def normal_cdf(x):
    """Standard normal CDF."""
    return special.ndtr(x)


def normal_quantile(p):
    """Standard normal quantile function.

    AS 241 followed by one Halley step against the normal CDF.  The lower
    tail is always solved directly (``1 - p`` is exact for ``p >= 0.5``),
    so accuracy holds at both extremes.

    Raises
    ------
    DomainError
        If any ``p`` lies outside the open interval (0, 1).
    """
    scalar = np.ndim(p) == 0
    p = np.asarray(p, dtype=float)
    if not np.all((p > 0.0) & (p < 1.0)):
        raise DomainError("normal_quantile requires 0 < p < 1")
    upper = p > 0.5
    lo = np.where(upper, 1.0 - p, p)
    flat = np.atleast_1d(lo).astype(float)
    x = _ppnd16_lower(flat)
    # Halley refinement on the lower tail where ndtr has full relative accuracy.
    e = special.ndtr(x) - flat
    u = e * _SQRT_2PI * np.exp(0.5 * x * x)
    x = x - u / (1.0 + 0.5 * x * u)
    x = x.reshape(lo.shape)
    x = np.where(upper, -x, x)
    return _out(x, scalar)


# ---------------------------------------------------------------------------
# standardized log-time errors
# ---------------------------------------------------------------------------

def error_logsf(error: str, z):
    """log P(W > z) for the standardized error ``W``."""
    z = np.asarray(z, dtype=float)
    if error == "extreme_value":
        return -np.exp(z)
    if error == "normal":
        return special.log_ndtr(-z)
    if error == "logistic":
        return -np.logaddexp(0.0, z)
    raise DomainError(f"unknown error distribution {error!r}")


def error_logpdf(error: str, z):
    z = np.asarray(z, dtype=float)
    if error == "extreme_value":
        return z - np.exp(z)
    if error == "normal":
        return -0.5 * z * z - _LOG_SQRT_2PI
    if error == "logistic":
        return z - 2.0 * np.logaddexp(0.0, z)
    raise DomainError(f"unknown error distribution {error!r}")


def error_cdf(error: str, z):
    return -np.expm1(error_logsf(error, z))


def error_ppf(error: str, u):
    """Inverse CDF of the standardized error at ``u`` in (0, 1)."""
    scalar = np.ndim(u) == 0
    u = np.asarray(u, dtype=float)
    if error == "extreme_value":
        # S(x) = exp(-e^x)  =>  F^{-1}(u) = log(-log(1 - u))
        x = np.log(-np.log1p(-u))
    elif error == "normal":
        x = normal_quantile(u)
    elif error == "logistic":
        x = np.log(u) - np.log1p(-u)
    else:
        raise DomainError(f"unknown error distribution {error!r}")
    return _out(x, scalar)


def error_derivatives(error: str, z):
    """First and second derivatives of log f and log S of the error.

    Returns ``(dlogf, d2logf, dlogs, d2logs)`` evaluated at ``z``.
    """
    z = np.asarray(z, dtype=float)
    if error == "extreme_value":
        ez = np.exp(z)
        return 1.0 - ez, -ez, -ez, -ez
    if error == "normal":
        # inverse Mills ratio phi(z) / (1 - Phi(z)), computed in log space
        mills = np.exp(-0.5 * z * z - _LOG_SQRT_2PI - special.log_ndtr(-z))
        return -z, -np.ones_like(z), -mills, -mills * (mills - z)
    if error == "logistic":
        f = special.expit(z)
        v = f * (1.0 - f)
        return 1.0 - 2.0 * f, -2.0 * v, -f, -v
    raise DomainError(f"unknown error distribution {error!r}")


def _check_time_scale(t, sigma):
    t = np.asarray(t, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if not np.all(t > 0) or not np.all(np.isfinite(t)):
        raise DomainError("time must be positive and finite")
    if not np.all(sigma > 0):
        raise DomainError("sigma must be positive")
    return t, sigma


def surv_logtime(family, t, mu, sigma):
    """Survival probability P(T > t) when log T = mu + sigma * W."""
    scalar = all(np.ndim(a) == 0 for a in (t, mu, sigma))
    family = DistFamily.parse(family)
    t, sigma = _check_time_scale(t, sigma)
    z = (np.log(t) - mu) / sigma
    return _out(np.exp(error_logsf(family.error, z)), scalar)


def logpdf_logtime(family, t, mu, sigma):
    """Log density of T at t: log f_W(z) - log(sigma * t)."""
    scalar = all(np.ndim(a) == 0 for a in (t, mu, sigma))
    family = DistFamily.parse(family)
    t, sigma = _check_time_scale(t, sigma)
    logt = np.log(t)
    z = (logt - mu) / sigma
    return _out(error_logpdf(family.error, z) - np.log(sigma) - logt, scalar)


def error_isf(error: str, u):
    """Inverse survival function: the z with P(W > z) = u."""
    scalar = np.ndim(u) == 0
    u = np.asarray(u, dtype=float)
    if error == "extreme_value":
        x = np.log(-np.log(u))
    elif error in ("normal", "logistic"):
        x = -np.asarray(error_ppf(error, u))
    else:
        raise DomainError(f"unknown error distribution {error!r}")
    return _out(x, scalar)


def open_uniform(rng: np.random.Generator, size=None):
    """Uniform deviates strictly inside (0, 1) on a 2**-52 grid."""
    return (rng.integers(0, 2**52, size=size) + 0.5) / 2.0**52


def sample_logtime_error(family, rng: np.random.Generator, size=None):
    """Draw standardized log-time errors by inverting the survival function."""
    family = DistFamily.parse(family)
    return error_isf(family.error, open_uniform(rng, size))
