"""Sampling kernels and special distribution functions.

All samplers take a :class:`~avcbayes.rng.RandomStream` (or a bare numpy
``Generator``) and consume it in a fixed, index-ordered sequence so that a
replay with the same stream reproduces every draw bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import linalg, special

from .rng import as_generator

__all__ = [
    "InvalidParameterError",
    "DecompositionError",
    "TruncatedNormalSpec",
    "normal_cdf",
    "normal_logcdf",
    "normal_inv_cdf",
    "polya_gamma_mean",
    "polya_gamma_var",
    "sample_polya_gamma",
    "polya_gamma_draws",
    "sample_truncated_normal",
    "truncated_normal_draws",
    "sample_mvn",
    "sample_gaussian_precision",
    "sample_gamma",
    "sample_beta",
    "sample_categorical",
    "categorical_from_logweights",
]

PG_NORMAL_THRESHOLD = 30
# Inverse-CDF sampling is used unless the whole interval sits this many
# standard deviations out in one tail (retained mass < ~3e-7).
TAIL_SWITCH = 5.0


class InvalidParameterError(ValueError):
    pass


class DecompositionError(np.linalg.LinAlgError):
    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


def _check_std(std):
    std = np.asarray(std, dtype=float)
    if np.any(~(std > 0)):
        raise InvalidParameterError("standard deviation must be positive")
    return std


def _scalarize(x):
    return float(x) if np.ndim(x) == 0 else x


def normal_cdf(x, mean=0.0, std=1.0):
    std = _check_std(std)
    return _scalarize(special.ndtr((np.asarray(x, dtype=float) - mean) / std))


def normal_logcdf(x, mean=0.0, std=1.0):
    std = _check_std(std)
    return _scalarize(special.log_ndtr((np.asarray(x, dtype=float) - mean) / std))


def normal_inv_cdf(u, mean=0.0, std=1.0):
    std = _check_std(std)
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0) & (u < 1))):
        raise InvalidParameterError("quantile level must lie in the open interval (0, 1)")
    return _scalarize(mean + std * special.ndtri(u))


# ---------------------------------------------------------------------------
# Polya-Gamma


def polya_gamma_mean(b, c):
    """E[PG(b, c)] = b/(2c) tanh(c/2), with limit b/4 at c = 0."""
    b = np.asarray(b, dtype=float)
    c = np.abs(np.asarray(c, dtype=float))
    small = c < 1e-6
    safe = np.where(small, 1.0, c)
    out = np.where(small, b * (0.25 - c**2 / 48.0), b / (2.0 * safe) * np.tanh(safe / 2.0))
    return _scalarize(out)


def polya_gamma_var(b, c):
    """Var[PG(b, c)] = b/(4c^3) (sinh c - c) sech^2(c/2), with limit b/24 at c = 0."""
    b = np.asarray(b, dtype=float)
    c = np.abs(np.asarray(c, dtype=float))
    small = c < 1e-3
    safe = np.where(small, 1.0, np.minimum(c, 700.0))
    big = b / (4.0 * safe**3) * (np.sinh(safe) - safe) / np.cosh(safe / 2.0) ** 2
    out = np.where(small, b * (1.0 / 24.0 - c**2 / 240.0), big)
    return _scalarize(out)


_TRUNC = 0.64
_PI = math.pi
_SQRT2 = math.sqrt(2.0)


@numba.njit(cache=True)
def _log_pnorm(x):
    if x > -35.0:
        return math.log(0.5 * math.erfc(-x / _SQRT2))
    x2 = x * x
    return -0.5 * x2 - math.log(-x) - 0.5 * math.log(2.0 * _PI) + math.log1p(-1.0 / x2 + 3.0 / (x2 * x2))


@numba.njit(cache=True)
def _series_coef(n, x):
    k = n + 0.5
    if x > _TRUNC:
        return _PI * k * math.exp(-k * k * _PI * _PI * x / 2.0)
    return (2.0 / (_PI * x)) ** 1.5 * _PI * k * math.exp(-2.0 * k * k / x)


@numba.njit(cache=True)
def _exp_mass(z):
    t = _TRUNC
    fz = _PI * _PI / 8.0 + z * z / 2.0
    b = math.sqrt(1.0 / t) * (t * z - 1.0)
    a = -math.sqrt(1.0 / t) * (t * z + 1.0)
    x0 = math.log(fz) + fz * t
    xb = x0 - z + _log_pnorm(b)
    xa = x0 + z + _log_pnorm(a)
    qdivp = 4.0 / _PI * (math.exp(xb) + math.exp(xa))
    return 1.0 / (1.0 + qdivp)


@numba.njit(cache=True)
def _truncated_inv_gauss(z, gen):
    # inverse Gaussian(1/z, 1) restricted to (0, TRUNC)
    t = _TRUNC
    if z < 1.0 / t:
        while True:
            e1 = gen.standard_exponential()
            e2 = gen.standard_exponential()
            while e1 * e1 > 2.0 * e2 / t:
                e1 = gen.standard_exponential()
                e2 = gen.standard_exponential()
            x = t / ((1.0 + t * e1) ** 2)
            if gen.random() <= math.exp(-0.5 * z * z * x):
                return x
    mu = 1.0 / z
    x = t + 1.0
    while x >= t:
        y = gen.standard_normal()
        y = y * y
        x = mu + 0.5 * mu * mu * y - 0.5 * mu * math.sqrt(4.0 * mu * y + (mu * y) ** 2)
        if gen.random() > mu / (mu + x):
            x = mu * mu / x
    return x


@numba.njit(cache=True)
def _pg_one(z, mass, gen):
    """One PG(1, 2z) draw by alternating-series rejection."""
    k_rate = _PI * _PI / 8.0 + z * z / 2.0
    while True:
        if gen.random() < mass:
            x = _TRUNC + gen.standard_exponential() / k_rate
        else:
            x = _truncated_inv_gauss(z, gen)
        s = _series_coef(0, x)
        y = gen.random() * s
        n = 0
        while True:
            n += 1
            if n % 2 == 1:
                s -= _series_coef(n, x)
                if y <= s:
                    return 0.25 * x
            else:
                s += _series_coef(n, x)
                if y > s:
                    break


@numba.njit(cache=True)
def _pg_fill(b, c, threshold, gen, out):
    for i in range(b.shape[0]):
        bi = b[i]
        if bi <= 0:
            out[i] = 0.0
            continue
        ci = abs(c[i])
        if bi > threshold:
            if ci < 1e-3:
                m = bi * (0.25 - ci * ci / 48.0)
                v = bi * (1.0 / 24.0 - ci * ci / 240.0)
            else:
                cc = min(ci, 700.0)
                m = bi / (2.0 * ci) * math.tanh(ci / 2.0)
                v = bi / (4.0 * cc**3) * (math.sinh(cc) - cc) / math.cosh(cc / 2.0) ** 2
            d = m + math.sqrt(v) * gen.standard_normal()
            out[i] = max(d, 1e-12 * m)
            continue
        z = 0.5 * ci
        mass = _exp_mass(z)
        s = 0.0
        for _ in range(bi):
            s += _pg_one(z, mass, gen)
        out[i] = s


def polya_gamma_draws(b, c, rng, threshold=PG_NORMAL_THRESHOLD):
    """Vectorized PG(b, c) draws; entries with b == 0 return exactly 0.

    Integer ``b`` up to ``threshold`` is handled exactly as a sum of ``b``
    PG(1, c) draws; larger ``b`` uses a moment-matched normal.
    """
    gen = as_generator(rng)
    b = np.ascontiguousarray(b, dtype=np.int64)
    c = np.ascontiguousarray(np.broadcast_to(c, b.shape), dtype=float)
    flat_b, flat_c = b.ravel(), c.ravel()
    if np.any(flat_b < 0):
        raise InvalidParameterError("PG shape must be nonnegative")
    out = np.empty(flat_b.shape[0])
    _pg_fill(flat_b, flat_c, int(threshold), gen, out)
    return out.reshape(b.shape)


def sample_polya_gamma(b, c, rng, size=None, threshold=PG_NORMAL_THRESHOLD):
    """Draw from PG(b, c) for integer ``b >= 1``."""
    if np.any(np.asarray(b) <= 0) or np.any(np.asarray(b) != np.floor(b)):
        raise InvalidParameterError("PG shape b must be a positive integer")
    if size is not None:
        b = np.broadcast_to(b, size)
        c = np.broadcast_to(c, size)
    out = polya_gamma_draws(b, c, rng, threshold)
    return _scalarize(out)


# ---------------------------------------------------------------------------
# Truncated normal


@dataclass(frozen=True)
class TruncatedNormalSpec:
    mean: float
    std: float
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if not self.std > 0:
            raise InvalidParameterError(f"std must be positive, got {self.std}")
        if not self.lower < self.upper:
            raise InvalidParameterError("empty truncation interval")


def _upper_tail(a, b, gen):
    """Standard normal restricted to [a, b] with a >= TAIL_SWITCH."""
    out = np.empty(a.shape)
    todo = np.arange(a.shape[0])
    while todo.size:
        aa, bb = a[todo], b[todo]
        width = bb - aa
        u = gen.random(todo.size)
        # exponential(rate a) restricted to [0, width]
        span = -np.expm1(-aa * np.where(np.isfinite(width), width, np.inf))
        x = aa - np.log1p(-u * span) / aa
        accept = gen.random(todo.size) <= np.exp(-0.5 * (x - aa) ** 2)
        out[todo[accept]] = x[accept]
        todo = todo[~accept]
    return out


def _standard_truncated(a, b, gen):
    z = np.empty(a.shape)
    hi = a >= TAIL_SWITCH
    lo = b <= -TAIL_SWITCH
    mid = ~(hi | lo)
    if mid.any():
        am, bm = a[mid], b[mid]
        u = gen.random(am.shape[0])
        # invert on whichever side keeps the probabilities away from 1
        right = am > 0
        sa, sb = special.ndtr(-am), special.ndtr(-bm)
        ca, cb = special.ndtr(am), special.ndtr(bm)
        with np.errstate(divide="ignore", invalid="ignore"):
            zr = -special.ndtri(sb + u * (sa - sb))
            zl = special.ndtri(ca + u * (cb - ca))
        zm = np.where(right, zr, zl)
        z[mid] = np.clip(np.nan_to_num(zm, nan=0.0), am, bm)
    if hi.any():
        z[hi] = _upper_tail(a[hi], b[hi], gen)
    if lo.any():
        z[lo] = -_upper_tail(-b[lo], -a[lo], gen)
    return z


def truncated_normal_draws(mean, std, lower, upper, rng):
    """Vectorized draws from Normal(mean, std^2) restricted to [lower, upper]."""
    gen = as_generator(rng)
    mean, std, lower, upper = np.broadcast_arrays(
        np.asarray(mean, float), _check_std(std), np.asarray(lower, float), np.asarray(upper, float)
    )
    shape = mean.shape
    mean, std, lower, upper = (np.ravel(v) for v in (mean, std, lower, upper))
    a = (lower - mean) / std
    b = (upper - mean) / std
    if np.any(~(a < b)):
        raise InvalidParameterError("empty truncation interval")
    x = mean + std * _standard_truncated(a, b, gen)
    x = np.clip(x, lower, upper)
    return x.reshape(shape)


def sample_truncated_normal(spec: TruncatedNormalSpec, rng, size=None):
    out = truncated_normal_draws(
        np.broadcast_to(spec.mean, size or ()), spec.std, spec.lower, spec.upper, rng
    )
    return _scalarize(out)


# ---------------------------------------------------------------------------
# Gaussian, Gamma, Beta, categorical


def _cholesky(matrix, what):
    try:
        return linalg.cholesky(matrix, lower=True)
    except linalg.LinAlgError as exc:
        try:
            cond = float(np.linalg.cond(matrix))
        except np.linalg.LinAlgError:
            cond = math.inf
        raise DecompositionError(
            f"{what} is not positive definite (condition number {cond:.3e})", cond
        ) from exc


def sample_mvn(mean, covariance, rng):
    gen = as_generator(rng)
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    covariance = np.atleast_2d(np.asarray(covariance, dtype=float))
    if covariance.shape != (mean.size, mean.size):
        raise InvalidParameterError(
            f"covariance shape {covariance.shape} does not match mean of length {mean.size}"
        )
    if not np.allclose(covariance, covariance.T):
        raise DecompositionError("covariance is not symmetric")
    chol = _cholesky(covariance, "covariance")
    return mean + chol @ gen.standard_normal(mean.size)


def sample_gaussian_precision(precision, linear, rng, what="precision matrix"):
    """Draw from N(Q^{-1} h, Q^{-1}) given precision Q and linear term h.

    Returns ``(draw, mean)``.  No explicit inverse is formed.
    """
    gen = as_generator(rng)
    chol = _cholesky(precision, what)
    mean = linalg.cho_solve((chol, True), linear)
    noise = linalg.solve_triangular(chol.T, gen.standard_normal(len(linear)), lower=False)
    return mean + noise, mean


def sample_gamma(shape, rate, rng, size=None):
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(~(shape > 0)) or np.any(~(rate > 0)):
        raise InvalidParameterError("Gamma shape and rate must be positive")
    return _scalarize(as_generator(rng).gamma(shape, 1.0 / rate, size=size))


def sample_beta(a, b, rng, size=None):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(~(a > 0)) or np.any(~(b > 0)):
        raise InvalidParameterError("Beta parameters must be positive")
    return _scalarize(as_generator(rng).beta(a, b, size=size))


def sample_categorical(weights, rng):
    """Index (0-based) drawn with probability proportional to ``weights``."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0 or np.any(w < 0) or not np.isfinite(w).all() or w.sum() <= 0:
        raise InvalidParameterError("categorical weights must be nonnegative with positive sum")
    cdf = np.cumsum(w)
    u = as_generator(rng).random() * cdf[-1]
    return min(int(np.searchsorted(cdf, u, side="right")), w.size - 1)


def categorical_from_logweights(logw, rng):
    """Row-wise categorical draws from unnormalized log weights of shape (N, C)."""
    logw = np.asarray(logw, dtype=float)
    m = np.max(logw, axis=1, keepdims=True)
    p = np.exp(logw - m)
    cdf = np.cumsum(p, axis=1)
    u = as_generator(rng).random(logw.shape[0]) * cdf[:, -1]
    idx = (cdf <= u[:, None]).sum(axis=1)
    return np.minimum(idx, logw.shape[1] - 1)
