"""Latent crossing counts: truncated-normal Dirichlet-process mixture.

Cluster kernels are normals truncated below at -1/2 and discretized to the
nearest integer, so ``n = round(n*)`` with ``n* > -1/2``.  The mixture is a
stick-breaking DP truncated at ``C`` components.  One exposure sweep runs
cluster assignment, stick weights, continuization, cluster parameters and
the Metropolis-Hastings crossing update, in that order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import special

from .distributions import (
    InvalidParameterError,
    categorical_from_logweights,
    truncated_normal_draws,
)
from .rng import as_generator

CLUSTER_UPDATES = ("paper", "augmented")


@dataclass
class DpState:
    mu: np.ndarray
    sig2: np.ndarray
    V: np.ndarray
    w: np.ndarray
    precision: float = 1.0
    mu0: float = 0.0
    d0: float = 2.0
    e0: float = 10.0

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.sig2 = np.asarray(self.sig2, dtype=float)
        self.V = np.asarray(self.V, dtype=float)
        self.w = np.asarray(self.w, dtype=float)

    @property
    def C(self) -> int:
        return self.mu.shape[0]

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.sig2)

    def copy(self) -> "DpState":
        return replace(self, mu=self.mu.copy(), sig2=self.sig2.copy(), V=self.V.copy(), w=self.w.copy())

    def check(self):
        if not np.all(self.mu >= -0.5):
            raise FloatingPointError(f"cluster mean below -0.5: {self.mu}")
        if not np.all(self.sig2 > 0) or not np.all(np.isfinite(self.sig2)):
            raise FloatingPointError(f"invalid cluster variance: {self.sig2}")
        if sum(self.w.tolist()) != 1.0 or np.any(self.w < 0):
            raise FloatingPointError(f"cluster weights do not sum to one: {self.w}")


def stick_weights(V) -> np.ndarray:
    """w_1 = V_1, w_l = V_l prod_{i<l}(1 - V_i); the last weight takes the remainder."""
    V = np.asarray(V, dtype=float)
    w = np.empty_like(V)
    remaining = 1.0
    for l in range(V.shape[0] - 1):
        w[l] = V[l] * remaining
        remaining *= 1.0 - V[l]
    w[-1] = max(1.0 - sum(w[:-1].tolist()), 0.0)
    return w


def prior_dp_state(C, rng, precision=1.0, mu0=0.0, d0=2.0, e0=10.0) -> DpState:
    """Draw sticks and cluster parameters from the prior."""
    gen = as_generator(rng)
    V = np.ones(C)
    if C > 1:
        V[:-1] = gen.beta(1.0, precision, size=C - 1)
    tau = gen.gamma(d0, 1.0 / e0, size=C)
    sig2 = 1.0 / tau
    mu = truncated_normal_draws(np.full(C, mu0), np.sqrt(sig2), -0.5, np.inf, gen)
    return DpState(mu, sig2, V, stick_weights(V), precision, mu0, d0, e0)


# ---------------------------------------------------------------------------
# kernel


def _log_interval(a, b):
    """log(Phi(b) - Phi(a)) for standardized a < b, stable in both tails."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    right = a > 0
    hi = np.where(right, special.log_ndtr(-a), special.log_ndtr(b))
    lo = np.where(right, special.log_ndtr(-b), special.log_ndtr(a))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = hi + np.log1p(-np.exp(lo - hi))
    return np.where(lo == -np.inf, hi, out)


def log_kernel_pmf(n, mu, sigma):
    n = np.asarray(n, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(~(sigma > 0)):
        raise InvalidParameterError("kernel scale must be positive")
    num = _log_interval((n - 0.5 - mu) / sigma, (n + 0.5 - mu) / sigma)
    den = special.log_ndtr((mu + 0.5) / sigma)
    return num - den


def kernel_pmf(n, mu, sigma):
    """P(round(n*) = n) for n* ~ Normal(mu, sigma^2) truncated below at -1/2."""
    out = np.exp(log_kernel_pmf(n, mu, sigma))
    return float(out) if np.ndim(out) == 0 else out


def log_kernel_table(n_max, dp: DpState) -> np.ndarray:
    """(C, n_max + 1) table of log kernel probabilities for n = 0..n_max."""
    grid = np.arange(n_max + 1, dtype=float)
    return log_kernel_pmf(grid[None, :], dp.mu[:, None], dp.sigma[:, None])


def log_mixture_pmf(n_max, dp: DpState) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logw = np.log(dp.w)
    return special.logsumexp(logw[:, None] + log_kernel_table(n_max, dp), axis=0)


# ---------------------------------------------------------------------------
# sweep steps


def assign_clusters(n, dp: DpState, rng, table=None):
    """Draw a cluster index per cell with probability w_c p(n | cluster c).

    Returns ``(z, mu_cell, sigma_cell)`` with the same shape as ``n``.
    """
    n = np.asarray(n, dtype=np.int64)
    if table is None:
        table = log_kernel_table(int(n.max(initial=0)), dp)
    with np.errstate(divide="ignore"):
        logw = np.log(dp.w)[:, None] + table
    z = categorical_from_logweights(logw[:, n.ravel()].T, rng).reshape(n.shape)
    return z, dp.mu[z], dp.sigma[z]


def cluster_counts(z, C) -> np.ndarray:
    return np.bincount(np.asarray(z).ravel(), minlength=C)


def update_stick_weights(z, dp: DpState, rng):
    """V_l ~ Beta(1 + n_l, precision + sum_{i>l} n_i), V_C = 1.  Returns (V, w)."""
    gen = as_generator(rng)
    counts = cluster_counts(z, dp.C)
    tail = np.concatenate([np.cumsum(counts[::-1])[::-1][1:], [0]])
    V = np.ones(dp.C)
    if dp.C > 1:
        V[:-1] = gen.beta(1.0 + counts[:-1], dp.precision + tail[:-1])
    return V, stick_weights(V)


def sample_latent_continuous(n, mu, sigma, rng):
    """n* ~ Normal(mu, sigma^2) restricted to (n - 1/2, n + 1/2), via the inverse CDF."""
    n = np.asarray(n, dtype=float)
    lo, hi = n - 0.5, n + 0.5
    out = truncated_normal_draws(mu, sigma, lo, hi, rng)
    out = np.where(np.isfinite(out), out, n)
    # keep the open interval so rounding is unambiguous
    out = np.clip(out, np.nextafter(lo, hi), np.nextafter(hi, lo))
    return float(out) if np.ndim(out) == 0 else out


def _prior_cluster_draw(idx, dp: DpState, gen):
    tau = gen.gamma(dp.d0, 1.0 / dp.e0, size=idx.size)
    mu = truncated_normal_draws(np.full(idx.size, dp.mu0), 1.0 / np.sqrt(tau), -0.5, np.inf, gen)
    return mu, 1.0 / tau


def _rejected_draws(count, mean, sd, gen):
    """``count[l]`` normal draws below -1/2 for each cluster l, as (owner, values)."""
    owner = np.repeat(np.arange(count.size), count)
    x = truncated_normal_draws(mean[owner], sd[owner], -np.inf, -0.5, gen)
    return owner, x


def _augmented_update(nstar, z, dp: DpState, counts, gen, squared=True):
    """Exact Gibbs step for truncated-normal clusters by imputing rejected draws.

    A normal truncated at -1/2 is what rejection sampling returns; given the
    rejected draws (a negative-binomial number of them, each below -1/2) the
    likelihood is an ordinary normal one.  The prior truncation of mu is
    handled the same way.  Then 1/sigma^2 | mu and mu | sigma^2 are the usual
    conjugate draws.
    """
    C = dp.C
    mu, tau = dp.mu.copy(), 1.0 / dp.sig2
    sd = 1.0 / np.sqrt(tau)
    busy = counts > 0
    # rejected draws of the data
    keep_p = special.ndtr((mu + 0.5) * np.sqrt(tau))
    m_rej = np.where(busy, gen.negative_binomial(np.maximum(counts, 1), keep_p), 0)
    owner, x = _rejected_draws(m_rej, mu, sd, gen)
    # rejected draws of the prior on mu
    p0 = special.ndtr((dp.mu0 + 0.5) * np.sqrt(tau))
    j_rej = np.where(busy, gen.geometric(p0) - 1, 0)
    owner0, x0 = _rejected_draws(j_rej, np.full(C, dp.mu0), sd, gen)

    dev = np.concatenate([nstar - mu[z], x - mu[owner], x0 - dp.mu0, mu - dp.mu0])
    who = np.concatenate([z, owner, owner0, np.arange(C)])
    ss = np.bincount(who, weights=dev * dev if squared else dev, minlength=C)
    if not squared:
        ss = np.maximum(ss, 1e-12 - 2.0 * dp.e0)
    shape = dp.d0 + 0.5 * (counts + m_rej + 1 + j_rej)
    tau = gen.gamma(shape, 1.0 / (dp.e0 + 0.5 * ss))
    total = counts + m_rej
    sums = np.bincount(z, weights=nstar, minlength=C) + np.bincount(owner, weights=x, minlength=C)
    m = (dp.mu0 + sums) / (1.0 + total)
    mu = truncated_normal_draws(m, 1.0 / np.sqrt(tau * (1.0 + total)), -0.5, np.inf, gen)
    sig2 = 1.0 / tau
    # empty clusters come straight from the base distribution
    idle = np.flatnonzero(~busy)
    if idle.size:
        mu[idle], sig2[idle] = _prior_cluster_draw(idle, dp, gen)
    return mu, sig2


def update_cluster_params(nstar, z, dp: DpState, rng, method="augmented", squared=True):
    """Update (mu*_l, sigma*_l^2) for every cluster.

    ``method="paper"`` is the Normal-Gamma draw that ignores the truncation
    at -1/2 in the likelihood: 1/sigma^2 from its Gamma conditional, then mu
    from the truncated normal.  ``method="augmented"`` imputes the draws a
    rejection sampler would have discarded, which makes the update exact for
    the truncated kernel.  ``squared=False`` drops the square on the
    deviations in the rate term (fault injection).
    Returns a new DpState.
    """
    if method not in CLUSTER_UPDATES:
        raise ValueError(f"unknown cluster update {method!r}")
    gen = as_generator(rng)
    nstar = np.asarray(nstar, dtype=float).ravel()
    z = np.asarray(z).ravel()
    C = dp.C
    counts = np.bincount(z, minlength=C)
    if method == "augmented":
        mu, sig2 = _augmented_update(nstar, z, dp, counts, gen, squared)
        return replace(dp, mu=mu, sig2=sig2)
    counts = counts.astype(float)
    sums = np.bincount(z, weights=nstar, minlength=C)
    eta = np.divide(sums, counts, out=np.zeros(C), where=counts > 0)
    dev = nstar - eta[z]
    if squared:
        ss = np.bincount(z, weights=dev * dev, minlength=C)
        rate = dp.e0 + 0.5 * (ss + counts / (1.0 + counts) * (eta - dp.mu0) ** 2)
    else:
        lin = np.bincount(z, weights=dev, minlength=C)
        rate = dp.e0 + 0.5 * (lin + counts * counts / (1.0 + counts) * (eta - dp.mu0) ** 2)
        rate = np.maximum(rate, 1e-300)
    shape = dp.d0 + 0.5 * counts
    tau = gen.gamma(shape, 1.0 / rate)
    sig2 = 1.0 / tau
    m = (dp.mu0 + sums) / (1.0 + counts)
    mu = truncated_normal_draws(m, np.sqrt(sig2 / (1.0 + counts)), -0.5, np.inf, gen)
    return replace(dp, mu=mu, sig2=sig2)


def log_binomial_kernel(k, n, log_p, log_1mp):
    """log Binomial(k | n, p) with -inf where n < k."""
    k = np.asarray(k)
    n = np.asarray(n)
    valid = n >= k
    nn = np.where(valid, n, k).astype(float)
    kk = k.astype(float)
    with np.errstate(invalid="ignore"):
        out = (
            special.gammaln(nn + 1) - special.gammaln(kk + 1) - special.gammaln(nn - kk + 1)
            + np.where(kk > 0, kk * log_p, 0.0)
            + np.where(nn - kk > 0, (nn - kk) * log_1mp, 0.0)
        )
    return np.where(valid, out, -np.inf)


def mh_update_crossings(k, n, p, dp: DpState, rng, n_cap, psi=None, log_mix=None):
    """Independence Metropolis-Hastings step for the crossing counts.

    Proposals come from the current mixture pmf on 0..n_cap, so the Hastings
    ratio reduces to the ratio of binomial likelihoods; proposals below k
    are always rejected.  Returns ``(new_n, accepted_mask)``.
    """
    gen = as_generator(rng)
    k = np.asarray(k, dtype=np.int64)
    n = np.asarray(n, dtype=np.int64)
    if psi is not None:
        psi = np.asarray(psi, dtype=float)
        log_p = -np.logaddexp(0.0, -psi)
        log_1mp = -np.logaddexp(0.0, psi)
    else:
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore"):
            log_p = np.log(p)
            log_1mp = np.log1p(-p)
    if log_mix is None:
        log_mix = log_mixture_pmf(n_cap, dp)
    pmf = np.exp(log_mix - log_mix.max())
    cdf = np.cumsum(pmf)
    u = gen.random(n.shape) * cdf[-1]
    proposal = np.minimum(np.searchsorted(cdf, u, side="right"), n_cap)
    log_ratio = log_binomial_kernel(k, proposal, log_p, log_1mp) - log_binomial_kernel(k, n, log_p, log_1mp)
    accept = np.log(gen.random(n.shape)) < log_ratio
    return np.where(accept, proposal, n), accept


def refresh_latent(n, nstar, z, dp: DpState, moved, rng):
    """Redraw n* where the MH step moved n, so that n* still rounds to n.

    An exact draw of n* given (n, z, cluster params); cells that did not move
    keep their value.
    """
    moved = np.asarray(moved, dtype=bool)
    if not moved.any():
        return nstar
    out = np.array(nstar, dtype=float, copy=True)
    zm = z[moved]
    out[moved] = sample_latent_continuous(n[moved], dp.mu[zm], dp.sigma[zm], rng)
    return out


def exposure_sweep(n, k, psi, dp: DpState, rng, n_cap, method="augmented", squared=True):
    """One full pass of the exposure block.  Returns (n, nstar, z, dp, accepted)."""
    table = log_kernel_table(n_cap, dp)
    z, mu_c, sd_c = assign_clusters(n, dp, rng, table=table)
    V, w = update_stick_weights(z, dp, rng)
    dp = replace(dp, V=V, w=w)
    nstar = sample_latent_continuous(n, mu_c, sd_c, rng)
    dp = update_cluster_params(nstar, z, dp, rng, method=method, squared=squared)
    n, accepted = mh_update_crossings(k, n, None, dp, rng, n_cap, psi=psi)
    nstar = refresh_latent(n, nstar, z, dp, accepted, rng)
    return n, nstar, z, dp, accepted
