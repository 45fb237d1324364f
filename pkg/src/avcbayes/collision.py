"""Collision-probability block: Polya-Gamma augmentation and conjugate updates.

Given crossing counts ``n`` the counts ``k`` are Binomial(n, logistic(psi))
with psi = alpha_t I + beta'x + gamma_t'y.  Conditional on omega ~ PG(n, psi)
the likelihood is Gaussian in (beta, alpha_t, gamma_t), with pseudo-response
kappa = k - n/2.  Cells with n = 0 have omega = kappa = 0 and drop out.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from .distributions import DecompositionError, polya_gamma_draws
from .rng import as_generator


def collision_prob(psi):
    out = special.expit(np.asarray(psi, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def pseudo_response(k, n):
    return np.asarray(k, dtype=float) - 0.5 * np.asarray(n, dtype=float)


def augment_polya_gamma(n, psi, rng, threshold=30):
    """omega ~ PG(n, psi) cell-wise; exactly zero where n == 0."""
    return polya_gamma_draws(n, psi, rng, threshold)


def _batched_gaussian(precision, linear, noise, what):
    """Draws mean + L^{-T} noise for a stack of (d, d) precision matrices."""
    try:
        chol = np.linalg.cholesky(precision)
    except np.linalg.LinAlgError as exc:
        conds = np.linalg.cond(precision)
        raise DecompositionError(
            f"{what} is not positive definite (condition numbers {np.array2string(np.atleast_1d(conds), precision=3)})",
            float(np.max(conds)),
        ) from exc
    mean = np.linalg.solve(precision, linear[..., None])[..., 0]
    offset = np.linalg.solve(np.swapaxes(chol, -1, -2), noise[..., None])[..., 0]
    return mean + offset, mean


def beta_posterior(omega, kappa, x, offset, prior_precision):
    """Precision and linear term of the Gaussian conditional of beta.

    ``offset`` holds alpha_t I + gamma_t'y per cell.
    """
    w_seg = omega.sum(axis=1)
    precision = (x * w_seg[:, None]).T @ x + prior_precision
    linear = x.T @ (kappa - omega * offset).sum(axis=1)
    return precision, linear


def update_beta(omega, kappa, x, offset, prior_precision, rng):
    gen = as_generator(rng)
    precision, linear = beta_posterior(omega, kappa, x, offset, prior_precision)
    draw, _ = _batched_gaussian(precision, linear, gen.standard_normal(linear.shape[0]), "beta precision")
    return draw


def time_varying_design(indicator, y):
    """z[s, t] = [I, y'] with shape (S, T, 1 + Q)."""
    return np.concatenate([np.asarray(indicator, dtype=float)[..., None], y], axis=2)


def time_varying_posterior(omega, kappa, zdesign, xb, prior_precision, months=None):
    """Per-month precision (T', d, d) and linear term (T', d)."""
    if months is not None:
        omega, kappa, zdesign = omega[:, months], kappa[:, months], zdesign[:, months]
    precision = np.einsum("st,sti,stj->tij", omega, zdesign, zdesign) + prior_precision
    resid = kappa - omega * xb[:, None]
    linear = np.einsum("sti,st->ti", zdesign, resid)
    return precision, linear


def update_time_varying(omega, kappa, zdesign, xb, prior_precision, rng, months=None):
    """Draw [alpha_t, gamma_t] for the given months (all by default).

    Returns an array of shape (len(months), 1 + Q); months are independent.
    """
    gen = as_generator(rng)
    precision, linear = time_varying_posterior(omega, kappa, zdesign, xb, prior_precision, months)
    draw, _ = _batched_gaussian(precision, linear, gen.standard_normal(linear.shape), "time-varying precision")
    return draw


def indicator_logodds(omega, kappa, psi_without_alpha, alpha, q):
    """log P(I=1|.) - log P(I=0|.) with the alpha term switched on inside P1."""
    alpha = np.asarray(alpha, dtype=float)[None, :]
    q = np.asarray(q, dtype=float)[None, :]
    with np.errstate(divide="ignore"):
        prior = np.log(q) - np.log1p(-q)
    lik = kappa * alpha - 0.5 * omega * alpha * (2.0 * psi_without_alpha + alpha)
    return prior + lik


def update_indicators(omega, kappa, psi_without_alpha, alpha, q, rng):
    gen = as_generator(rng)
    prob = special.expit(indicator_logodds(omega, kappa, psi_without_alpha, alpha, q))
    return (gen.random(prob.shape) < prob).astype(np.int8)


def update_q(indicator, rng, a0=1.0, b0=1.0):
    """q_t ~ Beta(a0 + sum_s I, b0 + sum_s (1 - I)) for every month."""
    gen = as_generator(rng)
    indicator = np.asarray(indicator)
    ones = indicator.sum(axis=0)
    zeros = indicator.shape[0] - ones
    return gen.beta(a0 + ones, b0 + zeros)

