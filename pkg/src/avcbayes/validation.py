"""Joint-distribution ("getting it right") test of the Gibbs sampler.

Two simulators should agree on the joint law of parameters and data:

* marginal-conditional: parameters from the prior, then data given them;
* successive-conditional: alternate one Gibbs sweep with regenerating the
  data from the current parameters.

Test statistics are compared with z-scores whose successive-conditional
standard errors use the chain's effective sample size, so autocorrelation
is accounted for.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .config import RunConfig
from .data import Dataset
from .diagnostics import effective_sample_size
from .rng import RandomStream
from .sampler import GibbsSampler, simulate_prior_state

GEWEKE_DEFAULTS = dict(
    iterations=2, burn_in=0, chains=1, beta_prior_var=1.0, tv_prior_var=1.0, n_cap=50, store_cells=False,
)


@dataclass
class JointTestReport:
    names: list
    z_scores: np.ndarray
    marginal_means: np.ndarray
    successive_means: np.ndarray
    cycles: int

    @property
    def fraction_within(self) -> float:
        return float(np.mean(np.abs(self.z_scores) <= 3.0))

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z_scores)))

    def passed(self, within=0.95) -> bool:
        return self.fraction_within >= within

    def lines(self):
        for name, z, a, b in zip(self.names, self.z_scores, self.marginal_means, self.successive_means):
            flag = "" if abs(z) <= 3 else "  <--"
            yield f"{name:>16s}  marginal {a: .5f}  successive {b: .5f}  z {z: .2f}{flag}"


def _statistic_names(P, T, Q):
    names = [f"beta[{j}]" for j in range(P)] + [f"beta[{j}]^2" for j in range(P)]
    names += [f"alpha0[{t}]" for t in range(T)] + [f"alpha0[{t}]^2" for t in range(T)]
    names += [f"gamma[{t},{q}]" for t in range(T) for q in range(Q)]
    names += [f"q[{t}]" for t in range(T)]
    names += ["mean n", "mean n^2", "frac n>0", "mean k", "frac k>0", "mean I", "mean n*p"]
    # cluster summaries that do not depend on labels
    names += ["mean log sig2", "mean mu", "sum w^2"]
    return names


def _statistics(sampler: GibbsSampler, state, k) -> np.ndarray:
    p = special.expit(sampler.psi(state))
    n = state.n.astype(float)
    return np.concatenate([
        state.beta, state.beta**2, state.alpha, state.alpha**2, state.gamma.ravel(), state.q,
        [n.mean(), (n * n).mean(), (n > 0).mean(), k.mean(), (k > 0).mean(), state.indicator.mean(), (n * p).mean()],
        [np.log(state.dp.sig2).mean(), state.dp.mu.mean(), (state.dp.w**2).sum()],
    ])


def joint_distribution_test(config: RunConfig = None, seed=0, segments=20, months=3, covariates=2,
                            time_varying=1, cycles=10_000, burn_in=200,
                            faults=(), cluster_update=None) -> JointTestReport:
    """Compare marginal-conditional and successive-conditional simulators."""
    if config is None:
        config = RunConfig(seed=seed, **GEWEKE_DEFAULTS)
    master = RandomStream(seed, 0).generator
    x = master.standard_normal((segments, covariates))
    y = master.standard_normal((segments, months, time_varying))
    ds = Dataset(
        tuple(f"s{i}" for i in range(segments)), tuple(f"x{j}" for j in range(covariates)),
        tuple(f"y{q}" for q in range(time_varying)), x, np.zeros((segments, months), dtype=np.int64), y,
    )
    sampler = GibbsSampler(ds, config, chain_id=1, faults=faults, cluster_update=cluster_update)
    names = _statistic_names(covariates, months, time_varying)

    mc_gen = RandomStream(seed, 2).generator
    marginal = np.empty((cycles, len(names)))
    for i in range(cycles):
        state = simulate_prior_state(sampler, mc_gen)
        k = mc_gen.binomial(state.n, special.expit(sampler.psi(state)))
        marginal[i] = _statistics(sampler, state, k)

    gen = sampler.generator
    state = simulate_prior_state(sampler, gen)
    k = gen.binomial(state.n, special.expit(sampler.psi(state)))
    successive = np.empty((cycles, len(names)))
    for i in range(burn_in + cycles):
        sampler.k = k
        sampler.sweep(state)
        k = gen.binomial(state.n, special.expit(sampler.psi(state)))
        if i >= burn_in:
            successive[i - burn_in] = _statistics(sampler, state, k)

    m_mean = marginal.mean(axis=0)
    m_var = marginal.var(axis=0, ddof=1) / cycles
    s_mean = successive.mean(axis=0)
    ess = np.array([effective_sample_size(c) or cycles for c in successive.T])
    s_var = successive.var(axis=0, ddof=1) / ess
    z = (m_mean - s_mean) / np.sqrt(m_var + s_var)
    return JointTestReport(names, z, m_mean, s_mean, cycles)
