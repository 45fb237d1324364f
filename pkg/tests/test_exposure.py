import numpy as np
import pytest
from scipy import stats

from avcbayes import exposure
from avcbayes.distributions import InvalidParameterError, truncated_normal_draws
from avcbayes.exposure import DpState

from .oracles import values as V


def _dp(mu, sd, w, **kw):
    mu = np.asarray(mu, float)
    return DpState(mu, np.asarray(sd, float) ** 2, np.ones(mu.size), np.asarray(w, float), **kw)


def test_kernel_examples():
    assert exposure.kernel_pmf(0, 0.0, 1.0) == pytest.approx(V.KERNEL_0_0_1, rel=1e-12)
    assert exposure.kernel_pmf(5, -4.0, 0.5) < 1e-12
    assert exposure.kernel_pmf(5, -4.0, 0.5) == pytest.approx(V.KERNEL_5_M4_HALF, rel=1e-8)
    assert exposure.kernel_pmf(np.arange(201), 0.0, 1.0).sum() == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(InvalidParameterError):
        exposure.kernel_pmf(0, 0.0, 0.0)


@pytest.mark.parametrize("mu", [-0.5, 0.0, 3.0, 20.0, 150.0])
@pytest.mark.parametrize("sigma", [0.05, 1.0, 7.5, 40.0])
def test_kernel_normalization(mu, sigma):
    top = int(np.ceil(mu + 10 * sigma))
    assert exposure.kernel_pmf(np.arange(top + 1), mu, sigma).sum() >= 1 - 1e-9


def test_assign_single_cluster():
    z, mu, sd = exposure.assign_clusters(np.arange(10), _dp([2.0], [1.0], [1.0]), np.random.default_rng(0))
    assert np.all(z == 0) and np.all(mu == 2.0) and np.all(sd == 1.0)


def test_assign_probability_far_cluster():
    k0 = exposure.kernel_pmf(0, 0.0, 1.0)
    k1 = exposure.kernel_pmf(0, 10.0, 1.0)
    p_far = 0.5 * k1 / (0.5 * k0 + 0.5 * k1)
    assert p_far == pytest.approx(V.ASSIGN_P_CLUSTER2_N0, rel=1e-8)
    z, _, _ = exposure.assign_clusters(np.zeros(10_000, int), _dp([0, 10], [1, 1], [0.5, 0.5]),
                                       np.random.default_rng(1))
    assert np.all(z == 0)


def test_assign_degenerate_weights():
    z, _, _ = exposure.assign_clusters(np.array([0, 3, 40]), _dp([0, 5, 9], [1, 1, 1], [0, 1, 0]),
                                       np.random.default_rng(2))
    assert np.all(z == 1)


def test_stick_weights():
    assert exposure.stick_weights([0.5, 0.5, 1.0]).tolist() == [0.5, 0.25, 0.25]
    gen = np.random.default_rng(3)
    for _ in range(200):
        w = exposure.stick_weights(np.append(gen.random(4), 1.0))
        assert sum(w.tolist()) == 1.0


def test_stick_update_parameters():
    gen = np.random.default_rng(4)
    dp = _dp([0, 1, 2], [1, 1, 1], [1 / 3] * 3)
    N = 50
    V1 = np.array([exposure.update_stick_weights(np.zeros(N, int), dp, gen)[0] for _ in range(4000)])
    assert np.all(V1[:, 2] == 1.0)
    assert V1[:, 0].mean() == pytest.approx((1 + N) / (2 + N), abs=0.003)
    empty = np.array([exposure.update_stick_weights(np.zeros(0, int), dp, gen)[0][:2] for _ in range(4000)])
    assert empty.mean() == pytest.approx(0.5, abs=0.02)


def test_continuization_intervals():
    gen = np.random.default_rng(5)
    x = exposure.sample_latent_continuous(np.zeros(1000), 0.0, 1.0, gen)
    assert np.all((x > -0.5) & (x < 0.5))
    x = exposure.sample_latent_continuous(np.full(1000, 3), 3.0, 0.01, gen)
    assert np.all(np.abs(x - 3) < 0.05)
    n = gen.integers(0, 40, 5000)
    x = exposure.sample_latent_continuous(n, gen.normal(0, 10, n.size), gen.uniform(0.1, 5, n.size), gen)
    assert np.array_equal(np.floor(x + 0.5), n)


def test_continuization_distribution():
    x = exposure.sample_latent_continuous(np.ones(100_000), 0.0, 1.0, np.random.default_rng(6))
    ref = stats.truncnorm(0.5, 1.5)
    assert stats.kstest(x, ref.cdf).pvalue > 0.01


def test_empty_cluster_draws_from_base():
    gen = np.random.default_rng(7)
    dp = _dp([0.0, 5.0], [1.0, 1.0], [0.5, 0.5])
    z = np.zeros(20, int)
    nstar = np.full(20, 5.0)
    draws = [exposure.update_cluster_params(nstar, z, dp, gen) for _ in range(20_000)]
    tau = np.array([1 / d.sig2[1] for d in draws])
    mu = np.array([d.mu[1] for d in draws])
    assert tau.mean() == pytest.approx(0.2, rel=0.02)
    assert mu.min() >= -0.5
    # mu | sigma^2 is a normal around 0 truncated at -1/2
    u = stats.truncnorm.cdf(mu, -0.5 * np.sqrt(tau), np.inf, scale=1 / np.sqrt(tau))
    assert stats.kstest(u, "uniform").pvalue > 0.001


def test_single_member_conditional_mean():
    gen = np.random.default_rng(8)
    dp = _dp([1.0], [1.0], [1.0])
    draws = [exposure.update_cluster_params(np.array([4.0]), np.zeros(1, int), dp, gen, method="paper")
             for _ in range(20_000)]
    mu = np.array([d.mu[0] for d in draws])
    sd = np.sqrt(np.array([d.sig2[0] for d in draws]) / 2)
    # mean 4/(1+1) = 2 and variance sigma^2/2, truncated at -1/2
    u = stats.truncnorm.cdf(mu, (-0.5 - 2.0) / sd, np.inf, loc=2.0, scale=sd)
    assert stats.kstest(u, "uniform").pvalue > 0.001


@pytest.mark.parametrize("method", ["paper", "augmented"])
def test_many_zero_members_concentrate(method):
    gen = np.random.default_rng(9)
    dp = _dp([3.0], [2.0], [1.0])
    nstar = truncated_normal_draws(np.zeros(10_000), 0.1, -0.5, 0.5, gen)
    for _ in range(30):
        dp = exposure.update_cluster_params(nstar, np.zeros(nstar.size, int), dp, gen, method=method)
    assert abs(dp.mu[0]) < 0.05
    assert dp.sig2[0] < 0.02


@pytest.mark.parametrize("members", [1, 5, 50])
def test_augmented_update_preserves_prior(members):
    # theta ~ prior, data ~ theta, theta' ~ update(data, theta): theta' must follow the prior
    gen = np.random.default_rng(members)
    R = 6000
    before, after = np.empty((R, 2)), np.empty((R, 2))
    for r in range(R):
        dp = exposure.prior_dp_state(1, gen)
        data = truncated_normal_draws(np.full(members, dp.mu[0]), np.full(members, dp.sigma[0]), -0.5, np.inf, gen)
        new = exposure.update_cluster_params(data, np.zeros(members, int), dp, gen)
        before[r] = dp.mu[0], np.log(dp.sig2[0])
        after[r] = new.mu[0], np.log(new.sig2[0])
    for j in range(2):
        assert stats.ks_2samp(before[:, j], after[:, j]).pvalue > 0.001


def test_cluster_update_rejects_unknown_method():
    with pytest.raises(ValueError):
        exposure.update_cluster_params(np.zeros(1), np.zeros(1, int), _dp([0], [1], [1]), 0, method="other")


def test_binomial_kernel_support():
    assert exposure.log_binomial_kernel(np.array(5), np.array(3), np.log(0.5), np.log(0.5)) == -np.inf
    assert np.exp(exposure.log_binomial_kernel(np.array(2), np.array(4), np.log(0.3), np.log(0.7))) == \
        pytest.approx(stats.binom.pmf(2, 4, 0.3), rel=1e-12)


def _mh_chain(k, p, dp, cap, iters, seed):
    gen = np.random.default_rng(seed)
    n = np.full(1, k, dtype=np.int64)
    log_mix = exposure.log_mixture_pmf(cap, dp)
    out = np.empty(iters, dtype=np.int64)
    for i in range(iters):
        n, _ = exposure.mh_update_crossings(np.array([k]), n, np.array([p]), dp, gen, cap, log_mix=log_mix)
        out[i] = n[0]
    return out


def test_mh_drifts_to_zero_when_p_near_one():
    dp = _dp([8.0, 15.0], [2.0, 3.0], [0.5, 0.5])
    draws = _mh_chain(0, 1 - 1e-9, dp, 20, 500, 10)
    assert np.all(draws[50:] == 0)


def test_mh_never_below_k():
    dp = _dp([0.0, 2.0], [1.0, 1.0], [0.5, 0.5])
    draws = _mh_chain(4, 0.3, dp, 20, 2000, 11)
    assert draws.min() >= 4


def test_exposure_sweep_invariants():
    gen = np.random.default_rng(12)
    k = gen.integers(0, 4, (30, 6))
    n = k + gen.integers(0, 3, k.shape)
    dp = exposure.prior_dp_state(3, gen)
    for _ in range(50):
        n, nstar, z, dp, acc = exposure.exposure_sweep(n, k, np.zeros(k.shape), dp, gen, 50)
        dp.check()
        assert np.all(n >= k)
        assert np.array_equal(np.floor(nstar + 0.5).astype(np.int64), n)
        assert np.all(nstar > -0.5)
