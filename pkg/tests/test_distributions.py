import numpy as np
import pytest
from scipy import stats

from avcbayes.distributions import (
    DecompositionError,
    InvalidParameterError,
    TruncatedNormalSpec,
    normal_cdf,
    normal_inv_cdf,
    polya_gamma_draws,
    polya_gamma_mean,
    polya_gamma_var,
    sample_beta,
    sample_categorical,
    sample_gamma,
    sample_mvn,
    sample_polya_gamma,
    sample_truncated_normal,
    truncated_normal_draws,
)
from avcbayes.rng import RandomStream, as_generator

from .oracles import values as V


def test_stream_replay_and_split():
    a = RandomStream(7, 3).generator.random(5)
    b = RandomStream(7, 3).generator.random(5)
    c = RandomStream(7, 4).generator.random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.array_equal(RandomStream(7).split(4).generator.random(5), c)


def test_stream_state_roundtrip():
    s = RandomStream(1)
    s.generator.random(3)
    saved = s.state
    x = s.generator.random(4)
    s.state = saved
    assert np.array_equal(s.generator.random(4), x)


def test_as_generator_rejects_other_types():
    with pytest.raises(TypeError):
        as_generator("seed")


@pytest.mark.parametrize("seed,stream", [(-1, 0), (0, -1)])
def test_stream_bounds(seed, stream):
    with pytest.raises(ValueError):
        RandomStream(seed, stream)


def test_normal_cdf_examples():
    assert normal_cdf(0.0) == 0.5
    assert normal_cdf(0.5) == pytest.approx(V.PHI_HALF, abs=1e-15)
    assert normal_cdf(-0.5) == pytest.approx(V.PHI_MINUS_HALF, abs=1e-15)
    with pytest.raises(InvalidParameterError):
        normal_cdf(0.0, std=0.0)


def test_normal_inv_cdf_examples():
    assert normal_inv_cdf(0.5, 3.0, 2.0) == 3.0
    assert normal_inv_cdf(0.691462) == pytest.approx(V.INV_PHI_0_691462, abs=1e-12)
    assert normal_inv_cdf(0.308538, 2.0, 3.0) == pytest.approx(V.INV_PHI_0_308538_MU2_SD3, abs=1e-12)
    for u in (0.0, 1.0, -0.1):
        with pytest.raises(InvalidParameterError):
            normal_inv_cdf(u)


def test_inverse_consistency():
    x = np.linspace(-6, 6, 2001)
    assert np.max(np.abs(normal_inv_cdf(normal_cdf(x)) - x)) < 1e-8


def test_pg_moment_formulas():
    assert polya_gamma_mean(1, 0.0) == 0.25
    assert polya_gamma_mean(2, 3.0) == pytest.approx(V.PG_MEAN_2_3, rel=1e-14)
    assert polya_gamma_mean(1, 2.0) == pytest.approx(V.PG_MEAN_1_2, rel=1e-14)
    assert polya_gamma_var(5, 0.5) == pytest.approx(V.PG_VAR_5_0_5, rel=1e-12)
    assert polya_gamma_var(1, 0.0) == pytest.approx(V.PG_VAR_1_0, rel=1e-12)


def test_pg_draws_match_means():
    gen = np.random.default_rng(0)
    draws = sample_polya_gamma(1, 0.0, gen, size=200_000)
    assert abs(draws.mean() - 0.25) < 4 * np.sqrt(V.PG_VAR_1_0 / draws.size)
    draws = sample_polya_gamma(2, 3.0, gen, size=200_000)
    assert abs(draws.mean() - V.PG_MEAN_2_3) < 4 * np.sqrt(V.PG_VAR_2_3 / draws.size)


def test_pg_support_and_errors():
    gen = np.random.default_rng(1)
    assert sample_polya_gamma(5, -1.7, gen) > 0
    for b in (0, -1, 1.5):
        with pytest.raises(InvalidParameterError):
            sample_polya_gamma(b, 0.0, gen)


def test_pg_zero_shape_is_zero():
    out = polya_gamma_draws(np.array([0, 3, 0]), np.array([1.0, 1.0, -2.0]), np.random.default_rng(2))
    assert out[0] == 0.0 and out[2] == 0.0 and out[1] > 0


def test_pg_normal_branch_moments():
    gen = np.random.default_rng(3)
    b = np.full(100_000, 60)
    out = polya_gamma_draws(b, np.full(b.shape, 1.5), gen)
    assert abs(out.mean() - polya_gamma_mean(60, 1.5)) < 4 * np.sqrt(polya_gamma_var(60, 1.5) / b.size)
    assert out.var() == pytest.approx(polya_gamma_var(60, 1.5), rel=0.03)


def test_truncated_normal_examples():
    gen = np.random.default_rng(4)
    draws = truncated_normal_draws(np.zeros(1_000_000), 1.0, 0.0, np.inf, gen)
    assert abs(draws.mean() - V.HALF_NORMAL_MEAN) < 0.003
    assert draws.min() >= 0.0
    low = truncated_normal_draws(np.full(10_000, -5.0), 1.0, -0.5, np.inf, gen)
    assert low.min() >= -0.5


def test_truncated_normal_untruncated_and_deep_tail():
    gen = np.random.default_rng(5)
    spec = TruncatedNormalSpec(0.0, 1.0)
    draws = sample_truncated_normal(spec, gen, size=50_000)
    assert stats.kstest(draws, "norm").pvalue > 0.001
    deep = sample_truncated_normal(TruncatedNormalSpec(0.0, 1.0, lower=8.0), gen, size=50_000)
    assert deep.min() >= 8.0
    ref = stats.truncnorm(8.0, np.inf)
    assert stats.kstest(deep, ref.cdf).pvalue > 0.001


def test_truncated_normal_spec_validation():
    with pytest.raises(InvalidParameterError):
        TruncatedNormalSpec(0.0, 0.0)
    with pytest.raises(InvalidParameterError):
        TruncatedNormalSpec(0.0, 1.0, lower=1.0, upper=1.0)


def test_mvn():
    gen = np.random.default_rng(6)
    draws = np.array([sample_mvn([0.0, 0.0], np.diag([4.0, 9.0]), gen) for _ in range(20_000)])
    assert draws.var(axis=0) == pytest.approx([4.0, 9.0], rel=0.05)
    with pytest.raises(InvalidParameterError):
        sample_mvn([0.0], np.eye(2), gen)
    with pytest.raises(DecompositionError) as err:
        sample_mvn([0.0, 0.0], np.array([[1.0, 2.0], [2.0, 1.0]]), gen)
    assert err.value.condition_number is not None


def test_gamma_beta_categorical():
    gen = np.random.default_rng(7)
    assert sample_beta(1, 1, gen, size=1_000_000).mean() == pytest.approx(0.5, abs=0.002)
    assert sample_gamma(2, 10, gen, size=1_000_000).mean() == pytest.approx(0.2, abs=0.002)
    # indices are 0-based: the middle of three categories is index 1
    assert all(sample_categorical([0, 1, 0], gen) == 1 for _ in range(100))
    for bad in ([0, 0], [-1, 2], []):
        with pytest.raises(InvalidParameterError):
            sample_categorical(bad, gen)
    with pytest.raises(InvalidParameterError):
        sample_gamma(0, 1, gen)
    with pytest.raises(InvalidParameterError):
        sample_beta(1, 0, gen)
