import numpy as np
import pytest

from avcbayes import diagnostics
from avcbayes.config import ConfigError, GenerationConfig, RunConfig
from avcbayes.data import simulate_dataset
from avcbayes.draws import DrawStore
from avcbayes.sampler import GibbsSampler, fit, run_chain
from avcbayes.validation import joint_distribution_test

from .oracles import values as V


@pytest.fixture(scope="module")
def small():
    ds, _ = simulate_dataset(GenerationConfig(segments=30, months=3, seed=4, covariates=("a", "b"),
                                              true_beta=[0.5, -0.5], cluster_means=[1, 4, 8]))
    return ds


def test_single_iteration(small):
    store = fit(small, RunConfig(iterations=1, burn_in=0, chains=2, cell_thin=1))
    assert len(store) == 2 and store.iteration.tolist() == [1, 1]
    assert store.cell_n.shape == (2, 30, 3)


@pytest.mark.parametrize("init", ["binomial", "prior"])
def test_state_legal_after_every_sweep(small, init):
    sampler = GibbsSampler(small, RunConfig(seed=1, init_exposure=init))
    state = sampler.initial_state()
    assert np.all(state.n >= small.k)
    for _ in range(60):
        sampler.sweep(state)
        assert state.dp.w.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(state.dp.sig2 > 0) and np.all(state.dp.mu >= -0.5)
        assert np.all(state.n >= small.k) and state.n.max() <= sampler.n_cap
        assert np.array_equal(np.floor(state.nstar + 0.5).astype(np.int64), state.n)
        assert np.all((state.q > 0) & (state.q < 1))
        np.testing.assert_array_equal(state.kappa, small.k - state.n / 2)


def test_reproducible_and_chain_specific(small):
    cfg = RunConfig(iterations=30, burn_in=10, chains=2, seed=3, cell_thin=2)
    a, b = fit(small, cfg), fit(small, cfg)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.cell_n, b.cell_n)
    assert not np.array_equal(a.by_chain("beta[a]")[0], a.by_chain("beta[a]")[1])
    c = fit(small, cfg.replace(seed=4))
    assert not np.array_equal(a.values, c.values)


def test_parallel_workers_match_serial(small):
    cfg = RunConfig(iterations=20, burn_in=5, chains=2, seed=3)
    np.testing.assert_array_equal(fit(small, cfg).values, fit(small, cfg.replace(workers=2)).values)


def test_resume_matches_and_validates(small, tmp_path):
    cfg = RunConfig(iterations=40, burn_in=10, seed=2, cell_thin=3, checkpoint_every=5,
                    checkpoint_path=str(tmp_path / "c{chain}.npz"))
    whole = run_chain(cfg, small, 0)
    run_chain(cfg, small, 0, stop_after=5)  # checkpoint inside burn-in
    resumed = run_chain(cfg, small, 0, resume_from=tmp_path / "c0.npz")
    np.testing.assert_array_equal(whole.values, resumed.values)
    np.testing.assert_array_equal(whole.cell_p, resumed.cell_p)
    with pytest.raises(ValueError, match="chain"):
        run_chain(cfg, small, 1, resume_from=tmp_path / "c0.npz")
    with pytest.raises(ValueError, match="differs"):
        run_chain(cfg.replace(e0=3.0), small, 0, resume_from=tmp_path / "c0.npz")
    longer = run_chain(cfg.replace(iterations=60), small, 0, resume_from=tmp_path / "c0.npz")
    np.testing.assert_array_equal(longer.values[:30], whole.values)


def test_fit_resume_flag(small, tmp_path):
    cfg = RunConfig(iterations=30, burn_in=10, chains=2, seed=2, checkpoint_every=10, output_dir=str(tmp_path))
    whole = fit(small, cfg)
    more = fit(small, cfg.replace(iterations=50), resume=True)
    np.testing.assert_array_equal(more.values[more.iteration <= 30], whole.values)


def test_draw_files_round_trip(small, tmp_path):
    store = fit(small, RunConfig(iterations=12, burn_in=2, chains=2, cell_thin=5))
    paths = tmp_path / "d.csv", tmp_path / "c.csv", tmp_path / "m.json"
    store.write(*paths)
    back = DrawStore.read(*paths, dataset=small)
    np.testing.assert_array_equal(back.values, store.values)
    np.testing.assert_array_equal(back.cell_n, store.cell_n)
    np.testing.assert_array_equal(back.cell_p, store.cell_p)
    np.testing.assert_array_equal(back.cell_indicator, store.cell_indicator)
    assert back.metadata["cell_thin"] == 5


def test_unknown_fault_and_config_errors(small):
    with pytest.raises(ValueError):
        GibbsSampler(small, RunConfig(), faults=("typo",))
    for bad in (dict(iterations=0), dict(burn_in=5, iterations=5), dict(thin=0), dict(chains=0),
                dict(e0=0), dict(cluster_update="mh"), dict(init_exposure="zero"), dict(n_cap=0)):
        with pytest.raises(ConfigError):
            RunConfig(**bad)


def test_rhat_null_and_separated():
    gen = np.random.default_rng(0)
    assert diagnostics.gelman_rubin(gen.standard_normal((4, 2000))) == pytest.approx(1.0, abs=0.01)
    apart = gen.standard_normal((2, 2000)) + np.array([[0.0], [10.0]])
    assert diagnostics.gelman_rubin(apart) > 3
    assert diagnostics.gelman_rubin(np.ones((3, 50))) is None
    with pytest.raises(diagnostics.DiagnosticsError):
        diagnostics.gelman_rubin(np.zeros((1, 100)))


def test_ess_white_noise_and_ar1():
    gen = np.random.default_rng(1)
    assert diagnostics.effective_sample_size(gen.standard_normal(10_000)) == pytest.approx(10_000, rel=0.1)
    x = np.empty(10_000)
    x[0] = gen.standard_normal()
    e = gen.standard_normal(10_000) * np.sqrt(1 - 0.81)
    for i in range(1, x.size):
        x[i] = 0.9 * x[i - 1] + e[i]
    assert diagnostics.effective_sample_size(x) == pytest.approx(V.AR1_ESS_1E4_0_9, rel=0.3)
    assert diagnostics.effective_sample_size(np.full(50, 2.0)) is None


def test_diagnose_report(small):
    report = diagnostics.diagnose(fit(small, RunConfig(iterations=80, burn_in=20, chains=2, store_cells=False)))
    names = [p.name for p in report.parameters]
    assert "beta[a]" in names and "total_np[1]" in names
    assert not any(n.startswith(("nonzero_n", "count_I")) for n in names)
    assert report.draws_per_chain == 60 and len(report.mh_acceptance) == 2
    assert "mean r_hat" in report.to_text() and '"parameters"' in report.to_json()


def test_joint_test_detects_stale_kappa():
    report = joint_distribution_test(seed=0, cycles=3000, faults=("stale_kappa",))
    assert report.max_abs_z > 5
