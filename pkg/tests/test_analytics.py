import numpy as np
import pytest

from avcbayes import analytics
from avcbayes.config import GenerationConfig, RunConfig
from avcbayes.data import Dataset, simulate_dataset
from avcbayes.draws import DrawStore
from avcbayes.sampler import fit

from .oracles import values as V


def _store(names, values, chain=None):
    values = np.asarray(values, dtype=float).reshape(-1, len(names))
    R = len(values)
    return DrawStore(names, np.zeros(R) if chain is None else chain, np.arange(1, R + 1), values)


def _cell_store(n, p, indicator=None, names=("beta[speed]",), values=None):
    n = np.asarray(n)
    M, S, T = n.shape
    values = np.zeros((M, len(names))) if values is None else values
    ind = np.zeros(n.shape, np.int8) if indicator is None else indicator
    return DrawStore(list(names), np.zeros(M), np.arange(1, M + 1), values, tuple(f"s{i}" for i in range(S)), T,
                     np.zeros(M), np.arange(1, M + 1), n, np.asarray(p, float), ind)


def test_summary_degenerate():
    (row,) = analytics.summarize(_store(["beta[speed]"], np.full(100, 0.028)))
    assert (row.mean, row.lower, row.upper) == pytest.approx((0.028, 0.028, 0.028))
    assert row.significant


def test_summary_normal_interval():
    draws = np.random.default_rng(0).normal(1, 0.5, 10_000)
    (row,) = analytics.summarize(_store(["b"], draws))
    assert row.lower == pytest.approx(1 - V.NORMAL_975 * 0.5, abs=0.03)
    assert row.upper == pytest.approx(1 + V.NORMAL_975 * 0.5, abs=0.03)
    assert row.significant
    (row,) = analytics.summarize(_store(["b"], draws - 1))
    assert not row.significant
    assert row.lower <= row.upper


def test_summary_errors():
    with pytest.raises(analytics.AnalyticsError):
        analytics.summarize(_store(["b"], np.zeros((0, 1))))


def test_expected_avc_uses_within_draw_products():
    n = np.array([0, 4]).reshape(2, 1, 1)
    p = np.array([0.9, 0.1]).reshape(2, 1, 1)
    store = _cell_store(n, p)
    assert analytics.expected_avc(store)[0, 0] == pytest.approx(0.2)
    assert n.mean() * p.mean() == pytest.approx(1.0)
    assert analytics.expected_avc(_cell_store(np.full((3, 2, 2), 2), np.full((3, 2, 2), 0.5))) == pytest.approx(1.0)
    assert np.all(analytics.expected_avc(_cell_store(np.zeros((3, 2, 2), int), np.full((3, 2, 2), 0.5))) == 0)


def test_expected_avc_requires_cells():
    with pytest.raises(analytics.AnalyticsError, match="store_cells"):
        analytics.expected_avc(_store(["b"], np.zeros(3)))


def test_hotspot_ordering():
    ranked = analytics.rank_hotspots(np.zeros((3, 2)), ["b", "a", "c"], top_k=4)
    assert [(h.segment_id, h.month) for h in ranked] == [("a", 1), ("a", 2), ("b", 1), ("b", 2)]
    assert all(h.expected == 0 for h in ranked)
    table = np.zeros((3, 2))
    table[2, 1] = 5
    assert analytics.rank_hotspots(table, ["b", "a", "c"], top_k=1)[0] == analytics.Hotspot(1, "c", 2, 5.0)
    assert [h.month for h in analytics.rank_hotspots(table, ["b", "a", "c"], top_k=3, months=[1])] == [1, 1, 1]
    with pytest.raises(analytics.AnalyticsError):
        analytics.rank_hotspots(table, ["b", "a", "c"], top_k=0)
    with pytest.raises(analytics.AnalyticsError):
        analytics.rank_hotspots(table, ["b", "a", "c"], months=[3])


@pytest.fixture(scope="module")
def planted():
    ds, truth = simulate_dataset(GenerationConfig(
        segments=100, months=3, seed=21, covariates=("a", "b"), true_beta=[0.4, -0.3], true_alpha=[0.0],
        cluster_means=[1.0, 3.0, 40.0], cluster_sds=[0.5, 1.0, 2.0], cluster_weights=[0.6, 0.3, 0.1],
    ))
    store = fit(ds, RunConfig(iterations=600, burn_in=300, chains=2, seed=1, cell_thin=5))
    return ds, truth, store


def test_planted_hotspots(planted):
    ds, truth, store = planted
    ranked = analytics.rank_hotspots(analytics.expected_avc(store), ds.segment_ids, top_k=20)
    index = {sid: i for i, sid in enumerate(ds.segment_ids)}
    hits = sum(truth.z[index[h.segment_id], h.month - 1] == 2 for h in ranked)
    assert hits >= 16


def test_aggregation_consistency(planted):
    ds, _, store = planted
    full = fit(ds, RunConfig(iterations=60, burn_in=20, chains=2, seed=2, cell_thin=1))
    cells = analytics.expected_avc(full).sum(axis=0)
    recorded = np.array([full.column(f"total_np[{t}]").mean() for t in range(1, ds.T + 1)])
    np.testing.assert_allclose(cells, recorded, rtol=1e-10)


def test_monthly_totals(planted):
    ds, _, store = planted
    rows = analytics.monthly_totals(store, ds)
    assert [r.month for r in rows] == [1, 2, 3]
    assert [r.observed for r in rows] == ds.k.sum(axis=0).tolist()
    assert all(r.lower <= r.expected <= r.upper for r in rows)
    # same answer from the per-cell samples alone
    cells_only = DrawStore(["x"], store.chain, store.iteration, np.zeros(len(store)), store.segment_ids, store.months,
                           store.cell_chain, store.cell_iteration, store.cell_n, store.cell_p, store.cell_indicator)
    alt = analytics.monthly_totals(cells_only, ds)
    assert all(abs(a.expected - b.expected) < 0.1 * b.expected + 0.5 for a, b in zip(alt, rows))


def test_monthly_totals_all_zero():
    ds = Dataset(("s0", "s1"), ("a",), (), np.zeros((2, 1)), np.zeros((2, 3), int), np.zeros((2, 3, 0)))
    store = fit(ds, RunConfig(iterations=400, burn_in=200, chains=1, cell_thin=4))
    assert all(r.observed == 0 for r in analytics.monthly_totals(store, ds))


def _scenario_dataset():
    return Dataset(("s0",), ("speed",), ("rain",), np.zeros((1, 1)), np.zeros((1, 1), int), np.zeros((1, 1, 1)))


def test_scenario_hand_check():
    ds = _scenario_dataset()
    names = ["beta[speed]", "alpha0[1]", "gamma[1,rain]"]
    store = _cell_store(np.full((1, 1, 1), 3), np.full((1, 1, 1), 0.5), names=names,
                        values=np.array([[0.028, 0.0, 0.0]]))
    res = analytics.scenario_delta(store, ds, analytics.ScenarioEdit("speed", delta=-10))
    assert res.p_new[0, 0] == pytest.approx(V.SCENARIO_P_NEW, rel=1e-12)
    assert res.delta_p[0, 0] == pytest.approx(V.SCENARIO_DELTA_P, rel=1e-10)
    assert res.delta_expected[0, 0] == pytest.approx(3 * V.SCENARIO_DELTA_P, rel=1e-10)
    same = analytics.scenario_delta(store, ds, analytics.ScenarioEdit("speed", delta=0))
    assert same.delta_p[0, 0] == 0


def test_scenario_sign_follows_coefficient(planted):
    ds, _, store = planted
    sign = np.sign(store.column("beta[a]"))
    assert abs(sign.sum()) == len(sign), "beta[a] should have one sign in every draw"
    res = analytics.scenario_delta(store, ds, analytics.ScenarioEdit("a", delta=-2.0))
    assert np.all(np.sign(res.delta_p) == -sign[0])
    res = analytics.scenario_delta(store, ds, analytics.ScenarioEdit("a", value=0.0, segments=(ds.segment_ids[1],)))
    assert np.count_nonzero(res.delta_p.any(axis=1)) <= 1


def test_scenario_errors(planted):
    ds, _, store = planted
    with pytest.raises(analytics.UnsupportedEditError):
        analytics.scenario_delta(store, ds, analytics.ScenarioEdit("rain", delta=1))
    with pytest.raises(analytics.AnalyticsError):
        analytics.scenario_delta(store, ds, analytics.ScenarioEdit("nope", delta=1))
    with pytest.raises(analytics.AnalyticsError):
        analytics.ScenarioEdit("a")
    with pytest.raises(analytics.AnalyticsError):
        analytics.scenario_delta(store, ds, analytics.ScenarioEdit("a", delta=1, segments=("zz",)))
