"""Posterior summaries, expected collisions, hotspots and design scenarios."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .data import Dataset
from .draws import DrawStore


class AnalyticsError(ValueError):
    pass


class UnsupportedEditError(AnalyticsError):
    pass


@dataclass(frozen=True)
class PosteriorSummary:
    name: str
    mean: float
    lower: float
    upper: float

    @property
    def significant(self) -> bool:
        return not (self.lower <= 0.0 <= self.upper)


def summarize(store: DrawStore, names=None, level=0.95) -> list:
    """Mean and equal-tailed credible interval for every global parameter."""
    if len(store) == 0:
        raise AnalyticsError("no posterior draws to summarize")
    names = store.names if names is None else list(names)
    tail = 100 * (1 - level) / 2
    out = []
    for name in names:
        col = store.column(name)
        lo, hi = np.percentile(col, [tail, 100 - tail])
        out.append(PosteriorSummary(name, float(col.mean()), float(lo), float(hi)))
    return out


def _require_cells(store: DrawStore):
    if not store.has_cells:
        raise AnalyticsError(
            "no per-cell samples in these draws; rerun `fit` with store_cells = true to enable this analysis"
        )


def expected_avc(store: DrawStore) -> np.ndarray:
    """(S, T) posterior mean of n * p, averaging the product within each draw."""
    _require_cells(store)
    return np.mean(store.cell_n * store.cell_p, axis=0)


@dataclass(frozen=True)
class Hotspot:
    rank: int
    segment_id: str
    month: int
    expected: float


def rank_hotspots(expected, segment_ids, top_k=20, months=None) -> list:
    """Highest expected-collision cells; ties broken by segment id, then month.

    ``months`` restricts the ranking to the given 1-based months.
    """
    if top_k <= 0:
        raise AnalyticsError("top_k must be positive")
    expected = np.asarray(expected, dtype=float)
    S, T = expected.shape
    allowed = range(1, T + 1) if months is None else sorted(set(int(m) for m in months))
    for m in allowed:
        if not 1 <= m <= T:
            raise AnalyticsError(f"month {m} outside 1..{T}")
    cells = [(segment_ids[s], m, expected[s, m - 1]) for s in range(S) for m in allowed]
    cells.sort(key=lambda c: (-c[2], c[0], c[1]))
    return [Hotspot(i + 1, sid, m, float(v)) for i, (sid, m, v) in enumerate(cells[:top_k])]


@dataclass(frozen=True)
class MonthlyTotal:
    month: int
    observed: int
    expected: float
    lower: float
    upper: float


def monthly_totals(store: DrawStore, dataset: Dataset, level=0.95) -> list:
    """Observed sum of k per month against the posterior of sum n * p."""
    observed = dataset.k.sum(axis=0)
    tail = 100 * (1 - level) / 2
    names = [f"total_np[{t}]" for t in range(1, dataset.T + 1)]
    if all(n in store.names for n in names) and len(store):
        totals = np.stack([store.column(n) for n in names], axis=1)
    else:
        _require_cells(store)
        totals = (store.cell_n * store.cell_p).sum(axis=1)
    lo, hi = np.percentile(totals, [tail, 100 - tail], axis=0)
    mean = totals.mean(axis=0)
    return [
        MonthlyTotal(t + 1, int(observed[t]), float(mean[t]), float(lo[t]), float(hi[t]))
        for t in range(dataset.T)
    ]


@dataclass(frozen=True)
class ScenarioEdit:
    covariate: str
    delta: float = None
    value: float = None
    segments: tuple = None

    def __post_init__(self):
        if (self.delta is None) == (self.value is None):
            raise AnalyticsError("a scenario edit needs exactly one of delta or value")


@dataclass
class ScenarioResult:
    edit: ScenarioEdit
    delta_p: np.ndarray
    delta_expected: np.ndarray
    p_old: np.ndarray
    p_new: np.ndarray
    draws_negative: np.ndarray
    draws_positive: np.ndarray
    draws: int
    cell_thin: int


def _edited_x(dataset: Dataset, edit: ScenarioEdit) -> np.ndarray:
    if edit.covariate in dataset.time_varying_names:
        raise UnsupportedEditError(
            f"{edit.covariate!r} is time-varying; scenarios only edit time-invariant segment covariates"
        )
    if edit.covariate not in dataset.covariate_names:
        raise AnalyticsError(f"unknown covariate {edit.covariate!r}")
    j = dataset.covariate_names.index(edit.covariate)
    mask = np.ones(dataset.S, dtype=bool)
    if edit.segments is not None:
        index = {sid: i for i, sid in enumerate(dataset.segment_ids)}
        missing = [s for s in edit.segments if s not in index]
        if missing:
            raise AnalyticsError(f"unknown segments in scenario filter: {missing[:5]}")
        mask[:] = False
        mask[[index[s] for s in edit.segments]] = True
    x = np.array(dataset.x, dtype=float)
    if edit.delta is not None:
        x[mask, j] += edit.delta
    else:
        x[mask, j] = edit.value
    return x


def cell_linear_predictor(store: DrawStore, dataset: Dataset, x=None) -> np.ndarray:
    """(M, S, T) psi rebuilt from the global draws at every stored cell sample."""
    _require_cells(store)
    x = dataset.x if x is None else x
    rows = store.values_at(store.cell_chain, store.cell_iteration)
    col = {n: i for i, n in enumerate(store.names)}
    T = dataset.T
    beta = rows[:, [col[f"beta[{c}]"] for c in dataset.covariate_names]]
    alpha = rows[:, [col[f"alpha0[{t}]"] for t in range(1, T + 1)]]
    gamma = rows[:, [col[f"gamma[{t},{c}]"] for t in range(1, T + 1) for c in dataset.time_varying_names]]
    gamma = gamma.reshape(len(rows), T, dataset.Q)
    xb = beta @ x.T
    tv = np.einsum("stq,mtq->mst", dataset.y, gamma)
    return xb[:, :, None] + tv + alpha[:, None, :] * store.cell_indicator


def scenario_delta(store: DrawStore, dataset: Dataset, edit: ScenarioEdit) -> ScenarioResult:
    """Change in collision probability and expected collisions under a covariate edit.

    Every stored cell sample is re-evaluated with the edited covariates and
    its own (beta, alpha, gamma, I); crossings stay at their sampled values.
    """
    x_new = _edited_x(dataset, edit)
    psi_old = cell_linear_predictor(store, dataset)
    psi_new = cell_linear_predictor(store, dataset, x_new)
    p_old, p_new = special.expit(psi_old), special.expit(psi_new)
    dp = p_new - p_old
    return ScenarioResult(
        edit, dp.mean(axis=0), (store.cell_n * dp).mean(axis=0), p_old.mean(axis=0), p_new.mean(axis=0),
        (dp < 0).sum(axis=0), (dp > 0).sum(axis=0), dp.shape[0],
        int(store.metadata.get("cell_thin", 1)),
    )

