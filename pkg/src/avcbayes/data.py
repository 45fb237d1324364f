"""Segment/panel data: containers, CSV ingestion, and forward simulation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ConfigError, GenerationConfig, Schema
from .distributions import truncated_normal_draws
from .rng import as_generator


class DatasetValidationError(ValueError):
    pass


@dataclass(frozen=True)
class SegmentCovariates:
    segment_id: str
    x: tuple


@dataclass(frozen=True)
class PanelCell:
    segment_id: str
    month: int
    k: int
    y: tuple


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable S x T panel.

    ``x`` is (S, P) time-invariant covariates, ``k`` the (S, T) observed
    counts, ``y`` the (S, T, Q) time-varying covariates.  Months are 1..T.
    """

    segment_ids: tuple
    covariate_names: tuple
    time_varying_names: tuple
    x: np.ndarray
    k: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float, copy=True)
        k = np.array(self.k, dtype=np.int64, copy=True)
        y = np.array(self.y, dtype=float, copy=True)
        S = len(self.segment_ids)
        if x.ndim != 2 or x.shape[0] != S or x.shape[1] != len(self.covariate_names):
            raise DatasetValidationError(f"x has shape {x.shape}, expected ({S}, {len(self.covariate_names)})")
        if k.ndim != 2 or k.shape[0] != S:
            raise DatasetValidationError(f"k has shape {k.shape}, expected ({S}, T)")
        if y.shape != (S, k.shape[1], len(self.time_varying_names)):
            raise DatasetValidationError(f"y has shape {y.shape}, expected {(S, k.shape[1], len(self.time_varying_names))}")
        if np.any(k < 0):
            s, t = np.argwhere(k < 0)[0]
            raise DatasetValidationError(f"negative count at segment {self.segment_ids[s]!r}, month {t + 1}")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise DatasetValidationError("covariates must be finite")
        if len(set(self.segment_ids)) != S:
            raise DatasetValidationError("duplicate segment ids")
        for arr in (x, k, y):
            arr.setflags(write=False)
        object.__setattr__(self, "segment_ids", tuple(str(s) for s in self.segment_ids))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        object.__setattr__(self, "time_varying_names", tuple(self.time_varying_names))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "y", y)

    @property
    def S(self) -> int:
        return self.k.shape[0]

    @property
    def T(self) -> int:
        return self.k.shape[1]

    @property
    def P(self) -> int:
        return self.x.shape[1]

    @property
    def Q(self) -> int:
        return self.y.shape[2]

    @property
    def segments(self) -> list[SegmentCovariates]:
        return [SegmentCovariates(sid, tuple(row)) for sid, row in zip(self.segment_ids, self.x.tolist())]

    def cells(self):
        for s, sid in enumerate(self.segment_ids):
            for t in range(self.T):
                yield PanelCell(sid, t + 1, int(self.k[s, t]), tuple(self.y[s, t].tolist()))

    def covariate_index(self, name: str) -> int:
        try:
            return self.covariate_names.index(name)
        except ValueError:
            raise KeyError(name) from None


# ---------------------------------------------------------------------------
# CSV I/O


def _parse_float(text, path, row, column):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise DatasetValidationError(f"{path}: row {row}: column {column!r} is not numeric: {text!r}") from None
    if not math.isfinite(value):
        raise DatasetValidationError(f"{path}: row {row}: column {column!r} is not finite: {text!r}")
    return value


def _parse_int(text, path, row, column):
    try:
        return int(text)
    except (TypeError, ValueError):
        value = _parse_float(text, path, row, column)
        if value != int(value):
            raise DatasetValidationError(f"{path}: row {row}: column {column!r} must be an integer: {text!r}") from None
        return int(value)


def _read_rows(path, required):
    path = Path(path)
    if not path.exists():
        raise DatasetValidationError(f"file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise DatasetValidationError(f"{path}: missing columns {missing}; header is {header}")
        # row numbers count the header as row 1
        return [(i, row) for i, row in enumerate(reader, start=2)]


def load_dataset(segments_path, panel_path, schema: Schema) -> Dataset:
    seg_rows = _read_rows(segments_path, ("segment_id",) + schema.covariates)
    if not seg_rows:
        raise DatasetValidationError(f"{segments_path}: no segment rows")
    ids, xs, index = [], [], {}
    for row_no, row in seg_rows:
        sid = (row["segment_id"] or "").strip()
        if not sid:
            raise DatasetValidationError(f"{segments_path}: row {row_no}: empty segment_id")
        if sid in index:
            raise DatasetValidationError(f"{segments_path}: row {row_no}: duplicate segment_id {sid!r}")
        vals = []
        for name in schema.covariates:
            v = _parse_float(row[name], segments_path, row_no, name)
            if name in schema.flag_covariates and v not in (0.0, 1.0):
                raise DatasetValidationError(f"{segments_path}: row {row_no}: flag {name!r} must be 0 or 1, got {v}")
            if name in schema.nonnegative_covariates and v < 0:
                raise DatasetValidationError(f"{segments_path}: row {row_no}: {name!r} must be nonnegative, got {v}")
            vals.append(v)
        index[sid] = len(ids)
        ids.append(sid)
        xs.append(vals)

    S, T, Q = len(ids), schema.months, len(schema.time_varying)
    panel_rows = _read_rows(panel_path, ("segment_id", "month", "avc_count") + schema.time_varying)
    k = np.full((S, T), -1, dtype=np.int64)
    y = np.zeros((S, T, Q))
    seen = {}
    for row_no, row in panel_rows:
        sid = (row["segment_id"] or "").strip()
        if sid not in index:
            raise DatasetValidationError(f"{panel_path}: row {row_no}: unknown segment_id {sid!r}")
        month = _parse_int(row["month"], panel_path, row_no, "month")
        if not 1 <= month <= T:
            raise DatasetValidationError(f"{panel_path}: row {row_no}: month {month} outside 1..{T}")
        key = (sid, month)
        if key in seen:
            raise DatasetValidationError(
                f"{panel_path}: row {row_no}: duplicate (segment, month) {key}, first seen at row {seen[key]}"
            )
        seen[key] = row_no
        count = _parse_int(row["avc_count"], panel_path, row_no, "avc_count")
        if count < 0:
            raise DatasetValidationError(f"{panel_path}: row {row_no}: avc_count must be nonnegative, got {count}")
        s = index[sid]
        k[s, month - 1] = count
        for q, name in enumerate(schema.time_varying):
            text = row[name]
            if text is None or text.strip() == "":
                raise DatasetValidationError(f"{panel_path}: row {row_no}: missing value for {name!r}")
            y[s, month - 1, q] = _parse_float(text, panel_path, row_no, name)
    gaps = np.argwhere(k < 0)
    if gaps.size:
        listed = ", ".join(f"({ids[s]}, month {t + 1})" for s, t in gaps[:10])
        more = f" and {len(gaps) - 10} more" if len(gaps) > 10 else ""
        raise DatasetValidationError(f"{panel_path}: incomplete panel, missing {listed}{more}")
    return Dataset(tuple(ids), schema.covariates, schema.time_varying, np.array(xs, dtype=float), k, y)


def write_dataset(dataset: Dataset, segments_path, panel_path) -> None:
    for p in (segments_path, panel_path):
        Path(p).parent.mkdir(parents=True, exist_ok=True)
    with open(segments_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("segment_id",) + dataset.covariate_names)
        for sid, row in zip(dataset.segment_ids, dataset.x.tolist()):
            w.writerow([sid] + [repr(v) for v in row])
    with open(panel_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("segment_id", "month", "avc_count") + dataset.time_varying_names)
        for s, sid in enumerate(dataset.segment_ids):
            for t in range(dataset.T):
                w.writerow([sid, t + 1, int(dataset.k[s, t])] + [repr(v) for v in dataset.y[s, t].tolist()])


def schema_for(dataset: Dataset) -> Schema:
    return Schema(covariates=dataset.covariate_names, time_varying=dataset.time_varying_names, months=dataset.T)


@dataclass(frozen=True)
class CovariateSummary:
    name: str
    minimum: float
    mean: float
    maximum: float


def summarize_covariates(dataset: Dataset) -> list[CovariateSummary]:
    rows = []
    for j, name in enumerate(dataset.covariate_names):
        col = dataset.x[:, j]
        rows.append(CovariateSummary(name, float(col.min()), float(col.mean()), float(col.max())))
    for q, name in enumerate(dataset.time_varying_names):
        col = dataset.y[:, :, q]
        rows.append(CovariateSummary(name, float(col.min()), float(col.mean()), float(col.max())))
    return rows


# ---------------------------------------------------------------------------
# Forward simulation


@dataclass(frozen=True, eq=False)
class GroundTruth:
    beta: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    q: np.ndarray
    cluster_means: np.ndarray
    cluster_sds: np.ndarray
    cluster_weights: np.ndarray
    z: np.ndarray
    nstar: np.ndarray
    n: np.ndarray
    indicator: np.ndarray
    psi: np.ndarray
    p: np.ndarray

    def to_mapping(self) -> dict:
        """Global quantities as plain lists (cell-level arrays are left out)."""
        keys = ("beta", "alpha", "gamma", "q", "cluster_means", "cluster_sds", "cluster_weights")
        return {k: np.asarray(getattr(self, k)).tolist() for k in keys}


def _broadcast(values, length, name):
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.size == 1:
        return np.full(length, arr[0])
    if arr.size != length:
        raise ConfigError(f"{name} has {arr.size} entries, expected 1 or {length}")
    return arr


def logistic(psi):
    psi = np.asarray(psi, dtype=float)
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-psi))


def linear_predictor(x, y, beta, alpha, gamma, indicator):
    """psi[s, t] = alpha_t I[s, t] + beta'x_s + gamma_t'y[s, t]."""
    return alpha[None, :] * indicator + (x @ beta)[:, None] + np.einsum("stq,tq->st", y, gamma)


def simulate_dataset(config: GenerationConfig, rng=None):
    """Draw a panel from the full generative hierarchy.  Returns (Dataset, GroundTruth)."""
    gen = as_generator(config.seed if rng is None else rng)
    S, T = config.segments, config.months
    P, Q = len(config.covariates), len(config.time_varying)
    x_mean = _broadcast(config.covariate_mean, P, "covariate_mean")
    x_sd = _broadcast(config.covariate_sd, P, "covariate_sd")
    y_mean = _broadcast(config.tv_mean, Q, "tv_mean") if Q else np.zeros(0)
    y_sd = _broadcast(config.tv_sd, Q, "tv_sd") if Q else np.zeros(0)
    beta = _broadcast(config.true_beta, P, "true_beta")
    alpha = _broadcast(config.true_alpha, T, "true_alpha")
    q = _broadcast(config.true_q, T, "true_q")
    if np.any((q < 0) | (q > 1)):
        raise ConfigError("true_q must lie in [0, 1]")
    g = np.atleast_1d(np.asarray(config.true_gamma, dtype=float))
    if Q == 0:
        gamma = np.zeros((T, 0))
    elif g.size in (1, Q):
        gamma = np.tile(_broadcast(g, Q, "true_gamma"), (T, 1))
    elif g.size == T * Q:
        gamma = g.reshape(T, Q)
    else:
        raise ConfigError(f"true_gamma needs 1, {Q} or {T * Q} entries")
    means = np.asarray(config.cluster_means, dtype=float)
    sds = np.asarray(config.cluster_sds, dtype=float)
    weights = np.asarray(config.cluster_weights, dtype=float)
    weights = weights / weights.sum()

    x = x_mean + x_sd * gen.standard_normal((S, P))
    y = y_mean + y_sd * gen.standard_normal((S, T, Q))
    z = gen.choice(len(weights), size=(S, T), p=weights)
    nstar = truncated_normal_draws(means[z], sds[z], -0.5, np.inf, gen)
    n = np.floor(nstar + 0.5).astype(np.int64)
    indicator = (gen.random((S, T)) < q[None, :]).astype(np.int8)
    psi = linear_predictor(x, y, beta, alpha, gamma, indicator)
    p = logistic(psi)
    k = gen.binomial(n, p)

    ids = tuple(f"seg{s + 1:0{len(str(S))}d}" for s in range(S))
    data = Dataset(ids, tuple(config.covariates), tuple(config.time_varying), x, k, y)
    truth = GroundTruth(beta, alpha, gamma, q, means, sds, weights, z, nstar, n, indicator, psi, p)
    return data, truth
