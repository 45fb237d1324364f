"""Posterior draw storage and its CSV/JSON representation.

Global parameters are written long-format (``chain, iteration, parameter,
value``); thinned per-cell samples go to a second CSV (``chain, iteration,
segment_id, month, n, p, indicator``).  Floats are written with 17
significant digits so a write/read cycle is exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

FLOAT_FORMAT = "%.17g"


@dataclass
class DrawStore:
    names: list
    chain: np.ndarray
    iteration: np.ndarray
    values: np.ndarray
    segment_ids: tuple = ()
    months: int = 0
    cell_chain: np.ndarray = None
    cell_iteration: np.ndarray = None
    cell_n: np.ndarray = None
    cell_p: np.ndarray = None
    cell_indicator: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.names = list(self.names)
        self.chain = np.asarray(self.chain, dtype=np.int64)
        self.iteration = np.asarray(self.iteration, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.chain), len(self.names))
        if self.cell_n is None:
            S, T = len(self.segment_ids), self.months
            self.cell_chain = np.zeros(0, dtype=np.int64)
            self.cell_iteration = np.zeros(0, dtype=np.int64)
            self.cell_n = np.zeros((0, S, T), dtype=np.int64)
            self.cell_p = np.zeros((0, S, T))
            self.cell_indicator = np.zeros((0, S, T), dtype=np.int8)
        self._index = {name: i for i, name in enumerate(self.names)}

    def __len__(self):
        return len(self.chain)

    @property
    def has_cells(self) -> bool:
        return self.cell_n is not None and len(self.cell_n) > 0

    @property
    def chains(self) -> list:
        return sorted(set(self.chain.tolist()))

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self._index[name]]

    def by_chain(self, name: str) -> np.ndarray:
        """(chains, draws) matrix; chains are truncated to a common length."""
        col = self.column(name)
        parts = [col[self.chain == c] for c in self.chains]
        m = min(len(p) for p in parts)
        return np.stack([p[:m] for p in parts])

    def select(self, prefix: str) -> list:
        return [n for n in self.names if n.startswith(prefix + "[")]

    def values_at(self, chain, iteration) -> np.ndarray:
        """Rows matching the given (chain, iteration) pairs, in that order."""
        key = {(int(c), int(i)): r for r, (c, i) in enumerate(zip(self.chain, self.iteration))}
        try:
            rows = [key[(int(c), int(i))] for c, i in zip(chain, iteration)]
        except KeyError as exc:
            raise KeyError(f"no global draw recorded for (chain, iteration) {exc.args[0]}") from None
        return self.values[rows]

    @classmethod
    def concat(cls, stores):
        stores = list(stores)
        first = stores[0]
        for s in stores[1:]:
            if s.names != first.names:
                raise ValueError("cannot concatenate draw stores with different parameters")
        meta = dict(first.metadata)
        meta["chains"] = [m for s in stores for m in s.metadata.get("chains", [])]
        return cls(
            first.names,
            np.concatenate([s.chain for s in stores]),
            np.concatenate([s.iteration for s in stores]),
            np.concatenate([s.values for s in stores]),
            first.segment_ids,
            first.months,
            np.concatenate([s.cell_chain for s in stores]),
            np.concatenate([s.cell_iteration for s in stores]),
            np.concatenate([s.cell_n for s in stores]),
            np.concatenate([s.cell_p for s in stores]),
            np.concatenate([s.cell_indicator for s in stores]),
            meta,
        )

    # -- files ---------------------------------------------------------------

    def write(self, draws_path, cells_path=None, meta_path=None):
        draws_path = Path(draws_path)
        draws_path.parent.mkdir(parents=True, exist_ok=True)
        R, K = self.values.shape
        frame = pd.DataFrame(
            {
                "chain": np.repeat(self.chain, K),
                "iteration": np.repeat(self.iteration, K),
                "parameter": np.tile(np.asarray(self.names, dtype=object), R),
                "value": self.values.ravel(),
            }
        )
        frame.to_csv(draws_path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        if cells_path is not None and self.has_cells:
            M, S, T = self.cell_n.shape
            cells = pd.DataFrame(
                {
                    "chain": np.repeat(self.cell_chain, S * T),
                    "iteration": np.repeat(self.cell_iteration, S * T),
                    "segment_id": np.tile(np.repeat(np.asarray(self.segment_ids, dtype=object), T), M),
                    "month": np.tile(np.arange(1, T + 1), M * S),
                    "n": self.cell_n.ravel(),
                    "p": self.cell_p.ravel(),
                    "indicator": self.cell_indicator.ravel(),
                }
            )
            cells.to_csv(cells_path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        if meta_path is not None:
            Path(meta_path).write_text(json.dumps(self.metadata, indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, draws_path, cells_path=None, meta_path=None, dataset=None):
        frame = pd.read_csv(draws_path, float_precision="round_trip")
        missing = {"chain", "iteration", "parameter", "value"} - set(frame.columns)
        if missing:
            raise ValueError(f"{draws_path}: missing columns {sorted(missing)}")
        names = list(dict.fromkeys(frame["parameter"].tolist()))
        K = len(names)
        if len(frame) % K:
            raise ValueError(f"{draws_path}: ragged draw records")
        rows = frame.iloc[::K]
        values = frame["value"].to_numpy().reshape(-1, K)
        check = frame["parameter"].to_numpy().reshape(-1, K)
        if not (check == np.asarray(names, dtype=object)).all():
            raise ValueError(f"{draws_path}: parameter order differs between records")
        metadata = json.loads(Path(meta_path).read_text()) if meta_path and Path(meta_path).exists() else {}
        segment_ids = tuple(dataset.segment_ids) if dataset is not None else tuple(metadata.get("segment_ids", ()))
        months = dataset.T if dataset is not None else int(metadata.get("months", 0))
        store = cls(names, rows["chain"].to_numpy(), rows["iteration"].to_numpy(), values, segment_ids, months,
                    metadata=metadata)
        if cells_path is not None and Path(cells_path).exists():
            cells = pd.read_csv(cells_path, float_precision="round_trip", dtype={"segment_id": str})
            S = len(segment_ids)
            if S == 0:
                segment_ids = tuple(dict.fromkeys(cells["segment_id"].tolist()))
                S = len(segment_ids)
                store.segment_ids = segment_ids
            T = months or int(cells["month"].max())
            store.months = T
            if len(cells) % (S * T):
                raise ValueError(f"{cells_path}: cell records do not form complete S x T grids")
            order = {sid: i for i, sid in enumerate(segment_ids)}
            seg = cells["segment_id"].map(order)
            if seg.isna().any():
                raise ValueError(f"{cells_path}: unknown segment ids in cell samples")
            M = len(cells) // (S * T)
            heads = cells.iloc[:: S * T]
            store.cell_chain = heads["chain"].to_numpy()
            store.cell_iteration = heads["iteration"].to_numpy()
            flat = np.arange(M).repeat(S * T) * S * T + seg.to_numpy() * T + (cells["month"].to_numpy() - 1)
            for attr, col, dtype in (("cell_n", "n", np.int64), ("cell_p", "p", float), ("cell_indicator", "indicator", np.int8)):
                arr = np.empty(M * S * T, dtype=dtype)
                arr[flat] = cells[col].to_numpy()
                setattr(store, attr, arr.reshape(M, S, T))
        return store
