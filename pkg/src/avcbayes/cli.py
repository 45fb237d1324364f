"""Command-line interface.

Every subcommand reads a flat ``key = value`` config (``--config``) and takes
``--set key=value`` overrides.  Outputs go to ``output_dir``: CSV/JSON files
plus PNG figures unless ``--no-plots`` is given.

Exit codes: 0 success, 1 usage or config error, 2 data validation error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import analytics, plotting
from .config import ConfigError, GenerationConfig, RunConfig, Schema, check_keys, load_config, parse_overrides
from .data import DatasetValidationError, load_dataset, simulate_dataset, write_dataset
from .diagnostics import DiagnosticsError, diagnose
from .distributions import DecompositionError, InvalidParameterError
from .draws import FLOAT_FORMAT, DrawStore
from .sampler import SamplerError, fit

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("avcbayes")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# settings and paths


class Settings:
    def __init__(self, args):
        mapping = load_config(args.config) if args.config else {}
        mapping.update(parse_overrides(args.set))
        check_keys(mapping, args.config or "overrides")
        self.mapping = mapping
        self.run = RunConfig.from_mapping(mapping)
        self.out = Path(self.run.output_dir)

    def path(self, key, default_name):
        return Path(self.mapping.get(key) or self.out / default_name)

    def schema(self) -> Schema:
        return Schema.from_mapping(self.mapping)

    def dataset(self):
        if "covariates" not in self.mapping:
            raise ConfigError("config must list `covariates` (and `time_varying`) to read the data files")
        return load_dataset(self.path("segments_path", "segments.csv"), self.path("panel_path", "panel.csv"),
                            self.schema())

    @property
    def draws_files(self):
        return self.out / "draws.csv", self.out / "cells.csv", self.out / "draws_meta.json"

    def draws(self, dataset=None) -> DrawStore:
        draws, cells, meta = self.draws_files
        if not draws.exists():
            raise UsageError(f"no draws at {draws}; run `fit` first")
        return DrawStore.read(draws, cells, meta, dataset=dataset)


def _write_csv(frame: pd.DataFrame, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    print(f"wrote {path}")


def _plot(args, fn, *a):
    if not args.no_plots:
        print(f"wrote {fn(*a)}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args, st: Settings):
    gen = GenerationConfig.from_mapping(st.mapping)
    dataset, truth = simulate_dataset(gen)
    seg, panel = st.path("segments_path", "segments.csv"), st.path("panel_path", "panel.csv")
    write_dataset(dataset, seg, panel)
    st.out.mkdir(parents=True, exist_ok=True)
    truth_path = st.out / "truth.json"
    truth_path.write_text(json.dumps(truth.to_mapping(), indent=2) + "\n")
    print(f"wrote {seg}\nwrote {panel}\nwrote {truth_path}")
    S, T = dataset.S, dataset.T
    cells = pd.DataFrame({
        "segment_id": np.repeat(np.asarray(dataset.segment_ids, dtype=object), T),
        "month": np.tile(np.arange(1, T + 1), S),
        "n": truth.n.ravel(),
        "p": truth.p.ravel(),
        "indicator": truth.indicator.ravel(),
    })
    _write_csv(cells, st.out / "truth_cells.csv")


def cmd_fit(args, st: Settings):
    dataset = st.dataset()
    store = fit(dataset, st.run, resume=args.resume)
    draws, cells, meta = st.draws_files
    store.write(draws, cells, meta)
    print(f"wrote {draws}")
    if store.has_cells:
        print(f"wrote {cells}")
    print(f"wrote {meta}")
    names = store.select("beta") + store.select("alpha0")[:3]
    _plot(args, plotting.plot_traces, store, names, st.out / "traces.png")


def cmd_diagnose(args, st: Settings):
    report = diagnose(st.draws())
    text = report.to_text()
    (st.out / "diagnostics.txt").write_text(text + "\n")
    (st.out / "diagnostics.json").write_text(report.to_json() + "\n")
    print(text)
    print(f"wrote {st.out / 'diagnostics.txt'}\nwrote {st.out / 'diagnostics.json'}")


def cmd_summarize(args, st: Settings):
    rows = analytics.summarize(st.draws(), level=args.level)
    frame = pd.DataFrame(
        [(r.name, r.mean, r.lower, r.upper, r.significant) for r in rows],
        columns=["parameter", "mean", "lower", "upper", "significant"],
    )
    _write_csv(frame, st.out / "summary.csv")


def cmd_hotspots(args, st: Settings):
    dataset = st.dataset()
    store = st.draws(dataset)
    months = [int(m) for m in args.months.split(",")] if args.months else None
    ranked = analytics.rank_hotspots(analytics.expected_avc(store), dataset.segment_ids, args.top_k, months)
    frame = pd.DataFrame([(h.rank, h.segment_id, h.month, h.expected) for h in ranked],
                         columns=["rank", "segment_id", "month", "expected_avc"])
    _write_csv(frame, st.out / "hotspots.csv")
    _plot(args, plotting.plot_hotspots, ranked, st.out / "hotspots.png")


def cmd_scenario(args, st: Settings):
    dataset = st.dataset()
    store = st.draws(dataset)
    segments = tuple(args.segments.split(",")) if args.segments else None
    edit = analytics.ScenarioEdit(args.covariate, delta=args.delta, value=args.value, segments=segments)
    res = analytics.scenario_delta(store, dataset, edit)
    S, T = dataset.S, dataset.T
    frame = pd.DataFrame({
        "segment_id": np.repeat(np.asarray(dataset.segment_ids, dtype=object), T),
        "month": np.tile(np.arange(1, T + 1), S),
        "p_old": res.p_old.ravel(),
        "p_new": res.p_new.ravel(),
        "delta_p": res.delta_p.ravel(),
        "delta_expected_avc": res.delta_expected.ravel(),
        "draws_negative": res.draws_negative.ravel(),
        "draws": res.draws,
    })
    _write_csv(frame, st.out / "scenario.csv")
    neg = float((res.delta_p < 0).mean())
    print(f"cells with lower collision probability: {100 * neg:.1f}%  (draws per cell {res.draws}, "
          f"cell thinning {res.cell_thin})")
    _plot(args, plotting.plot_scenario, res, st.out / "scenario.png")


def cmd_monthly(args, st: Settings):
    dataset = st.dataset()
    rows = analytics.monthly_totals(st.draws(dataset), dataset, level=args.level)
    frame = pd.DataFrame([(m.month, m.observed, m.expected, m.lower, m.upper) for m in rows],
                         columns=["month", "observed", "expected", "lower", "upper"])
    _write_csv(frame, st.out / "monthly.csv")
    _plot(args, plotting.plot_monthly, rows, st.out / "monthly.png")


COMMANDS = {
    "simulate": (cmd_simulate, "generate a synthetic dataset with known truth"),
    "fit": (cmd_fit, "run the Gibbs sampler and write posterior draws"),
    "diagnose": (cmd_diagnose, "r-hat, effective sample size and MH acceptance"),
    "summarize": (cmd_summarize, "posterior means and credible intervals"),
    "hotspots": (cmd_hotspots, "rank segment-months by expected collisions"),
    "scenario": (cmd_scenario, "change in collision probability under a covariate edit"),
    "monthly": (cmd_monthly, "observed against expected monthly totals"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="avcbayes", description="Collision counts with latent exposure: fit and analyse.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log sampler progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, helptext) in COMMANDS.items():
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--no-plots", action="store_true", help="skip PNG figures")
        if name == "fit":
            p.add_argument("--resume", action="store_true", help="continue chains from their checkpoints")
        if name in ("summarize", "monthly"):
            p.add_argument("--level", type=float, default=0.95, help="credible level")
        if name == "hotspots":
            p.add_argument("--top-k", type=int, default=20)
            p.add_argument("--months", help="comma-separated 1-based months to rank")
        if name == "scenario":
            p.add_argument("--covariate", required=True)
            group = p.add_mutually_exclusive_group(required=True)
            group.add_argument("--delta", type=float, help="additive change")
            group.add_argument("--value", type=float, help="replacement value")
            p.add_argument("--segments", help="comma-separated segment ids (default all)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handler = COMMANDS[args.command][0]
    try:
        settings = Settings(args)
        handler(args, settings)
    except (ConfigError, UsageError, analytics.AnalyticsError, DiagnosticsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DatasetValidationError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SamplerError, DecompositionError, InvalidParameterError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
