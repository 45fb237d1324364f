"""Flat ``key = value`` configuration files.

One file may hold schema, generation and run keys side by side; each consumer
picks the keys it knows.  Values are parsed as JSON when possible (numbers,
``true``/``false``, ``[1, 2]`` lists), otherwise kept as bare strings::

    # comment
    covariates = ["length", "speed_limit"]
    iterations = 20000
    segments_path = data/segments.csv
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


def parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    lowered = text.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    if lowered in ("inf", "+inf"):
        return math.inf
    if lowered == "-inf":
        return -math.inf
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = parse_value(value)
    return out


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), str(path))


def parse_overrides(pairs) -> dict:
    """Parse ``["key=value", ...]`` command-line overrides."""
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override must look like key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip().replace("-", "_")] = parse_value(value)
    return out


def dump_config(mapping: dict) -> str:
    lines = []
    for key, value in mapping.items():
        if isinstance(value, str):
            lines.append(f"{key} = {value}")
        elif isinstance(value, float) and math.isinf(value):
            lines.append(f"{key} = {'inf' if value > 0 else '-inf'}")
        else:
            lines.append(f"{key} = {json.dumps(value)}")
    return "\n".join(lines) + "\n"


PATH_KEYS = ("segments_path", "panel_path")


def known_keys() -> set:
    keys = set(PATH_KEYS)
    for cls in (Schema, RunConfig, GenerationConfig):
        keys |= {f.name for f in dataclasses.fields(cls)}
    return keys


def check_keys(mapping: dict, source="config"):
    unknown = sorted(set(mapping) - known_keys())
    if unknown:
        raise ConfigError(f"{source}: unknown keys {unknown}")


def _from_mapping(cls, mapping: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {k: v for k, v in mapping.items() if k in names}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class Schema:
    """Column layout of the segment and panel files."""

    covariates: tuple[str, ...] = ()
    time_varying: tuple[str, ...] = ()
    months: int = 12
    flag_covariates: tuple[str, ...] = ()
    nonnegative_covariates: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("covariates", "time_varying", "flag_covariates", "nonnegative_covariates"):
            value = getattr(self, name)
            if isinstance(value, str):
                value = (value,)
            object.__setattr__(self, name, tuple(value))
        if not self.covariates:
            raise ConfigError("schema declares no covariates")
        if self.months < 1:
            raise ConfigError("months must be at least 1")
        dup = {c for c in self.covariates + self.time_varying if (self.covariates + self.time_varying).count(c) > 1}
        if dup:
            raise ConfigError(f"duplicate covariate names: {sorted(dup)}")
        for name in self.flag_covariates + self.nonnegative_covariates:
            if name not in self.covariates:
                raise ConfigError(f"{name!r} is not a declared covariate")

    @classmethod
    def from_mapping(cls, mapping):
        return _from_mapping(cls, mapping)


@dataclass(frozen=True)
class RunConfig:
    iterations: int = 20000
    burn_in: int = 10000
    thin: int = 1
    cell_thin: int = 10
    store_cells: bool = True
    chains: int = 4
    seed: int = 0
    workers: int = 1
    # exposure mixture
    clusters: int = 3
    dp_precision: float = 1.0
    mu0: float = 0.0
    d0: float = 2.0
    e0: float = 10.0
    n_cap: int = 50
    cluster_update: str = "augmented"
    init_exposure: str = "binomial"
    # collision probability
    q_a0: float = 1.0
    q_b0: float = 1.0
    beta_prior_var: float = 100.0
    tv_prior_var: float = 100.0
    pg_normal_threshold: int = 30
    standardize: bool = False
    checkpoint_every: int = 0
    checkpoint_path: str = ""
    output_dir: str = "out"

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.thin < 1 or self.cell_thin < 1:
            raise ConfigError("thinning factors must be at least 1")
        if self.chains < 1:
            raise ConfigError("chains must be at least 1")
        if self.clusters < 1:
            raise ConfigError("clusters must be at least 1")
        for name in ("dp_precision", "d0", "e0", "q_a0", "q_b0", "beta_prior_var", "tv_prior_var"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_cap < 1:
            raise ConfigError("n_cap must be positive")
        if self.cluster_update not in ("paper", "augmented"):
            raise ConfigError("cluster_update must be 'paper' or 'augmented'")
        if self.init_exposure not in ("binomial", "prior"):
            raise ConfigError("init_exposure must be 'binomial' or 'prior'")

    @classmethod
    def from_mapping(cls, mapping):
        return _from_mapping(cls, mapping)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_mapping(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class GenerationConfig:
    """Forward-simulation settings.  List-valued keys broadcast from scalars."""

    segments: int = 200
    months: int = 12
    seed: int = 0
    covariates: tuple = ("x1", "x2")
    time_varying: tuple = ("rain",)
    covariate_mean: list = field(default_factory=lambda: [0.0])
    covariate_sd: list = field(default_factory=lambda: [1.0])
    tv_mean: list = field(default_factory=lambda: [0.0])
    tv_sd: list = field(default_factory=lambda: [1.0])
    true_beta: list = field(default_factory=lambda: [0.5, -0.5])
    true_alpha: list = field(default_factory=lambda: [0.0])
    true_gamma: list = field(default_factory=lambda: [0.0])
    true_q: list = field(default_factory=lambda: [0.5])
    cluster_means: list = field(default_factory=lambda: [0.0, 2.0, 6.0])
    cluster_sds: list = field(default_factory=lambda: [0.3, 1.0, 2.0])
    cluster_weights: list = field(default_factory=lambda: [0.6, 0.3, 0.1])

    def __post_init__(self):
        for name in ("covariates", "time_varying"):
            value = getattr(self, name)
            object.__setattr__(self, name, (value,) if isinstance(value, str) else tuple(value))
        if self.segments < 1:
            raise ConfigError("segments must be positive")
        if self.months < 1:
            raise ConfigError("months must be positive")
        if not self.covariates:
            raise ConfigError("generation config declares no covariates")
        n_clusters = len(self.cluster_means)
        if n_clusters == 0 or len(self.cluster_sds) != n_clusters or len(self.cluster_weights) != n_clusters:
            raise ConfigError("cluster_means, cluster_sds and cluster_weights must have equal nonzero length")
        if any(not s > 0 for s in self.cluster_sds):
            raise ConfigError("cluster_sds must be positive")
        if any(w < 0 for w in self.cluster_weights) or sum(self.cluster_weights) <= 0:
            raise ConfigError("cluster_weights must be nonnegative with positive sum")
        if any(m <= -0.5 for m in self.cluster_means):
            raise ConfigError("cluster_means must exceed -0.5")

    @classmethod
    def from_mapping(cls, mapping):
        return _from_mapping(cls, mapping)

    def to_mapping(self) -> dict:
        out = dataclasses.asdict(self)
        out["covariates"] = list(self.covariates)
        out["time_varying"] = list(self.time_varying)
        return out
