"""Declarative pipeline configuration loaded from TOML."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigInvalid
from .simulator import ScenarioConfig, preset
from .tagging import TaggingThresholds

DEFAULT_CONFIG = """\
# rmtnet pipeline configuration. Relative paths resolve against this file.

[inputs]
trades = "trades.csv"
play = "play.csv"          # optional; leave empty to skip play-style analysis
market = "market.csv"      # optional; needed for correlation and market size
format = "csv"             # csv | jsonl
account_map = ""           # optional id,account CSV that merges characters

[windowing]
epoch = 1483228800         # weeks start here (UTC seconds); weekly maintenance day
n_weeks = 0                # 0 = as many weeks as the trade log spans
weeks = []                 # subset of week indices to analyse; empty = all

[detection]
algorithm = "multilevel"   # multilevel gave the highest modularity on weekly trade graphs
seed = 0
resolution = 1.0
weighted = true
compare = []               # extra algorithms to tabulate, e.g. ["fastgreedy", "label_propagation"]
summary = true             # network-level statistics for every week

[clustering]
community_k = 5            # five community types
user_k = 7                 # seven play styles
n_init = 10
seed = 0

[tagging]
giant_min_share = 0.05
giant_alpha_min = 2.0      # giant component exponents observed around 2.7-2.8
giant_alpha_max = 3.5
power_law_min_tail = 50
chain_max_mean_degree = 2.5
chain_min_diameter_ratio = 0.3333333333333333
chain_min_assortativity = 0.2
large_star_min_size = 50
large_star_max_assortativity = -0.7
large_star_min_std_ratio = 3.0
small_star_max_assortativity = -0.5

[estimation]
permutations = 0           # > 0 switches correlation p-values to a permutation test
phase_weeks = []           # optional phase lengths for the concentration trend

[output]
dir = "out"
graphml = true

[simulation]
preset = "paper-scale"
# any scenario field may be overridden here, for example:
# seed = 7
# rmt_share = 0.05         # about 5% of all trades are RMT sales
# shop_limit = 40          # weekly shop events before a chain hands off its inventory
"""


@dataclass(frozen=True)
class InputsConfig:
    trades: str = "trades.csv"
    play: str = "play.csv"
    market: str = "market.csv"
    format: str = "csv"
    account_map: str = ""


@dataclass(frozen=True)
class WindowingConfig:
    epoch: int = 1_483_228_800
    n_weeks: int = 0
    weeks: tuple[int, ...] = ()


@dataclass(frozen=True)
class DetectionConfig:
    algorithm: str = "multilevel"
    seed: int = 0
    resolution: float = 1.0
    weighted: bool = True
    compare: tuple[str, ...] = ()
    summary: bool = True


@dataclass(frozen=True)
class ClusteringConfig:
    community_k: int = 5
    user_k: int = 7
    n_init: int = 10
    seed: int = 0


@dataclass(frozen=True)
class EstimationConfig:
    permutations: int = 0
    phase_weeks: tuple[int, ...] = ()


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    graphml: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    inputs: InputsConfig = InputsConfig()
    windowing: WindowingConfig = WindowingConfig()
    detection: DetectionConfig = DetectionConfig()
    clustering: ClusteringConfig = ClusteringConfig()
    tagging: TaggingThresholds = TaggingThresholds()
    estimation: EstimationConfig = EstimationConfig()
    output: OutputConfig = OutputConfig()
    simulation: Mapping[str, Any] = field(default_factory=lambda: {"preset": "paper-scale"})
    base_dir: Path = Path(".")

    def resolve(self, name: str) -> Path | None:
        value = getattr(self.inputs, name)
        if not value:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def scenario(self, **overrides) -> ScenarioConfig:
        """Scenario for ``simulate``: the named preset with [simulation] overrides applied."""
        sim = dict(self.simulation)
        base = preset(sim.pop("preset", "paper-scale"))
        return ScenarioConfig.from_mapping({**sim, **overrides}, base)


_SECTIONS = {
    "inputs": InputsConfig,
    "windowing": WindowingConfig,
    "detection": DetectionConfig,
    "clustering": ClusteringConfig,
    "tagging": TaggingThresholds,
    "estimation": EstimationConfig,
    "output": OutputConfig,
}


def _section(cls, values: Mapping[str, Any], name: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigInvalid(f"[{name}] has unknown key(s): {sorted(unknown)}")
    base = cls()
    kwargs = {}
    for k, v in values.items():
        default = getattr(base, k)
        if isinstance(default, tuple):
            if not isinstance(v, list):
                raise ConfigInvalid(f"[{name}] {k} must be a list")
            v = tuple(v)
        elif isinstance(default, bool):
            if not isinstance(v, bool):
                raise ConfigInvalid(f"[{name}] {k} must be true or false")
        elif isinstance(default, (int, float)):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigInvalid(f"[{name}] {k} must be a number")
            v = type(default)(v)
        elif isinstance(default, str) and not isinstance(v, str):
            raise ConfigInvalid(f"[{name}] {k} must be a string")
        kwargs[k] = v
    return replace(base, **kwargs)


def config_from_mapping(data: Mapping[str, Any], base_dir: Path | str = ".") -> PipelineConfig:
    unknown = set(data) - set(_SECTIONS) - {"simulation"}
    if unknown:
        raise ConfigInvalid(f"unknown config section(s): {sorted(unknown)}")
    parts = {name: _section(cls, data.get(name, {}), name) for name, cls in _SECTIONS.items()}
    cfg = PipelineConfig(**parts, simulation=dict(data.get("simulation", {"preset": "paper-scale"})), base_dir=Path(base_dir))
    if cfg.inputs.format not in ("csv", "jsonl"):
        raise ConfigInvalid("inputs.format must be csv or jsonl")
    if cfg.clustering.community_k < 1 or cfg.clustering.user_k < 1 or cfg.clustering.n_init < 1:
        raise ConfigInvalid("clustering k and n_init must be positive")
    if any(w < 0 for w in cfg.windowing.weeks) or cfg.windowing.n_weeks < 0:
        raise ConfigInvalid("week indices must be non-negative")
    return cfg


def load_config(path: str | Path | None = None) -> PipelineConfig:
    """Load a TOML config file; ``None`` gives the built-in defaults."""
    if path is None:
        return config_from_mapping(tomllib.loads(DEFAULT_CONFIG))
    p = Path(path)
    try:
        data = tomllib.loads(p.read_text())
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {p}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"invalid TOML in {p}: {exc}") from None
    return config_from_mapping(data, p.parent)
