"""Experiment configuration files (YAML) and flat ``--section.key value`` overrides."""

import copy
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .cgmm import EmConfig
from .errors import ConfigError, SemiBlindError
from .estimators import ESTIMATORS
from .scenarios import ArrayGeometry, ClusterScenario
from .simulator import SystemConfig

__all__ = [
    "ExperimentConfig",
    "SWEEP_TYPES",
    "load_config",
    "parse_config",
    "dump_config",
    "apply_overrides",
]

SWEEP_TYPES = {"snr": "snr_db", "snapshots": "snapshots", "users": "users"}


@dataclass
class ScenarioSection:
    vertical_count: int = 4
    horizontal_count: int = 16
    vertical_spacing: float = 1.0
    horizontal_spacing: float = 0.5
    cluster_count_range: list = field(default_factory=lambda: [1, 3])
    angular_spread_deg: float = 5.0
    path_count_per_cluster: int = 20
    azimuth_range_deg: list = field(default_factory=lambda: [-60.0, 60.0])
    elevation_range_deg: list = field(default_factory=lambda: [-15.0, 15.0])
    power_profile: str = "random"
    train_count: int = 150000
    test_count: int = 1000
    normalization: float = None

    def geometry(self):
        return ArrayGeometry(self.vertical_count, self.horizontal_count,
                             self.vertical_spacing, self.horizontal_spacing)

    def cluster_scenario(self):
        return ClusterScenario(
            cluster_count_range=tuple(int(x) for x in self.cluster_count_range),
            angular_spread=float(np.deg2rad(self.angular_spread_deg)),
            path_count_per_cluster=self.path_count_per_cluster,
            azimuth_range=tuple(float(x) for x in np.deg2rad(self.azimuth_range_deg)),
            elevation_range=tuple(float(x) for x in np.deg2rad(self.elevation_range_deg)),
            power_profile=self.power_profile,
        )


@dataclass
class SystemSection:
    users: int = 8
    snapshots: int = 200
    snr_db: float = 0.0
    pilot_type: str = "identity"
    include_pilots: bool = False


@dataclass
class GmmSection:
    components: int = 64
    max_iterations: int = 300
    rel_tolerance: float = 1e-6
    covariance_floor: float = 1e-6
    init_strategy: str = "kmeans_plus_plus"


@dataclass
class SweepSection:
    type: str = "snr"
    grid: list = field(default_factory=lambda: [-15, -10, -5, 0, 5, 10, 15, 20])
    estimators: list = field(default_factory=lambda: list(ESTIMATORS))
    trials: int = 1000


@dataclass
class BenchSection:
    snr_db: list = field(default_factory=lambda: [0.0])
    repetitions: int = 200


@dataclass
class IoSection:
    train_path: str = "train.cvd"
    test_path: str = "test.cvd"
    model_path: str = "model.gmm"
    report_path: str = "fit_report.csv"
    output_path: str = "sweep.csv"
    bench_path: str = "bench.csv"


_SECTIONS = {
    "scenario": ScenarioSection,
    "system": SystemSection,
    "gmm": GmmSection,
    "sweep": SweepSection,
    "bench": BenchSection,
    "io": IoSection,
}
_REQUIRED = ("scenario", "system", "gmm", "sweep", "io")


@dataclass
class ExperimentConfig:
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    system: SystemSection = field(default_factory=SystemSection)
    gmm: GmmSection = field(default_factory=GmmSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    bench: BenchSection = field(default_factory=BenchSection)
    io: IoSection = field(default_factory=IoSection)
    seed: int = 0
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    @property
    def antennas(self):
        return self.scenario.vertical_count * self.scenario.horizontal_count

    def path(self, name):
        p = Path(getattr(self.io, name))
        return p if p.is_absolute() else self.base_dir / p

    def em_config(self):
        g = self.gmm
        return EmConfig(
            component_count=g.components,
            max_iterations=g.max_iterations,
            rel_tolerance=g.rel_tolerance,
            covariance_floor=g.covariance_floor,
            init_strategy=g.init_strategy,
            seed=self.seed,
        )

    def system_config(self):
        s = self.system
        return SystemConfig(
            antennas=self.antennas,
            users=s.users,
            snapshots=s.snapshots,
            snr_db=s.snr_db,
            pilot_type=s.pilot_type,
            include_pilots=s.include_pilots,
        )

    def to_dict(self):
        out = {name: asdict(getattr(self, name)) for name in _SECTIONS}
        out["seed"] = self.seed
        return out


def _coerce(value, default, where):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(where, f"expected a boolean, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(where, f"expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float) or default is None:
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(where, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(where, f"expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(where, f"expected a list, got {value!r}")
        return list(value)
    return value


def _build_section(name, raw):
    cls = _SECTIONS[name]
    if not isinstance(raw, dict):
        raise ConfigError(name, "section must be a mapping")
    defaults = cls()
    known = {f.name for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{name}.{key}", "unknown field")
    kwargs = {}
    for f in fields(cls):
        if f.name in raw:
            kwargs[f.name] = _coerce(raw[f.name], getattr(defaults, f.name), f"{name}.{f.name}")
    return cls(**kwargs)


def _validate(cfg):
    sc = cfg.scenario
    try:
        sc.geometry()
        sc.cluster_scenario()
    except SemiBlindError as exc:
        raise ConfigError("scenario", str(exc)) from None
    for key in ("train_count", "test_count"):
        if getattr(sc, key) < 1:
            raise ConfigError(f"scenario.{key}", "must be positive")
    if sc.normalization is not None and sc.normalization <= 0:
        raise ConfigError("scenario.normalization", "must be positive")
    try:
        cfg.system_config()
    except SemiBlindError as exc:
        raise ConfigError("system", str(exc)) from None
    try:
        cfg.em_config()
    except SemiBlindError as exc:
        raise ConfigError("gmm", str(exc)) from None
    sw = cfg.sweep
    if sw.type not in SWEEP_TYPES:
        raise ConfigError("sweep.type", f"must be one of {sorted(SWEEP_TYPES)}, got {sw.type!r}")
    if not sw.grid:
        raise ConfigError("sweep.grid", "must not be empty")
    for est in sw.estimators:
        if est not in ESTIMATORS:
            raise ConfigError("sweep.estimators", f"unknown estimator {est!r}")
    if sw.trials < 1:
        raise ConfigError("sweep.trials", "must be positive")
    if sw.type == "users":
        for j in sw.grid:
            if int(j) != j or not 1 <= j <= cfg.antennas:
                raise ConfigError("sweep.grid", f"user count {j} outside 1..{cfg.antennas}")
    if cfg.bench.repetitions < 1:
        raise ConfigError("bench.repetitions", "must be positive")


def parse_config(raw, base_dir="."):
    """Build an :class:`ExperimentConfig` from a parsed mapping."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a mapping")
    for key in raw:
        if key not in _SECTIONS and key != "seed":
            raise ConfigError(key, "unknown section")
    for name in _REQUIRED:
        if name not in raw:
            raise ConfigError(name, "missing section")
    sections = {name: _build_section(name, raw[name]) for name in _SECTIONS if name in raw}
    seed = _coerce(raw.get("seed", 0), 0, "seed")
    cfg = ExperimentConfig(**sections, seed=seed, base_dir=Path(base_dir))
    _validate(cfg)
    return cfg


def load_config(path):
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML: {exc}".replace("\n", " ")) from None
    return parse_config(raw, base_dir=path.parent)


def dump_config(cfg):
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def apply_overrides(raw, overrides):
    """Return a copy of ``raw`` with ``{"section.key": value}`` pairs applied.

    String values are parsed as YAML scalars, so ``"5"`` becomes ``5`` and
    ``"[1, 2]"`` a list.
    """
    raw = copy.deepcopy(raw)
    for dotted, value in overrides.items():
        if isinstance(value, str):
            value = yaml.safe_load(value)
        parts = dotted.split(".")
        node = raw
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(dotted, "cannot override inside a non-mapping")
        node[parts[-1]] = value
    return raw
