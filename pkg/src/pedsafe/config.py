"""Scenario configuration: a TOML file mapped onto nested dataclasses."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path as FsPath

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .control import ConfigError, ControllerGains, Path, PidGains
from .decision import DecisionConfig
from .intent import FilterConfig
from .pedestrian import EnvironmentMap, GpfaParams, Obstacle, StateSpaceModel
from .reach import DEFAULT_RADII, LEVELS
from .vehicle import VehicleParams

SCHEMA_VERSION = 1


@dataclass
class PathSection:
    waypoints: list
    v_r: float = 2.5


@dataclass
class VehicleSection:
    initial: list | None = None  # [x, y, phi, v, theta]; None starts at rest on the path start
    L: float = 2.4
    phi_max: float = 0.61
    a_max: float = 2.5
    u_max: float = 1.0

    def params(self) -> VehicleParams:
        return VehicleParams(self.L, self.phi_max, self.a_max, self.u_max)


@dataclass
class ControllerSection:
    speed: dict = field(default_factory=lambda: dataclasses.asdict(ControllerGains().speed))
    steering: dict = field(default_factory=lambda: dataclasses.asdict(ControllerGains().steering))
    steer_rate_gain: float = ControllerGains().steer_rate_gain

    def gains(self) -> ControllerGains:
        return ControllerGains(PidGains(**self.speed), PidGains(**self.steering), self.steer_rate_gain)


@dataclass
class EnvironmentSection:
    goals: list
    obstacles: list = field(default_factory=list)

    def build(self) -> EnvironmentMap:
        obs = []
        for o in self.obstacles:
            o = dict(o)
            unknown = set(o) - {"start", "end", "gain"}
            if unknown:
                raise ConfigError(f"unknown obstacle keys {sorted(unknown)}")
            obs.append(Obstacle(tuple(o["start"]), tuple(o["end"]) if "end" in o else None, o.get("gain")))
        return EnvironmentMap(np.asarray(self.goals, dtype=float), obs)


@dataclass
class PedestrianSection:
    intent: int = 0
    start: list = field(default_factory=lambda: [0.0, 0.0])
    start_time: float = 0.0
    behavior_noise: list = field(default_factory=lambda: [0.0, 0.05])  # (position m, velocity m/s)
    enabled: bool = True


@dataclass
class PedModelSection:
    dt: float = 0.2
    process_noise_std: list = field(default_factory=lambda: [0.05, 0.2])
    measurement_noise_std: float = 0.25

    def model(self) -> StateSpaceModel:
        return StateSpaceModel(self.dt, tuple(self.process_noise_std), self.measurement_noise_std)


@dataclass
class NoiseSection:
    # [x, y, phi, v, theta] standard deviations of the state estimate handed to the monitor
    vehicle_estimate_std: list = field(default_factory=lambda: [0.05, 0.05, 0.005, 0.03, 0.02])
    # white disturbance on the applied [a, u], standing in for unmodeled vehicle behaviour
    vehicle_input_std: list = field(default_factory=lambda: [0.3, 0.05])


@dataclass
class RatesSection:
    base: int = 100
    controller: int = 50
    dm: int = 10
    pie: int = 5


@dataclass
class ReachSection:
    T_look: float = 3.0
    risk_level: str = "medium"
    m_cap: int = 8
    log_horizon: float = 5.0  # tubes are logged this far ahead for accuracy replay
    log_stride: int = 10  # log every n-th tube step
    radii: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_RADII.items()})


@dataclass
class DecisionSection:
    r_ped: float = 0.5
    footprint_radius: float = 1.5
    check_brake: bool = True
    intent_threshold: float | None = None  # None: MAP intent only


@dataclass
class RunSection:
    max_duration: float = 40.0
    seed: int = 0


@dataclass
class ScenarioConfig:
    name: str
    path: PathSection
    environment: EnvironmentSection
    schema_version: int = SCHEMA_VERSION
    vehicle: VehicleSection = field(default_factory=VehicleSection)
    controller: ControllerSection = field(default_factory=ControllerSection)
    gpfa: dict = field(default_factory=dict)
    pedestrian_model: PedModelSection = field(default_factory=PedModelSection)
    filter: dict = field(default_factory=dict)
    pedestrian: PedestrianSection = field(default_factory=PedestrianSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    rates: RatesSection = field(default_factory=RatesSection)
    reach: ReachSection = field(default_factory=ReachSection)
    decision: DecisionSection = field(default_factory=DecisionSection)
    run: RunSection = field(default_factory=RunSection)

    def gpfa_params(self) -> GpfaParams:
        return GpfaParams(**self.gpfa)

    def filter_config(self) -> FilterConfig:
        return FilterConfig(**self.filter)

    def decision_config(self) -> DecisionConfig:
        return DecisionConfig(self.reach.risk_level, self.reach.T_look, self.decision.r_ped,
                              self.decision.footprint_radius, self.decision.check_brake)

    def confidence_radii(self) -> dict:
        return {k: np.asarray(self.reach.radii[k], dtype=float) for k in LEVELS}

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        Path(self.path.waypoints)
        if not self.path.v_r > 0:
            raise ConfigError("v_r must be positive")
        r = self.rates
        for name in ("controller", "dm", "pie"):
            rate = getattr(r, name)
            if rate <= 0 or r.base % rate:
                raise ConfigError(f"{name} rate {rate} Hz does not divide the {r.base} Hz base tick")
        if not 1.0 <= self.reach.T_look <= self.reach.log_horizon:
            raise ConfigError("T_look must lie in [1, log_horizon]")
        if self.reach.risk_level not in LEVELS:
            raise ConfigError(f"unknown risk level {self.reach.risk_level!r}")
        radii = self.confidence_radii()
        for lvl in LEVELS:
            if radii[lvl].shape != (5,):
                raise ConfigError("confidence radii need five entries")
        if np.any(radii["low"] > radii["medium"]) or np.any(radii["medium"] > radii["high"]):
            raise ConfigError("confidence radii must be nested low <= medium <= high")
        env = self.environment.build()
        env.validate(self.gpfa_params().goal_radius)
        if not 0 <= self.pedestrian.intent < env.n_goals:
            raise ConfigError("pedestrian intent index out of range")
        self.pedestrian_model.model()
        self.filter_config()
        self.vehicle.params()
        self.controller.gains()


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"section {where!r} must be a table")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ConfigError(f"unknown keys in {where!r}: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        ftype = names[key].type
        sub = _SECTIONS.get(ftype) if isinstance(ftype, str) else None
        kwargs[key] = _build(sub, value, key) if sub else value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_SECTIONS = {
    "PathSection": PathSection,
    "VehicleSection": VehicleSection,
    "ControllerSection": ControllerSection,
    "EnvironmentSection": EnvironmentSection,
    "PedestrianSection": PedestrianSection,
    "PedModelSection": PedModelSection,
    "NoiseSection": NoiseSection,
    "RatesSection": RatesSection,
    "ReachSection": ReachSection,
    "DecisionSection": DecisionSection,
    "RunSection": RunSection,
}


def config_from_dict(data: dict) -> ScenarioConfig:
    cfg = _build(ScenarioConfig, data, "scenario")
    try:
        cfg.validate()
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path) -> ScenarioConfig:
    try:
        data = tomllib.loads(FsPath(path).read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def builtin_scenario(name: str) -> ScenarioConfig:
    """Load one of the shipped scenarios (``crossing`` or ``parallel``)."""
    text = resources.files("pedsafe.scenarios").joinpath(f"{name}.toml").read_text()
    return config_from_dict(tomllib.loads(text))


def builtin_scenario_path(name: str) -> FsPath:
    return FsPath(str(resources.files("pedsafe.scenarios").joinpath(f"{name}.toml")))


@dataclass
class MapFile:
    """Environment plus pedestrian-model settings, as read by offline intent replay."""

    environment: EnvironmentSection
    gpfa: dict = field(default_factory=dict)
    pedestrian_model: PedModelSection = field(default_factory=PedModelSection)
    filter: dict = field(default_factory=dict)
    seed: int = 0


def load_map(path) -> MapFile:
    """Read a map file; full scenario files are accepted and their extra sections ignored."""
    try:
        data = tomllib.loads(FsPath(path).read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    wanted = {f.name for f in dataclasses.fields(MapFile)}
    data = {k: v for k, v in data.items() if k in wanted}
    if "environment" not in data:
        raise ConfigError(f"{path}: no [environment] section")
    m = _build(MapFile, data, "map")
    try:
        m.environment.build().validate(GpfaParams(**m.gpfa).goal_radius)
        m.pedestrian_model.model()
        FilterConfig(**m.filter)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return m
