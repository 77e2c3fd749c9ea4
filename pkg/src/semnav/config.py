"""Run configuration: TOML/JSON loading, validation and the effective-config dump."""
from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .perception import NoiseParams, SensorParams

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

SEED_ENV = "SEMNAV_SEED"


@dataclass
class PathsConfig:
    scenes_dir: str | None = None
    prior_graph: str | None = None
    checkpoint: str | None = None
    output_dir: str = "out"


@dataclass
class SimulationConfig:
    max_steps: int = 500
    sensor: SensorParams = field(default_factory=SensorParams)
    noise: NoiseParams = field(default_factory=NoiseParams)


@dataclass
class CommsConfig:
    enabled: bool = True
    codec: str = "quantized"
    budget: int = 256
    global_cap: int | None = None


@dataclass
class PolicyConfig:
    variant: str = "greedy"  # greedy | random | learned | flat | random-actions
    central: bool = False
    priors: bool = True
    P: int = 16
    d: int = 10
    alpha: float = 0.7
    beta: float = 0.3
    gamma: float = 0.99
    learning_rate: float = 1e-4
    clip: float = 0.2
    ppo_epochs: int = 4


@dataclass
class SuiteSection:
    N: list = field(default_factory=lambda: [1, 2, 3])
    M: list = field(default_factory=lambda: [1, 2, 3])
    seeds: list = field(default_factory=lambda: [0])
    tasks_per_scene: int = 1
    split: str = "all"
    known_fraction: float = 0.7
    workers: int = 1


@dataclass
class TrainSection:
    epochs: int = 10
    episodes_per_epoch: int = 8
    M: list = field(default_factory=lambda: [1, 2, 3])
    N: int = 1
    codec_epochs: int = 500
    codec_maps: int = 200


@dataclass
class RunConfig:
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    comms: CommsConfig = field(default_factory=CommsConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    suite: SuiteSection = field(default_factory=SuiteSection)
    train: TrainSection = field(default_factory=TrainSection)

    def validate(self, require=()):
        """Check numeric ranges, and that the files named in ``require`` exist."""
        s, c, p = self.simulation, self.comms, self.policy
        _check(s.max_steps >= 1, "simulation.max_steps", "must be >= 1")
        _check(0 < s.sensor.fov <= 360, "simulation.sensor.fov", "must be in (0, 360]")
        _check(s.sensor.ray_count >= 1, "simulation.sensor.ray_count", "must be >= 1")
        _check(s.sensor.max_range > 0, "simulation.sensor.max_range", "must be > 0")
        for k in ("p_miss", "p_confuse"):
            _check(0 <= getattr(s.noise, k) <= 1, f"simulation.noise.{k}", "must be in [0, 1]")
        _check(s.noise.depth_sigma >= 0, "simulation.noise.depth_sigma", "must be >= 0")
        _check(c.codec in ("quantized", "learned"), "comms.codec", "expected 'quantized' or 'learned'")
        _check(c.budget >= 1, "comms.budget", "must be >= 1")
        _check(c.global_cap is None or c.global_cap >= 0, "comms.global_cap", "must be >= 0")
        _check(p.variant in ("greedy", "random", "learned", "flat", "random-actions"), "policy.variant",
               f"unknown variant {p.variant!r}")
        _check(p.P >= 1, "policy.P", "must be >= 1")
        _check(p.d >= 1, "policy.d", "must be >= 1")
        _check(0 <= p.gamma <= 1, "policy.gamma", "must be in [0, 1]")
        _check(p.learning_rate > 0, "policy.learning_rate", "must be > 0")
        _check(0 < p.clip < 1, "policy.clip", "must be in (0, 1)")
        _check(p.ppo_epochs >= 1, "policy.ppo_epochs", "must be >= 1")
        u = self.suite
        _check(all(1 <= n <= 5 for n in u.N) and u.N, "suite.N", "values must be in 1..5")
        _check(all(1 <= m <= 5 for m in u.M) and u.M, "suite.M", "values must be in 1..5")
        _check(u.split in ("all", "known", "unknown"), "suite.split", "expected all, known or unknown")
        _check(0 < u.known_fraction < 1, "suite.known_fraction", "must be in (0, 1)")
        _check(u.workers >= 1, "suite.workers", "must be >= 1")
        t = self.train
        _check(t.epochs >= 0, "train.epochs", "must be >= 0")
        _check(t.episodes_per_epoch >= 1, "train.episodes_per_epoch", "must be >= 1")
        _check(1 <= t.N <= 5, "train.N", "must be in 1..5")
        for key in require:
            value = getattr(self.paths, key)
            _check(value is not None, f"paths.{key}", "is required for this command")
            _check(Path(value).exists(), f"paths.{key}", f"{value!r} does not exist")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def hyperparams(self):
        from .policy.highlevel import Hyperparams

        p = self.policy
        return Hyperparams(gamma=p.gamma, learning_rate=p.learning_rate, clip=p.clip, d=p.d, P=p.P, alpha=p.alpha,
                           beta=p.beta, ppo_epochs=p.ppo_epochs)

    def episode_config(self):
        from .evaluation.episode import EpisodeConfig

        s, c, p = self.simulation, self.comms, self.policy
        return EpisodeConfig(max_steps=s.max_steps, sensor=s.sensor, noise=s.noise, codec=c.codec, budget=c.budget,
                             global_cap=c.global_cap, comm=c.enabled, central=p.central, use_priors=p.priors, P=p.P,
                             d=p.d, alpha=p.alpha, beta=p.beta)


def _check(ok, name, message):
    if not ok:
        raise ConfigError(f"{name}: {message}")


_SECTIONS = {
    "paths": PathsConfig, "simulation": SimulationConfig, "comms": CommsConfig, "policy": PolicyConfig,
    "suite": SuiteSection, "train": TrainSection,
}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a table")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kw = dict(data)
    if cls is SimulationConfig:
        if "sensor" in kw:
            kw["sensor"] = _build(SensorParams, kw["sensor"], f"{where}.sensor")
        if "noise" in kw:
            kw["noise"] = _build(NoiseParams, kw["noise"], f"{where}.noise")
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(data: dict, env=None) -> RunConfig:
    env = os.environ if env is None else env
    data = dict(data)
    unknown = sorted(set(data) - set(_SECTIONS) - {"seed"})
    if unknown:
        raise ConfigError(f"config: unknown keys {unknown}")
    kw = {name: _build(cls, data[name], name) for name, cls in _SECTIONS.items() if name in data}
    cfg = RunConfig(seed=int(data.get("seed", 0)), **kw)
    if env.get(SEED_ENV):
        try:
            cfg.seed = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV}: expected an integer, got {env[SEED_ENV]!r}") from None
    return cfg


def load_config(path=None, env=None) -> RunConfig:
    """Load a TOML (``.toml``) or JSON config; ``None`` gives the defaults."""
    if path is None:
        return config_from_dict({}, env)
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    try:
        if path.suffix == ".toml":
            data = tomllib.loads(text)
        else:
            data = json.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config: cannot parse {path}: {exc}") from None
    return config_from_dict(data, env)
