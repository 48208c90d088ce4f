"""YAML run configuration with strict key checking.

Every section maps onto a dataclass; unknown keys anywhere raise
:class:`ConfigError`, and the physical parameter types re-run their own
validation on load.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .model import DriveSignal, NoiseSpec, ResonatorParams, StateVector


def grid(spec) -> np.ndarray:
    """A list of numbers or ``{start, stop, num}`` (inclusive, linear)."""
    if isinstance(spec, dict):
        extra = set(spec) - {"start", "stop", "num"}
        if extra or not {"start", "stop", "num"} <= set(spec):
            raise ConfigError(f"grid needs exactly start, stop, num; got {sorted(spec)}")
        num = int(spec["num"])
        if num < 1:
            raise ConfigError("grid num must be positive")
        return np.linspace(float(spec["start"]), float(spec["stop"]), num)
    try:
        arr = np.asarray([float(v) for v in spec])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad grid {spec!r}") from exc
    if arr.size == 0:
        raise ConfigError("empty grid")
    return arr


@dataclass
class ThresholdCfg:
    omega_grid: object = field(default_factory=lambda: {"start": 0.995, "stop": 1.005, "num": 21})
    branch: str = "saddle-node"
    bracket: list = field(default_factory=lambda: [0.0, 0.02])
    steps_per_period: int = 2048


@dataclass
class MultipliersCfg:
    Fp_grid: object = field(default_factory=lambda: {"start": -0.045, "stop": 0.0025, "num": 96})
    steps_per_period: int = 2048


@dataclass
class TransientCfg:
    t_end: float = 70000.0
    dt: float | None = None
    record_every: int = 10
    initial: dict = field(default_factory=lambda: {"x": 1.0, "xdot": 0.0, "z": 0.0})
    fft_discard: float = 20000.0


@dataclass
class GainCfg:
    phi_points: int = 721
    time_domain: bool = True
    discard: float | None = None
    steps_per_period: int = 200


@dataclass
class StochasticCfg:
    enabled: bool = False
    duration: float | None = None
    realizations: int = 16
    record_every: int = 100


@dataclass
class NsdCfg:
    nu_grid: object = field(default_factory=lambda: {"start": 0.85, "stop": 1.15, "num": 3001})
    method: str = "lattice"
    three_term: bool = False
    stochastic: StochasticCfg = field(default_factory=StochasticCfg)


@dataclass
class EnsembleCfg:
    enabled: bool = False
    runs: int = 1000
    Fp_points: list = field(default_factory=list)
    tau_m: float | None = None
    stages: int = 4


@dataclass
class SqueezeCfg:
    omega_list: list = field(default_factory=lambda: [1.0])
    Fp_grid: object = field(default_factory=lambda: {"start": -0.0415, "stop": 0.00195, "num": 88})
    method: str = "lattice"
    ensemble: EnsembleCfg = field(default_factory=EnsembleCfg)


@dataclass
class RunConfig:
    resonator: ResonatorParams = field(default_factory=ResonatorParams)
    drive: DriveSignal | None = None
    noise: NoiseSpec | None = None
    threshold: ThresholdCfg = field(default_factory=ThresholdCfg)
    multipliers: MultipliersCfg = field(default_factory=MultipliersCfg)
    transient: TransientCfg = field(default_factory=TransientCfg)
    gain: GainCfg = field(default_factory=GainCfg)
    nsd: NsdCfg = field(default_factory=NsdCfg)
    squeeze: SqueezeCfg = field(default_factory=SqueezeCfg)

    def initial_state(self) -> StateVector:
        return _build(StateVector, self.transient.initial, "transient.initial")

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = None if v is None else _plain(v)
        return out


def _plain(v):
    if dataclasses.is_dataclass(v):
        if hasattr(v, "as_dict"):
            return v.as_dict()
        return {f.name: _plain(getattr(v, f.name)) for f in dataclasses.fields(v)}
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


_NESTED = {"stochastic": StochasticCfg, "ensemble": EnsembleCfg}


def _build(cls, data, where):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    kwargs = {}
    for k, v in data.items():
        kwargs[k] = _build(_NESTED[k], v, f"{where}.{k}") if k in _NESTED else v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_SECTIONS = {
    "resonator": ResonatorParams, "drive": DriveSignal, "noise": NoiseSpec,
    "threshold": ThresholdCfg, "multipliers": MultipliersCfg, "transient": TransientCfg,
    "gain": GainCfg, "nsd": NsdCfg, "squeeze": SqueezeCfg,
}


def parse_config(data) -> RunConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be a mapping")
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    kwargs = {name: _build(_SECTIONS[name], body, name) for name, body in data.items()}
    cfg = RunConfig(**kwargs)
    _check(cfg)
    return cfg


def _check(cfg: RunConfig):
    if cfg.threshold.branch not in ("saddle-node", "hopf"):
        raise ConfigError("threshold.branch must be saddle-node or hopf")
    for name, method in (("nsd.method", cfg.nsd.method), ("squeeze.method", cfg.squeeze.method)):
        if method not in ("lattice", "perturbative", "simplified"):
            raise ConfigError(f"{name} must be lattice, perturbative or simplified")
    if cfg.nsd.method == "simplified":
        raise ConfigError("nsd.method cannot be simplified")
    if len(cfg.threshold.bracket) != 2:
        raise ConfigError("threshold.bracket needs two values")
    for value in (cfg.transient.t_end, *cfg.threshold.bracket):
        if not math.isfinite(float(value)):
            raise ConfigError("non-finite number in configuration")
    grid(cfg.threshold.omega_grid)
    grid(cfg.multipliers.Fp_grid)
    grid(cfg.nsd.nu_grid)
    grid(cfg.squeeze.Fp_grid)
    cfg.initial_state()


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return parse_config(data)
