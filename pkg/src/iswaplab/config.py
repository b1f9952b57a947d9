"""Run configuration: TOML/JSON loading, validation, hashing.

One canonical default configuration ships in-repo (configs/default.toml) and
reproduces the documented operating point end to end.  Every section accepts
partial overrides of its defaults; unknown keys are rejected with the full
field path so typos fail loudly.  The master seed deterministically derives
every stage seed (sha256 of master:stage:index, see `seeds.derive_seed`).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field

from .calibration import CalibrationParams
from .circuits import EngineConfig, PortSettings
from .device import DeviceConfig, PORTS
from .rb import RBConfig

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.field_path = path


@dataclass(frozen=True)
class SpectroscopyParams:
    v_min: float = 0.275
    v_max: float = 5.775
    v_steps: int = 56
    resonator_f_min: float = 6.50e9
    resonator_f_max: float = 6.85e9
    resonator_f_steps: int = 141
    qubit_f_min: float = 4.15e9
    qubit_f_max: float = 4.95e9
    qubit_f_steps: int = 161


@dataclass(frozen=True)
class DemoParams:
    repetitions: int = 200
    nco_offset_hz: float = 12.345e3
    noise: bool = False


@dataclass(frozen=True)
class TomoParams:
    shots: int = 4096
    noise: bool = True


@dataclass(frozen=True)
class RunConfig:
    device: DeviceConfig
    engine: EngineConfig
    calibration: CalibrationParams
    rb: RBConfig
    spectroscopy: SpectroscopyParams
    demo: DemoParams
    tomo: TomoParams
    seed: int = 0
    output_dir: str = "out"

    def canonical_dict(self) -> dict:
        d = {
            "device": dataclasses.asdict(self.device),
            "engine": {
                "repetition_period_ns": self.engine.repetition_period_ns,
                "ports": {p: dataclasses.asdict(s) for p, s in sorted(self.engine.ports.items())},
            },
            "calibration": dataclasses.asdict(self.calibration),
            "rb": dataclasses.asdict(self.rb),
            "spectroscopy": dataclasses.asdict(self.spectroscopy),
            "demo": dataclasses.asdict(self.demo),
            "tomo": dataclasses.asdict(self.tomo),
            "seed": self.seed,
        }
        return d

    def hash(self) -> str:
        payload = json.dumps(self.canonical_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


def _build(cls, section: dict, path: str, defaults: dict):
    values = dict(defaults)
    known = {f.name for f in dataclasses.fields(cls)}
    for key, val in section.items():
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown field")
        values[key] = val
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from exc


def _parse_engine(section: dict) -> EngineConfig:
    defaults = EngineConfig()
    period = section.get("repetition_period_ns", defaults.repetition_period_ns)
    ports = dict(defaults.ports)
    for port_id, pd in section.get("ports", {}).items():
        if port_id not in PORTS:
            raise ConfigError(f"engine.ports.{port_id}", "unknown port")
        if not isinstance(pd, dict):
            raise ConfigError(f"engine.ports.{port_id}", "expected a table")
        ports[port_id] = _build(PortSettings, pd, f"engine.ports.{port_id}", {})
    extra = set(section) - {"repetition_period_ns", "ports"}
    if extra:
        raise ConfigError(f"engine.{sorted(extra)[0]}", "unknown field")
    try:
        return EngineConfig(repetition_period_ns=period, ports=ports)
    except (TypeError, ValueError) as exc:
        raise ConfigError("engine", str(exc)) from exc


_SECTIONS = ("device", "engine", "calibration", "rb", "spectroscopy", "demo", "tomo")


def config_from_dict(raw: dict) -> RunConfig:
    extra = set(raw) - set(_SECTIONS) - {"seed", "output_dir"}
    if extra:
        raise ConfigError(sorted(extra)[0], "unknown section")
    rb_section = dict(raw.get("rb", {}))
    if "depths" in rb_section:
        rb_section["depths"] = tuple(int(d) for d in rb_section["depths"])
    return RunConfig(
        device=_build(DeviceConfig, raw.get("device", {}), "device",
                      DeviceConfig.default().to_dict()),
        engine=_parse_engine(raw.get("engine", {})),
        calibration=_build(CalibrationParams, raw.get("calibration", {}), "calibration", {}),
        rb=_build(RBConfig, rb_section, "rb", {}),
        spectroscopy=_build(SpectroscopyParams, raw.get("spectroscopy", {}), "spectroscopy", {}),
        demo=_build(DemoParams, raw.get("demo", {}), "demo", {}),
        tomo=_build(TomoParams, raw.get("tomo", {}), "tomo", {}),
        seed=int(raw.get("seed", 0)),
        output_dir=str(raw.get("output_dir", "out")),
    )


def load_config(path) -> RunConfig:
    """Read a TOML (or JSON) run configuration."""
    try:
        with open(path, "rb") as fh:
            head = fh.read()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc}") from exc
    text = head.decode("utf-8")
    if str(path).endswith(".json") or text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON: {exc}") from exc
    else:
        try:
            raw = _toml.loads(text)
        except _toml.TOMLDecodeError as exc:
            raise ConfigError(str(path), f"invalid TOML: {exc}") from exc
    return config_from_dict(raw)
