"""
Run configuration with unit-suffixed keys.

The document is YAML. Physical quantities are stored exactly as written, in
the unit named by the key suffix (``_mhz``, ``_ghz``, ``_ns``, ``_us``,
``_rad``), and are converted to SI/angular units only when a
``DeviceParams`` or ``IntegrationControl`` is built. Serializing and parsing
therefore round-trips losslessly.
"""

from __future__ import annotations

import copy
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .dynamics import IntegrationControl
from .protocols import DeviceParams

ENV_VAR = "JCBERRY_CONFIG"
TWO_PI = 2.0 * math.pi

_SCALE = {"mhz": TWO_PI * 1e6, "ghz": TWO_PI * 1e9, "khz": TWO_PI * 1e3, "ns": 1e-9, "us": 1e-6, "s": 1.0, "rad": 1.0}


def to_si(value, unit: str):
    """Convert ``value`` given in ``unit`` (MHz/GHz/kHz are cyclic, output rad/s)."""
    if value is None:
        return None
    s = _SCALE[unit]
    if isinstance(value, (list, tuple)):
        return type(value)(to_si(v, unit) for v in value)
    if hasattr(value, "shape") and getattr(value, "ndim", 0) > 0:
        return value * s
    return float(value) * s


def from_si(value, unit: str):
    if value is None:
        return None
    s = _SCALE[unit]
    if isinstance(value, (list, tuple)):
        return type(value)(from_si(v, unit) for v in value)
    if hasattr(value, "shape") and getattr(value, "ndim", 0) > 0:
        return value / s
    return float(value) / s


def mhz_to_rad(x):
    return to_si(x, "mhz")


def rad_to_mhz(x):
    return from_si(x, "mhz")


DEFAULT_DEVICE = {
    "g_mhz": 4.49,
    "n_max": 4,
    "omega_ge_ghz": 10.651,
    "omega_ef_ghz": 10.217,
    "cavity_modes_ghz": [7.828, 9.041, 11.432],
    "t1_us": 4.9,
    "t2_star_us": 2.0,
    "rise_time_ns": 3.0,
    "echo_gap_ns": 10.0,
    "frame_slip_rad": 0.0,
    "g_per_amplitude_mhz": None,
    "stark_c2_mhz": 0.0,
    "dispersive_ge_mhz": [0.0, 0.0, 0.0],
    "dispersive_ef_mhz": [0.0, 0.0, 0.0],
    "dispersive_fg_mhz": None,
}

DEFAULT_INTEGRATION = {"base_step_ns": None, "tolerance": 1e-8, "max_refinements": 6, "method": "magnus4"}

_DEVICE_MAP = {
    "g_mhz": ("g", "mhz"),
    "n_max": ("n_max", None),
    "omega_ge_ghz": ("omega_ge", "ghz"),
    "omega_ef_ghz": ("omega_ef", "ghz"),
    "cavity_modes_ghz": ("cavity_modes", "ghz"),
    "t1_us": ("t1", "us"),
    "t2_star_us": ("t2_star", "us"),
    "rise_time_ns": ("rise_time", "ns"),
    "echo_gap_ns": ("echo_gap", "ns"),
    "frame_slip_rad": ("frame_slip", "rad"),
    "g_per_amplitude_mhz": ("g_per_amplitude", "mhz"),
    "stark_c2_mhz": ("stark_c2", "mhz"),
    "dispersive_ge_mhz": ("dispersive_ge", "mhz"),
    "dispersive_ef_mhz": ("dispersive_ef", "mhz"),
    "dispersive_fg_mhz": ("dispersive_fg", "mhz"),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    device: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_DEVICE))
    experiment: dict = field(default_factory=dict)
    integration: dict = field(default_factory=lambda: dict(DEFAULT_INTEGRATION))
    output_dir: str = "out"
    seed: int = 0
    shots: int = 0
    workers: int = 1

    def __post_init__(self):
        unknown = set(self.device) - set(_DEVICE_MAP)
        if unknown:
            raise ConfigError(f"unknown device keys: {sorted(unknown)}")
        merged = copy.deepcopy(DEFAULT_DEVICE)
        merged.update(self.device)
        self.device = merged
        bad = set(self.integration) - set(DEFAULT_INTEGRATION)
        if bad:
            raise ConfigError(f"unknown integration keys: {sorted(bad)}")
        self.integration = {**DEFAULT_INTEGRATION, **self.integration}
        if self.shots < 0:
            raise ConfigError("shots must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    # -- conversion ---------------------------------------------------------

    def device_params(self) -> DeviceParams:
        kw = {}
        for key, (name, unit) in _DEVICE_MAP.items():
            val = self.device[key]
            if isinstance(val, list):
                val = tuple(val)
            kw[name] = val if unit is None else to_si(val, unit)
        try:
            return DeviceParams(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def integration_control(self) -> IntegrationControl:
        i = self.integration
        try:
            return IntegrationControl(
                base_step=to_si(i["base_step_ns"], "ns"),
                tolerance=float(i["tolerance"]),
                max_refinements=int(i["max_refinements"]),
                method=i["method"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_device(cls, device: DeviceParams, **kwargs) -> "RunConfig":
        d = {}
        for key, (name, unit) in _DEVICE_MAP.items():
            val = getattr(device, name)
            if isinstance(val, tuple):
                val = list(val)
            d[key] = val if unit is None else from_si(val, unit)
        return cls(device=d, **kwargs)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "device": copy.deepcopy(self.device),
            "experiment": copy.deepcopy(self.experiment),
            "integration": dict(self.integration),
            "output_dir": self.output_dir,
            "seed": self.seed,
            "shots": self.shots,
            "workers": self.workers,
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping")
        unknown = set(data) - {"device", "experiment", "integration", "output_dir", "seed", "shots", "workers"}
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        return cls(
            device=dict(data.get("device") or {}),
            experiment=dict(data.get("experiment") or {}),
            integration=dict(data.get("integration") or {}),
            output_dir=str(data.get("output_dir", "out")),
            seed=int(data.get("seed", 0)),
            shots=int(data.get("shots", 0)),
            workers=int(data.get("workers", 1)),
        )

    @classmethod
    def from_yaml(cls, text: str) -> "RunConfig":
        try:
            return cls.from_dict(yaml.safe_load(text) or {})
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from exc

    @classmethod
    def load(cls, path=None) -> "RunConfig":
        """Read ``path``, else the file named by $JCBERRY_CONFIG, else defaults."""
        path = path or os.environ.get(ENV_VAR)
        if not path:
            return cls()
        return cls.from_yaml(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_yaml())


# --------------------------------------------------------------------------
# value and grid parsing for the command line

_UNSIGNED = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_PI_RE = re.compile(rf"^\s*(?P<sign>[+-])?(?P<coef>{_UNSIGNED})?\s*\*?\s*pi\s*(?:/\s*(?P<den>{_UNSIGNED}))?\s*$")


def parse_value(text) -> float:
    """Parse ``"1.5"``, ``"2pi"``, ``"-pi/2"``, ``"0.5*pi"``."""
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip().lower()
    m = _PI_RE.match(s)
    if m:
        coef = float(m.group("coef")) if m.group("coef") else 1.0
        den = float(m.group("den")) if m.group("den") else 1.0
        sign = -1.0 if m.group("sign") == "-" else 1.0
        return sign * coef * math.pi / den
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"cannot parse number {text!r}") from None


def parse_grid(text: str):
    """``start:stop:count`` (inclusive linspace), a comma list, or one value."""
    import numpy as np

    s = str(text).strip()
    if ":" in s:
        parts = s.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid {text!r} must be start:stop:count")
        start, stop = parse_value(parts[0]), parse_value(parts[1])
        try:
            count = int(parts[2])
        except ValueError:
            raise ConfigError(f"grid count {parts[2]!r} is not an integer") from None
        if count < 1:
            raise ConfigError("grid count must be >= 1")
        return np.linspace(start, stop, count)
    return np.array([parse_value(p) for p in s.split(",") if p.strip()])


def parse_int_range(text: str) -> list[int]:
    """``"0..3"`` -> [0, 1, 2, 3]; also accepts comma lists."""
    s = str(text).strip()
    try:
        if ".." in s:
            a, b = s.split("..")
            return list(range(int(a), int(b) + 1))
        return [int(p) for p in s.split(",")]
    except ValueError:
        raise ConfigError(f"cannot parse integer range {text!r}") from None


def parse_range(text: str, points: int):
    """``"a..b"`` -> ``points`` values from a to b; otherwise as ``parse_grid``."""
    import numpy as np

    s = str(text).strip()
    if ".." in s:
        a, b = s.split("..")
        return np.linspace(parse_value(a), parse_value(b), points)
    return parse_grid(s)
