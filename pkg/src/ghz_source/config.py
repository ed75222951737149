"""Run configuration: a flat TOML file whose keys carry their units.

Example::

    rep_rate_hz = 8e7
    mu = 0.21
    p_e = 0.022
    eta_c = 0.2
    eta_d = 0.5
    n_pulses = 10000000000
    seed = 42
"""

from __future__ import annotations

import dataclasses
import json
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .ghz import NoiseSpec
from .rates import DEFAULT_COHERENCE_LENGTH, SourceParams

MODES = ("exact", "expected", "sampled")
STATES = ("source", "ideal", "mixed", "noisy")
FORMATS = ("json", "csv")


class ConfigError(ValueError):
    """Bad configuration; the message names the offending field."""

    def __init__(self, key: str, problem: str):
        super().__init__(f"config field '{key}': {problem}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    rep_rate_hz: float = 8e7
    mu: float = 0.21
    p_e: float = 0.022
    eta_c: float = 0.2
    eta_d: float = 0.5
    # reproduces the reported 0.811 fidelity at the default rates
    v_hom_max: float = 0.98
    coherence_length_m: float = DEFAULT_COHERENCE_LENGTH
    phase_rad: float = 0.0

    # which three-photon state the exact Mermin / certify modes analyse
    mode: str = "exact"
    state: str = "source"
    noise_coherence: float = 1.0
    noise_colored_weight: float = 0.0
    noise_white_weight: float = 0.0

    n_pulses: int = 10_000_000_000
    seed: int | None = None
    mu_min: float = 0.05
    mu_max: float = 0.85
    mu_points: int = 81
    delay_min_m: float = -6e-4
    delay_max_m: float = 6e-4
    delay_points: int = 25
    hom_outcome: str = ""

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {', '.join(MODES)}, got {self.mode!r}")
        if self.state not in STATES:
            raise ConfigError("state", f"must be one of {', '.join(STATES)}, got {self.state!r}")
        if self.n_pulses < 1:
            raise ConfigError("n_pulses", "must be at least 1")
        if self.seed is not None and not (0 <= self.seed < 2**64):
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        for key in ("mu_points", "delay_points"):
            if getattr(self, key) < 1:
                raise ConfigError(key, "must be at least 1")
        if self.mu_min < 0 or self.mu_max < self.mu_min:
            raise ConfigError("mu_max", "need 0 <= mu_min <= mu_max")
        if self.delay_max_m < self.delay_min_m:
            raise ConfigError("delay_max_m", "must not be below delay_min_m")
        try:
            self.source_params()
        except ValueError as exc:
            raise ConfigError(_source_field(str(exc)), str(exc)) from None
        if self.state == "noisy":
            try:
                self.noise_spec()
            except ValueError as exc:
                raise ConfigError("noise_coherence", str(exc)) from None

    def source_params(self) -> SourceParams:
        return SourceParams(
            rep_rate=self.rep_rate_hz,
            mu=self.mu,
            p_e=self.p_e,
            eta_c=self.eta_c,
            eta_d=self.eta_d,
            v_hom_max=self.v_hom_max,
            coherence_length=self.coherence_length_m,
            phase=self.phase_rad,
        )

    def noise_spec(self) -> NoiseSpec:
        return NoiseSpec(
            coherence=self.noise_coherence,
            colored_weight=self.noise_colored_weight,
            white_weight=self.noise_white_weight,
            phase=self.phase_rad,
        )

    def replace(self, **changes: Any) -> RunConfig:
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_SOURCE_KEYS = {
    "rep_rate": "rep_rate_hz",
    "coherence_length": "coherence_length_m",
    "phase": "phase_rad",
}


def _source_field(message: str) -> str:
    for f in fields(SourceParams):
        if message.startswith(f.name):
            return _SOURCE_KEYS.get(f.name, f.name)
    return "source"


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value: Any) -> Any:
    kind = _FIELD_TYPES[key]
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    if kind in ("int", "int | None"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        if isinstance(value, float):
            if not value.is_integer():
                raise ConfigError(key, f"expected an integer, got {value!r}")
            value = int(value)
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(key, "must be finite")
    return value


def config_from_mapping(data: Mapping[str, Any]) -> RunConfig:
    values = {}
    for key, value in data.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(key, "unknown key")
        if value is None:
            if key != "seed":
                raise ConfigError(key, "may not be null")
            values[key] = None
            continue
        values[key] = _coerce(key, value)
    return RunConfig(**values)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("--config", f"not valid TOML: {exc}") from None
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(nested[0], "tables are not allowed; the config file is flat")
    return config_from_mapping(data)


def dump_config(config: RunConfig) -> str:
    """TOML text that loads back to ``config``; an unset seed is omitted."""
    lines = []
    for key, value in config.as_dict().items():
        if value is None:
            continue
        if isinstance(value, str):
            text = json.dumps(value)
        else:
            text = repr(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"
