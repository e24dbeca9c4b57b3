"""Run configuration: trace source, policy and its parameters, cache geometry."""
from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .trace import PRESETS, TraceSpec

_UNITS = {
    "": 1, "b": 1,
    "kb": 10**3, "mb": 10**6, "gb": 10**9, "tb": 10**12,
    "kib": 2**10, "mib": 2**20, "gib": 2**30, "tib": 2**40,
}
_SIZE_RE = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?)\s*([a-zA-Z]*)\s*$")


class ConfigError(ValueError):
    pass


def parse_size(value) -> int:
    """Bytes from an int or a string such as ``"100GiB"`` or ``"1.5 TB"``."""
    if isinstance(value, bool):
        raise ConfigError(f"not a size: {value!r}")
    if isinstance(value, (int, float)):
        return int(value)
    m = _SIZE_RE.match(str(value))
    if not m or m.group(2).lower() not in _UNITS:
        raise ConfigError(f"not a size: {value!r}")
    return int(float(m.group(1)) * _UNITS[m.group(2).lower()])


@dataclass
class RunConfig:
    policy: str
    capacity: int
    trace_path: str | None = None
    trace_format: str = "csv"
    trace_preset: str | None = None
    trace_overrides: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    w_high: float = 0.95
    w_low: float = 0.75
    bandwidth_limit: int | None = None
    hit_rate_window: int | None = None
    byte_scale: float = 1.0
    seed: int = 0
    output_dir: str | None = None

    def __post_init__(self):
        self.capacity = parse_size(self.capacity)
        if self.bandwidth_limit is not None:
            self.bandwidth_limit = parse_size(self.bandwidth_limit)

    def validate(self) -> "RunConfig":
        from .runner import POLICY_IDS

        if self.policy not in POLICY_IDS:
            raise ConfigError(f"unknown policy {self.policy!r}; valid ids: {', '.join(POLICY_IDS)}")
        if self.capacity <= 0:
            raise ConfigError("capacity must be positive")
        if not 0 < self.w_low < self.w_high <= 1:
            raise ConfigError("watermarks must satisfy 0 < w_low < w_high <= 1")
        if (self.trace_path is None) == (self.trace_preset is None):
            raise ConfigError("give exactly one of trace_path and trace_preset")
        if self.trace_preset is not None and self.trace_preset not in PRESETS:
            raise ConfigError(f"unknown trace preset {self.trace_preset!r}; choose from {sorted(PRESETS)}")
        if self.byte_scale <= 0:
            raise ConfigError("byte_scale must be positive")
        if self.bandwidth_limit is not None and self.bandwidth_limit < 0:
            raise ConfigError("bandwidth_limit must be non-negative")
        return self

    def trace_spec(self) -> TraceSpec | None:
        if self.trace_preset is None:
            return None
        from dataclasses import replace

        return replace(PRESETS[self.trace_preset], **self.trace_overrides)

    def trace_key(self) -> tuple:
        """Identity of the trace a config reads; equal keys mean the same requests."""
        if self.trace_path is not None:
            return ("file", str(Path(self.trace_path).resolve()), self.trace_format)
        return ("spec", json.dumps(self.trace_spec().to_dict(), sort_keys=True))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))


def load_configs(path: str | Path) -> list[dict]:
    """Raw config dicts from a JSON file.

    The file holds either one config object, or a sweep object with a
    ``base`` config plus ``policies`` and ``capacities`` lists expanded as a
    grid (policy-major).
    """
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict) and ("policies" in data or "capacities" in data):
        base = dict(data.get("base", {}))
        policies = data.get("policies", [base.get("policy")])
        capacities = data.get("capacities", [base.get("capacity")])
        out = []
        for p in policies:
            for c in capacities:
                d = dict(base, policy=p, capacity=c)
                out.append(d)
        return out
    if isinstance(data, list):
        return data
    return [data]
