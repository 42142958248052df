"""Dataclass configs for every analysis, loaded from a single JSON file.

The JSON file holds one optional object per section (``registry``,
``coverage``, ``probe``, ``passive``, ``ascomp``); missing keys keep their
defaults and unknown keys are rejected so typos do not pass silently.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .passive import CARRYOVER_THRESHOLD, INFLATION_RATIO, ONSET_THRESHOLD
from .prober import DEFAULT_PORTS
from .registry import DEFAULT_STATUSES
from .coverage import WITHDRAWAL_THRESHOLD_PP
from .ascomp import EXEMPTION_THRESHOLD


@dataclass
class RegistryConfig:
    country: str = "IR"
    statuses: tuple[str, ...] = tuple(sorted(DEFAULT_STATUSES))


@dataclass
class CoverageConfig:
    withdrawal_threshold_pp: float = WITHDRAWAL_THRESHOLD_PP


@dataclass
class ProbeConfig:
    ports: tuple[int, ...] = DEFAULT_PORTS
    timeout_ms: int = 3000
    retries: int = 1
    max_in_flight: int = 64
    rate: float = 100.0
    vantage_id: str = "local"


@dataclass
class PassiveConfig:
    country: str = "IR"
    control_country: str = "TR"
    reference_date: str | None = None
    control_reference_date: str | None = None
    onset_threshold: float = ONSET_THRESHOLD
    carryover_threshold: float = CARRYOVER_THRESHOLD
    inflation_ratio: float = INFLATION_RATIO
    # each event: {"name", "start", "end", "phases": {date: label}}
    events: list[dict] = field(default_factory=list)


@dataclass
class AscompConfig:
    exemption_threshold: float = EXEMPTION_THRESHOLD
    as_min_hosts: int = 500
    composition_dates: list[str] = field(default_factory=list)
    # each event: {"name", "baseline", "event_dates": [...]}
    exemption_events: list[dict] = field(default_factory=list)
    floor_date: str | None = None
    recovery_date: str | None = None


@dataclass
class Config:
    registry: RegistryConfig = field(default_factory=RegistryConfig)
    coverage: CoverageConfig = field(default_factory=CoverageConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    passive: PassiveConfig = field(default_factory=PassiveConfig)
    ascomp: AscompConfig = field(default_factory=AscompConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Content hash of the effective configuration (defaults included)."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _section(cls, data: dict, name: str):
    if not isinstance(data, dict):
        raise ValueError(f"config section {name!r} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"config section {name!r}: unknown key(s) {sorted(unknown)}")
    kwargs = {}
    for k, v in data.items():
        default = getattr(cls(), k)
        kwargs[k] = tuple(v) if isinstance(default, tuple) else v
    return cls(**kwargs)


SECTIONS = {
    "registry": RegistryConfig,
    "coverage": CoverageConfig,
    "probe": ProbeConfig,
    "passive": PassiveConfig,
    "ascomp": AscompConfig,
}


def config_from_dict(data: dict) -> Config:
    unknown = set(data) - set(SECTIONS) - {"_comment"}
    if unknown:
        raise ValueError(f"unknown config section(s) {sorted(unknown)}")
    return Config(**{name: _section(cls, data.get(name, {}), name) for name, cls in SECTIONS.items()})


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))
