"""Declarative world description for simulation runs.

A scenario is a single JSON document mirroring ``ScenarioConfig``.
Unknown keys anywhere in the document are a hard error so that a typo in
an experiment file fails loudly instead of silently running defaults.
Every section may be omitted to take its defaults.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional, Union


class ConfigError(ValueError):
    """A scenario document is malformed or out of range."""


@dataclass(frozen=True)
class TerminalsSpec:
    count: int = 10
    producers: int = 2           # terminals t00..t(producers-1) generate data
    quota_bytes: int = 1 << 20
    base_reliability: float = 0.9   # estimator's per-terminal channel basis
    true_retrieval: Optional[float] = None  # actual retrieval odds; None = honest
    backup_peers: str = "all"    # "all" | "nonproducers": who accepts fragments


@dataclass(frozen=True)
class WorkloadSpec:
    items_per_hour: float = 6.0
    size_min_bytes: int = 200
    size_max_bytes: int = 20_000
    priority_min: float = 0.5
    priority_max: float = 0.95
    n: int = 4
    k: int = 2
    update_fraction: float = 0.0   # chance a production updates an earlier item
    chain_fraction: float = 0.0    # chance a new item depends on an earlier one
    lifetime_s: Optional[float] = None
    mergeable: bool = False


@dataclass(frozen=True)
class MobilitySpec:
    encounter_rate_per_hour: float = 30.0   # global pairwise-contact process
    contact_duration_mean_s: float = 30.0
    bandwidth_bytes_per_s: float = 25_000.0


@dataclass(frozen=True)
class InfrastructureSpec:
    window_rate_per_hour: float = 0.5       # per terminal
    window_duration_mean_s: float = 60.0
    bandwidth_bytes_per_s: float = 125_000.0


@dataclass(frozen=True)
class FailureSpec:
    rate_per_hour: float = 0.0              # per targeted terminal
    targets: str = "producers"              # "producers" | "all" | "none"


@dataclass(frozen=True)
class EvictionSpec:
    w_age: float = 1.0
    w_res: float = 1.0
    w_size: float = 1.0
    per_owner_cap: float = 1.0


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 1
    horizon_s: float = 7200.0
    payload_mode: bool = True
    peer_backup: bool = True
    server_reach_factor: float = 1.0   # scales channel estimates handed out
    restore_delay_s: float = 0.0       # failure-to-restore-attempt gap
    terminals: TerminalsSpec = field(default_factory=TerminalsSpec)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    mobility: MobilitySpec = field(default_factory=MobilitySpec)
    infrastructure: InfrastructureSpec = field(default_factory=InfrastructureSpec)
    failures: FailureSpec = field(default_factory=FailureSpec)
    eviction: EvictionSpec = field(default_factory=EvictionSpec)

    def validate(self) -> "ScenarioConfig":
        t, w, m, i, f = self.terminals, self.workload, self.mobility, self.infrastructure, self.failures
        checks = [
            (t.count >= 2, "terminals.count must be >= 2"),
            (0 <= t.producers <= t.count, "terminals.producers must be within terminals.count"),
            (t.quota_bytes >= 0, "terminals.quota_bytes must be >= 0"),
            (0.0 <= t.base_reliability <= 1.0, "terminals.base_reliability must be in [0, 1]"),
            (t.true_retrieval is None or 0.0 <= t.true_retrieval <= 1.0,
             "terminals.true_retrieval must be in [0, 1]"),
            (t.backup_peers in ("all", "nonproducers"),
             "terminals.backup_peers must be all|nonproducers"),
            (self.horizon_s > 0, "horizon_s must be > 0"),
            (0.0 <= self.server_reach_factor <= 1.0, "server_reach_factor must be in [0, 1]"),
            (self.restore_delay_s >= 0, "restore_delay_s must be >= 0"),
            (w.items_per_hour >= 0, "workload.items_per_hour must be >= 0"),
            (1 <= w.size_min_bytes <= w.size_max_bytes, "workload sizes must satisfy 1 <= min <= max"),
            (0.0 <= w.priority_min <= w.priority_max <= 1.0,
             "workload priorities must satisfy 0 <= min <= max <= 1"),
            (1 <= w.k <= w.n <= 255, "workload must satisfy 1 <= k <= n <= 255"),
            (0.0 <= w.update_fraction <= 1.0, "workload.update_fraction must be in [0, 1]"),
            (0.0 <= w.chain_fraction <= 1.0, "workload.chain_fraction must be in [0, 1]"),
            (w.lifetime_s is None or w.lifetime_s > 0, "workload.lifetime_s must be > 0"),
            (m.encounter_rate_per_hour >= 0, "mobility.encounter_rate_per_hour must be >= 0"),
            (m.contact_duration_mean_s > 0, "mobility.contact_duration_mean_s must be > 0"),
            (m.bandwidth_bytes_per_s > 0, "mobility.bandwidth_bytes_per_s must be > 0"),
            (i.window_rate_per_hour >= 0, "infrastructure.window_rate_per_hour must be >= 0"),
            (i.window_duration_mean_s > 0, "infrastructure.window_duration_mean_s must be > 0"),
            (i.bandwidth_bytes_per_s > 0, "infrastructure.bandwidth_bytes_per_s must be > 0"),
            (f.rate_per_hour >= 0, "failures.rate_per_hour must be >= 0"),
            (f.targets in ("producers", "all", "none"), "failures.targets must be producers|all|none"),
            (self.eviction.w_age >= 0 and self.eviction.w_res >= 0 and self.eviction.w_size >= 0,
             "eviction weights must be >= 0"),
            (0.0 < self.eviction.per_owner_cap <= 1.0, "eviction.per_owner_cap must be in (0, 1]"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        return self

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


_SECTIONS = {
    "terminals": TerminalsSpec,
    "workload": WorkloadSpec,
    "mobility": MobilitySpec,
    "infrastructure": InfrastructureSpec,
    "failures": FailureSpec,
    "eviction": EvictionSpec,
}


def _build(cls: type, data: Any, where: str) -> Any:
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    return cls(**data)


def config_from_dict(data: dict[str, Any]) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"scenario root: expected an object, got {type(data).__name__}")
    top_allowed = {f.name for f in fields(ScenarioConfig)}
    unknown = sorted(set(data) - top_allowed)
    if unknown:
        raise ConfigError(f"scenario root: unknown key(s) {', '.join(unknown)}")
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key in _SECTIONS:
            kwargs[key] = _build(_SECTIONS[key], value, key)
        else:
            kwargs[key] = value
    try:
        config = ScenarioConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return config.validate()


def load_scenario(path: Union[str, Path], seed_override: Optional[int] = None) -> ScenarioConfig:
    """Read and validate a scenario file, optionally overriding its seed."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {p}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    config = config_from_dict(data)
    if seed_override is not None:
        config = config_from_dict({**config.to_dict(), "seed": seed_override})
    return config
