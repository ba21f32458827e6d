"""Deterministic discrete-event simulator wiring all the pieces together.

A run turns a ``ScenarioConfig`` into a timeline of data productions,
pairwise encounters, infrastructure windows, terminal failures, and
restore attempts, processed in (time, sequence) order. Owners replicate
onto encountered peers through the deficit scheduler, peers manage
replica lifetime and space, and the run ends with every produced version
classified as safe on the server, recoverable without its owner, or
lost.

Determinism: one master seed feeds separate named generators for
mobility, workload, infrastructure, failures, and channel fate draws, so
the same config always yields byte-identical reports and traces.

Channel honesty: the estimate handed to schedulers is
``base_reliability * server_reach_factor``; whether a saved batch is
actually retrievable later is an independent draw at
``terminals.true_retrieval`` (defaulting to the estimate). Fragments of
one item saved on one terminal within one session share a single draw,
which is exactly the correlation the estimator's batch update assumes,
so with honest config the predicted restore probabilities are calibrated
against realized outcomes.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
import random
from dataclasses import asdict, dataclass
from typing import Any, Callable, Optional, Union

from .dispersal import FragmentSet, reconstruct, split
from .model import (
    DataItem,
    IntegrityError,
    Location,
    Production,
    VersionIndex,
    VersionKey,
    detect_conflict,
    propagate_priority,
)
from .peer import NoticeSource, ReplicaMetadata, ReplicaState, ReplicaStore
from .reliability import ChannelEstimate, ReliabilityTable, composite_success
from .scenario import ConfigError, ScenarioConfig, config_from_dict
from .scheduler import LinkSession, Scheduler

TraceSink = Callable[[str], None]

OUTCOME_SAFE = "safe_on_server"
OUTCOME_RECOVERABLE = "recoverable_from_peers"
OUTCOME_LOST = "lost"

_BANDS = ((0.0, 0.25), (0.25, 0.5), (0.5, 0.75), (0.75, 1.0))


# -- events ------------------------------------------------------------------


@dataclass(frozen=True)
class EncounterEvent:
    time: float
    a: str
    b: str
    duration: float
    bandwidth: float


@dataclass(frozen=True)
class InternetWindowEvent:
    time: float
    terminal: str
    duration: float
    bandwidth: float


@dataclass(frozen=True)
class DataProducedEvent:
    time: float
    owner: str
    item: DataItem


@dataclass(frozen=True)
class TerminalFailureEvent:
    time: float
    terminal: str


@dataclass(frozen=True)
class RestoreAttemptEvent:
    time: float
    owner: str


Event = Union[
    EncounterEvent,
    InternetWindowEvent,
    DataProducedEvent,
    TerminalFailureEvent,
    RestoreAttemptEvent,
]

_KIND_RANK = {
    DataProducedEvent: 0,
    EncounterEvent: 1,
    InternetWindowEvent: 2,
    TerminalFailureEvent: 3,
    RestoreAttemptEvent: 4,
}


def _stream(seed: int, name: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _payload_for(key: VersionKey, size: int) -> bytes:
    rng = random.Random(
        int.from_bytes(hashlib.sha256(f"payload:{key[0]}@{key[1]}".encode()).digest()[:8], "big")
    )
    return rng.randbytes(size)


# -- reports -----------------------------------------------------------------


@dataclass(frozen=True)
class MetricsReport:
    """Everything measured by one run; JSON-faithful by construction."""

    seed: int
    horizon_s: float
    items_produced: int
    items_measured: int
    outcomes: dict[str, str]
    loss_ratio: float
    loss_ratio_by_band: dict[str, float]
    fragments_saved: int
    mean_fragments_per_item: float
    bytes_to_peers: int
    bytes_to_server: int
    conflict_count: int
    conflicts: tuple[dict[str, Any], ...]
    calibration_episodes: tuple[tuple[float, int], ...]
    occupancy: dict[str, tuple[tuple[float, int], ...]]

    def to_json_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["conflicts"] = [dict(c) for c in self.conflicts]
        data["calibration_episodes"] = [list(e) for e in self.calibration_episodes]
        data["occupancy"] = {
            t: [list(p) for p in points] for t, points in self.occupancy.items()
        }
        return data

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "MetricsReport":
        return cls(
            seed=data["seed"],
            horizon_s=data["horizon_s"],
            items_produced=data["items_produced"],
            items_measured=data["items_measured"],
            outcomes=dict(data["outcomes"]),
            loss_ratio=data["loss_ratio"],
            loss_ratio_by_band=dict(data["loss_ratio_by_band"]),
            fragments_saved=data["fragments_saved"],
            mean_fragments_per_item=data["mean_fragments_per_item"],
            bytes_to_peers=data["bytes_to_peers"],
            bytes_to_server=data["bytes_to_server"],
            conflict_count=data["conflict_count"],
            conflicts=tuple(dict(c) for c in data["conflicts"]),
            calibration_episodes=tuple(
                (float(p), int(r)) for p, r in data["calibration_episodes"]
            ),
            occupancy={
                t: tuple((float(a), int(b)) for a, b in points)
                for t, points in data["occupancy"].items()
            },
        )

    def json_bytes(self) -> bytes:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":")).encode()

    scalar_metrics = (
        "items_produced",
        "items_measured",
        "loss_ratio",
        "fragments_saved",
        "mean_fragments_per_item",
        "bytes_to_peers",
        "bytes_to_server",
        "conflict_count",
    )


@dataclass(frozen=True)
class BatchReport:
    """Replicated-run aggregate: per-metric mean and 95% normal interval."""

    seed: int
    replications: int
    metrics: dict[str, dict[str, float]]
    calibration_episodes: tuple[tuple[float, int], ...]

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "replications": self.replications,
            "metrics": {k: dict(v) for k, v in self.metrics.items()},
            "calibration_episodes": [list(e) for e in self.calibration_episodes],
        }

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "BatchReport":
        return cls(
            seed=data["seed"],
            replications=data["replications"],
            metrics={k: dict(v) for k, v in data["metrics"].items()},
            calibration_episodes=tuple(
                (float(p), int(r)) for p, r in data["calibration_episodes"]
            ),
        )

    def json_bytes(self) -> bytes:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":")).encode()


@dataclass(frozen=True)
class CalibrationBin:
    lo: float
    hi: float
    count: int
    mean_predicted: float
    realized_rate: float


@dataclass(frozen=True)
class CalibrationResult:
    episodes: int
    bins: tuple[CalibrationBin, ...]
    empty: bool


def calibration_check(
    report: Union[MetricsReport, BatchReport], bins: int = 10
) -> CalibrationResult:
    """Compare predicted restore probability against realized frequency.

    Episodes are binned by prediction; each occupied bin reports its mean
    prediction and the fraction of episodes that actually restored. The
    check measures the gap, it never corrects it.
    """
    episodes = report.calibration_episodes
    if not episodes:
        return CalibrationResult(episodes=0, bins=(), empty=True)
    buckets: dict[int, list[tuple[float, int]]] = {}
    for predicted, realized in episodes:
        b = min(int(predicted * bins), bins - 1)
        buckets.setdefault(b, []).append((predicted, realized))
    out = []
    for b in sorted(buckets):
        members = buckets[b]
        out.append(
            CalibrationBin(
                lo=b / bins,
                hi=(b + 1) / bins,
                count=len(members),
                mean_predicted=sum(p for p, _ in members) / len(members),
                realized_rate=sum(r for _, r in members) / len(members),
            )
        )
    return CalibrationResult(episodes=len(episodes), bins=tuple(out), empty=False)


# -- event generation ---------------------------------------------------------


def _terminal_names(count: int) -> list[str]:
    width = max(2, len(str(count - 1)))
    return [f"t{i:0{width}d}" for i in range(count)]


def generate_events(config: ScenarioConfig) -> list[Event]:
    """Pre-draw the full event timeline for a config. Deterministic."""
    names = _terminal_names(config.terminals.count)
    producers = names[: config.terminals.producers]
    horizon = config.horizon_s
    events: list[Event] = []

    w = config.workload
    rng = _stream(config.seed, "workload")
    for owner in producers:
        t = 0.0
        counter = 0
        history: list[tuple[str, int]] = []  # (id, latest version) in creation order
        if w.items_per_hour <= 0:
            continue
        while True:
            t += rng.expovariate(w.items_per_hour / 3600.0)
            if t >= horizon:
                break
            size = int(round(math.exp(rng.uniform(math.log(w.size_min_bytes),
                                                  math.log(w.size_max_bytes)))))
            size = min(max(size, w.size_min_bytes), w.size_max_bytes)
            priority = rng.uniform(w.priority_min, w.priority_max)
            update = bool(history) and rng.random() < w.update_fraction
            chain = (not update) and bool(history) and rng.random() < w.chain_fraction
            if update:
                slot = rng.randrange(len(history))
                item_id, prev_version = history[slot]
                version = prev_version + 1
                deps: tuple[VersionKey, ...] = ((item_id, prev_version),)
                history[slot] = (item_id, version)
                production = Production.READ_WRITE
            else:
                item_id = f"{owner}/d{counter:04d}"
                counter += 1
                version = 1
                production = Production.CREATE_ONLY
                deps = ()
                if chain:
                    dep_id, dep_version = history[rng.randrange(len(history))]
                    deps = ((dep_id, dep_version),)
                history.append((item_id, version))
            events.append(
                DataProducedEvent(
                    time=t,
                    owner=owner,
                    item=DataItem(
                        id=item_id,
                        owner=owner,
                        size_bytes=size,
                        priority=priority,
                        n=w.n,
                        k=w.k,
                        version=version,
                        production=production,
                        lifetime=(t + w.lifetime_s) if w.lifetime_s else None,
                        temporal_deps=deps,
                        mergeable=w.mergeable,
                        stream=None,
                    ),
                )
            )

    m = config.mobility
    rng = _stream(config.seed, "mobility")
    if m.encounter_rate_per_hour > 0:
        t = 0.0
        while True:
            t += rng.expovariate(m.encounter_rate_per_hour / 3600.0)
            if t >= horizon:
                break
            a, b = rng.sample(names, 2)
            if a > b:
                a, b = b, a
            events.append(
                EncounterEvent(
                    time=t,
                    a=a,
                    b=b,
                    duration=rng.expovariate(1.0 / m.contact_duration_mean_s),
                    bandwidth=m.bandwidth_bytes_per_s,
                )
            )

    i = config.infrastructure
    rng = _stream(config.seed, "infrastructure")
    if i.window_rate_per_hour > 0:
        for terminal in names:
            t = 0.0
            while True:
                t += rng.expovariate(i.window_rate_per_hour / 3600.0)
                if t >= horizon:
                    break
                events.append(
                    InternetWindowEvent(
                        time=t,
                        terminal=terminal,
                        duration=rng.expovariate(1.0 / i.window_duration_mean_s),
                        bandwidth=i.bandwidth_bytes_per_s,
                    )
                )

    f = config.failures
    rng = _stream(config.seed, "failures")
    if f.rate_per_hour > 0 and f.targets != "none":
        targets = producers if f.targets == "producers" else names
        for terminal in targets:
            t = rng.expovariate(f.rate_per_hour / 3600.0)
            if t < horizon:
                events.append(TerminalFailureEvent(time=t, terminal=terminal))

    events.sort(key=lambda e: (e.time, _KIND_RANK[type(e)]))
    return events


# -- the simulation -----------------------------------------------------------


class Simulation:
    """Mutable world state for one run. Use `run(config)` unless poking at it."""

    def __init__(self, config: ScenarioConfig, trace: Optional[TraceSink] = None) -> None:
        config.validate()
        self.config = config
        self.trace_sink = trace
        self.names = _terminal_names(config.terminals.count)
        self.producers = self.names[: config.terminals.producers]
        self.alive: dict[str, bool] = {t: True for t in self.names}
        self.index = VersionIndex()
        self.tables: dict[VersionKey, ReliabilityTable] = {}
        self.payloads: dict[VersionKey, bytes] = {}
        self.fragment_sets: dict[VersionKey, FragmentSet] = {}
        self.owned_ids: dict[str, list[str]] = {t: [] for t in self.producers}
        self.server_fragments: dict[VersionKey, set[int]] = {}
        self.server_fragment_objects: dict[VersionKey, dict[int, Any]] = {}
        self.served_max: dict[str, int] = {}
        self.fates: dict[tuple[str, str, int, int], bool] = {}
        self.bytes_to_peers = 0
        self.bytes_to_server = 0
        self.fragments_saved = 0
        self.conflicts: list[dict[str, Any]] = []
        self.episodes: list[tuple[float, int]] = []
        self.pending_restores: dict[str, list[tuple[VersionKey, float]]] = {}
        self.occupancy: dict[str, list[tuple[float, int]]] = {t: [(0.0, 0)] for t in self.names}
        self.now = 0.0
        self._channels = _stream(config.seed, "channels")

        estimate = config.terminals.base_reliability * config.server_reach_factor
        self.channel_estimate = ChannelEstimate(estimate)
        true_p = config.terminals.true_retrieval
        self.true_retrieval = estimate if true_p is None else true_p

        self.stores: dict[str, ReplicaStore] = {}
        for terminal in self.names:
            self.stores[terminal] = ReplicaStore(
                terminal,
                config.terminals.quota_bytes,
                w_age=config.eviction.w_age,
                w_res=config.eviction.w_res,
                w_size=config.eviction.w_size,
                per_owner_cap=config.eviction.per_owner_cap,
                pin_check=self._pin_check,
                on_delete=self._deletion_hook(terminal),
            )
        self.schedulers: dict[str, Scheduler] = {
            owner: Scheduler(
                owner=owner,
                index=self.index,
                tables=self.tables,
                success_of=self.success_of,
                fragment_for=self._fragment_for if config.payload_mode else None,
            )
            for owner in self.producers
        }

    # -- shared helpers ------------------------------------------------

    def _trace(self, line: str) -> None:
        if self.trace_sink is not None:
            self.trace_sink(line)

    def _pin_check(self, item_id: str, version: int) -> bool:
        key = (item_id, version)
        return key in self.index and self.index.pinned(key)

    def _deletion_hook(self, terminal: str):
        def hook(replica, reason: str) -> None:
            self.index.drop_peer_holding(
                replica.version_key, terminal, replica.fragment.index
            )
            self._record_occupancy(terminal)
            self._trace(
                f"{self.now:.6f} DELETE terminal={terminal} "
                f"item={replica.fragment.item_id}@{replica.fragment.version} "
                f"frag={replica.fragment.index} reason={reason} bytes=0"
            )
        return hook

    def _record_occupancy(self, terminal: str) -> None:
        points = self.occupancy[terminal]
        used = self.stores[terminal].used_bytes
        if points[-1][1] != used:
            points.append((self.now, used))

    def success_of(self, key: VersionKey) -> float:
        return composite_success(self.index.get(key), self.tables, self.index)

    def _fragment_for(self, key: VersionKey, i: int):
        return self.fragment_sets[key].fragments[i]

    # -- event handlers --------------------------------------------------

    def _on_produced(self, event: DataProducedEvent) -> None:
        owner = event.owner
        if not self.alive[owner]:
            return
        item = event.item
        self.index.register(item)
        if item.version == 1:
            self.owned_ids[owner].append(item.id)
        raised = propagate_priority(self.index, item)
        self.tables[item.key] = ReliabilityTable.fresh(item.k)
        if self.config.payload_mode:
            payload = _payload_for(item.key, item.size_bytes)
            self.payloads[item.key] = payload
            self.fragment_sets[item.key] = split(
                payload, item.n, item.k, item_id=item.id, version=item.version
            )
        scheduler = self.schedulers[owner]
        scheduler.enqueue(item, self.success_of(item.key))
        # a raised dependency may fall short of its new target again
        for dep_key in sorted(raised):
            dep = self.index.get(dep_key)
            if dep.owner != owner or dep_key in scheduler.queue:
                continue
            if self.index.is_on_server(dep_key):
                continue
            scheduler.queue.enqueue(dep_key, dep.priority - self.success_of(dep_key))
        self._trace(
            f"{self.now:.6f} PRODUCE owner={owner} item={item.id}@{item.version} "
            f"bytes={item.size_bytes}"
        )

    def _send_owner_notices(self, owner: str, peer: str) -> None:
        """The owner tells a peer which of its held versions are superseded."""
        store = self.stores[peer]
        held: dict[str, int] = {}
        for replica in store.replicas():
            if replica.owner == owner and replica.version_key in self.index:
                item_id = replica.fragment.item_id
                held[item_id] = max(held.get(item_id, 0), replica.fragment.version)
        for item_id in sorted(held):
            latest = self.index.latest_version(item_id)
            if held[item_id] < latest:
                changed = store.notify(NoticeSource.OWNER_NOTICE, item_id, latest)
                if changed:
                    self._trace(
                        f"{self.now:.6f} NOTICE kind=owner from={owner} to={peer} "
                        f"item={item_id}@{latest} bytes=0"
                    )

    def _on_encounter(self, event: EncounterEvent) -> None:
        a, b = event.a, event.b
        if not (self.alive[a] and self.alive[b]):
            return
        budget = int(event.duration * event.bandwidth)
        self._trace(f"{self.now:.6f} ENCOUNTER a={a} b={b} bytes={budget}")
        if budget <= 0:
            return
        for owner, peer in ((a, b), (b, a)):
            if owner in self.schedulers:
                self._send_owner_notices(owner, peer)
        if not self.config.peer_backup:
            return
        link = LinkSession(budget)
        for owner, peer in ((a, b), (b, a)):
            scheduler = self.schedulers.get(owner)
            if scheduler is None or not link.reachable:
                continue
            if (
                self.config.terminals.backup_peers == "nonproducers"
                and peer in self.schedulers
            ):
                continue
            terminal = _PeerTerminal(self, peer)
            outcomes = scheduler.on_meeting(terminal, link, now=self.now)
            session_fate: dict[VersionKey, bool] = {}
            for outcome in outcomes:
                if not outcome.saved:
                    continue
                key = outcome.key
                if key not in session_fate:
                    session_fate[key] = self._channels.random() < self.true_retrieval
                self.fates[(peer, key[0], key[1], outcome.fragment_index)] = session_fate[key]
                self.index.record_peer_holding(key, peer, outcome.fragment_index)
                self.bytes_to_peers += outcome.bytes_transferred
                self.fragments_saved += 1
                self._record_occupancy(peer)
                self._trace(
                    f"{self.now:.6f} SAVE from={owner} to={peer} "
                    f"item={key[0]}@{key[1]} frag={outcome.fragment_index} "
                    f"bytes={outcome.bytes_transferred}"
                )

    def _mark_served(self, key: VersionKey) -> None:
        self.index.mark_on_server(key)
        item_id, version = key
        if self.served_max.get(item_id, 0) < version:
            self.served_max[item_id] = version

    def _on_window(self, event: InternetWindowEvent) -> None:
        terminal = event.terminal
        if not self.alive[terminal]:
            return
        budget = int(event.duration * event.bandwidth)
        self._trace(f"{self.now:.6f} WINDOW terminal={terminal} bytes={budget}")
        if budget <= 0:
            return
        scheduler = self.schedulers.get(terminal)
        if scheduler is not None:
            budget = self._flush_owner_queue(terminal, scheduler, budget)
        uploaded_ids = self._flush_held_replicas(terminal, budget)
        self._confirm_served(terminal, uploaded_ids)

    def _flush_owner_queue(self, owner: str, scheduler: Scheduler, budget: int) -> int:
        skipped: list[tuple[VersionKey, float]] = []
        while True:
            key = scheduler.queue.pull(scheduler.deficit_of)
            if key is None:
                break
            item = self.index.get(key)
            if item.expired(self.now):
                continue
            if item.size_bytes > budget:
                # does not fit what is left; keep going with smaller items
                skipped.append((key, item.priority - self.success_of(key)))
                continue
            budget -= item.size_bytes
            self.bytes_to_server += item.size_bytes
            self._mark_served(key)
            self._trace(
                f"{self.now:.6f} UPLOAD_ITEM from={owner} item={key[0]}@{key[1]} "
                f"bytes={item.size_bytes}"
            )
        for key, deficit in skipped:
            scheduler.queue.enqueue(key, deficit)
        return budget

    def _flush_held_replicas(self, terminal: str, budget: int) -> set[str]:
        store = self.stores[terminal]
        uploaded_ids: set[str] = set()
        for replica in store.replicas():
            key = replica.version_key
            if key not in self.index or self.index.is_on_server(key):
                continue
            if replica.state is ReplicaState.CONFIRMED_SAVED:
                continue
            if replica.state is ReplicaState.OUTDATED and not self._pin_check(*key):
                continue  # superseded and protecting nothing: not worth budget
            have = self.server_fragments.setdefault(key, set())
            if replica.fragment.index in have:
                continue
            size = replica.size_bytes
            if size > budget:
                break
            budget -= size
            have.add(replica.fragment.index)
            if self.config.payload_mode:
                self.server_fragment_objects.setdefault(key, {})[
                    replica.fragment.index
                ] = replica.fragment
            self.bytes_to_server += size
            uploaded_ids.add(key[0])
            self._trace(
                f"{self.now:.6f} UPLOAD_FRAG from={terminal} item={key[0]}@{key[1]} "
                f"frag={replica.fragment.index} bytes={size}"
            )
            if len(have) >= self.index.get(key).k:
                self._mark_served(key)
        return uploaded_ids

    def _confirm_served(self, terminal: str, uploaded_ids: set[str]) -> None:
        store = self.stores[terminal]
        held_ids = sorted({r.fragment.item_id for r in store.replicas()})
        for item_id in held_ids:
            vmax = self.served_max.get(item_id)
            if vmax is None:
                continue
            source = (
                NoticeSource.SAVE_BY_ME
                if item_id in uploaded_ids
                else NoticeSource.SERVER_NOTICE
            )
            changed = store.notify(source, item_id, vmax)
            if changed:
                self._trace(
                    f"{self.now:.6f} NOTICE kind={source.value} to={terminal} "
                    f"item={item_id}@{vmax} bytes=0"
                )
        store.purge(self.now)

    def _on_failure(self, event: TerminalFailureEvent) -> tuple[Event, ...]:
        terminal = event.terminal
        if not self.alive[terminal]:
            return ()
        self.alive[terminal] = False
        self._trace(f"{self.now:.6f} FAIL terminal={terminal} bytes=0")
        if terminal not in self.schedulers:
            return ()
        episodes: list[tuple[VersionKey, float]] = []
        for item_id in sorted(self.owned_ids[terminal]):
            key = (item_id, self.index.latest_version(item_id))
            if self.index.get(key).expired(self.now):
                continue
            predicted = 1.0 if self.index.is_on_server(key) else self.success_of(key)
            episodes.append((key, predicted))
        self.pending_restores[terminal] = episodes
        return (
            RestoreAttemptEvent(
                time=self.now + self.config.restore_delay_s, owner=terminal
            ),
        )

    # -- restorability ----------------------------------------------------

    def _retrievable_indices(self, key: VersionKey) -> dict[int, Any]:
        """Fragment indices reachable right now, with payload sources."""
        found: dict[int, Any] = {}
        for idx in sorted(self.server_fragments.get(key, ())):
            found[idx] = self.server_fragment_objects.get(key, {}).get(idx)
        item_id, version = key
        for terminal, indices in sorted(self.index.peer_holdings(key).items()):
            if not self.alive[terminal]:
                continue
            store = self.stores[terminal]
            for idx in sorted(indices):
                if idx in found:
                    continue
                if not self.fates.get((terminal, item_id, version, idx), False):
                    continue
                owner = self.index.get(key).owner
                replica_key = (owner, item_id, version, idx)
                if replica_key in store:
                    found[idx] = store.get(replica_key).fragment
        return found

    def _restorable(self, key: VersionKey, memo: dict[VersionKey, bool]) -> bool:
        if key in memo:
            return memo[key]
        memo[key] = False
        item = self.index.get(key)
        if self.index.is_on_server(key):
            own_ok = True
        else:
            available = self._retrievable_indices(key)
            own_ok = len(available) >= item.k
            if own_ok and self.config.payload_mode:
                fragments = [f for f in available.values() if f is not None]
                rebuilt = reconstruct(fragments[: item.k])
                if rebuilt != self.payloads[key]:
                    raise IntegrityError(f"reconstruction of {key} does not match the original")
        ok = own_ok and all(self._restorable(d, memo) for d in item.temporal_deps)
        memo[key] = ok
        return ok

    def _on_restore(self, event: RestoreAttemptEvent) -> None:
        owner = event.owner
        memo: dict[VersionKey, bool] = {}
        for key, predicted in self.pending_restores.pop(owner, []):
            realized = self._restorable(key, memo)
            self.episodes.append((predicted, 1 if realized else 0))
        alive_now = [t for t in self.names if self.alive[t]]
        for item_id in sorted(self.owned_ids.get(owner, [])):
            versions = self.index.versions_of(item_id)
            best = None
            for version in versions:
                if self._restorable((item_id, version), memo):
                    best = version
            if best is None:
                self._trace(
                    f"{self.now:.6f} RESTORE_FAIL owner={owner} item={item_id} bytes=0"
                )
                continue
            restored_from = (
                Location.SERVER
                if self.index.is_on_server((item_id, best))
                else Location.PEER
            )
            self._trace(
                f"{self.now:.6f} RESTORE owner={owner} item={item_id}@{best} "
                f"source={restored_from.value} bytes=0"
            )
            report = detect_conflict(
                self.index.records_for(item_id, alive=alive_now), restored_from, best
            )
            if report is not None:
                self.conflicts.append(
                    {
                        "item_id": report.item_id,
                        "restored_version": report.restored_version,
                        "restored_from": report.restored_from.value,
                        "newer_version": report.newer_version,
                        "newer_location": report.newer_location.value,
                        "newer_peers": list(report.newer_peers),
                    }
                )
                self._trace(
                    f"{self.now:.6f} CONFLICT item={item_id} "
                    f"restored={report.restored_version}@{report.restored_from.value} "
                    f"newer={report.newer_version}@{report.newer_location.value} bytes=0"
                )

    # -- driving --------------------------------------------------------

    def process(self, event: Event) -> tuple[Event, ...]:
        """Apply one event at its timestamp; returns any follow-up events.

        `run` drives this from the generated timeline; scripted scenarios
        may call it directly with hand-built events in time order.
        """
        if event.time < self.now:
            raise ConfigError(f"event at {event.time} is behind the clock {self.now}")
        self.now = event.time
        if isinstance(event, DataProducedEvent):
            self._on_produced(event)
        elif isinstance(event, EncounterEvent):
            self._on_encounter(event)
        elif isinstance(event, InternetWindowEvent):
            self._on_window(event)
        elif isinstance(event, TerminalFailureEvent):
            return self._on_failure(event)
        elif isinstance(event, RestoreAttemptEvent):
            self._on_restore(event)
        else:
            raise ConfigError(f"unknown event type {type(event).__name__}")
        return ()

    def run(self) -> MetricsReport:
        heap: list[tuple[float, int, Event]] = []
        seq = 0
        for event in generate_events(self.config):
            heapq.heappush(heap, (event.time, seq, event))
            seq += 1
        while heap:
            _, _, event = heapq.heappop(heap)
            for follow_up in self.process(event):
                heapq.heappush(heap, (follow_up.time, seq, follow_up))
                seq += 1
        self.now = self.config.horizon_s
        return self._final_report()

    def finish(self) -> MetricsReport:
        """Close a scripted run at the horizon and classify every item."""
        self.now = max(self.now, self.config.horizon_s)
        return self._final_report()

    def _final_report(self) -> MetricsReport:
        memo: dict[VersionKey, bool] = {}
        outcomes: dict[str, str] = {}
        for key in sorted(self.index.keys()):
            if self.index.is_on_server(key):
                outcome = OUTCOME_SAFE
            elif self._restorable(key, memo):
                outcome = OUTCOME_RECOVERABLE
            else:
                outcome = OUTCOME_LOST
            outcomes[f"{key[0]}@{key[1]}"] = outcome

        measured: list[tuple[DataItem, str]] = []
        for owner in self.producers:
            for item_id in self.owned_ids[owner]:
                key = (item_id, self.index.latest_version(item_id))
                item = self.index.get(key)
                if item.expired(self.now):
                    continue
                measured.append((item, outcomes[f"{key[0]}@{key[1]}"]))
        lost = sum(1 for _, o in measured if o == OUTCOME_LOST)
        loss_ratio = lost / len(measured) if measured else 0.0
        by_band: dict[str, float] = {}
        for lo, hi in _BANDS:
            members = [
                (item, o) for item, o in measured
                if lo <= item.priority < hi or (hi == 1.0 and item.priority == 1.0)
            ]
            if members:
                band_lost = sum(1 for _, o in members if o == OUTCOME_LOST)
                by_band[f"{lo:.2f}-{hi:.2f}"] = band_lost / len(members)

        produced = len(self.index)
        return MetricsReport(
            seed=self.config.seed,
            horizon_s=self.config.horizon_s,
            items_produced=produced,
            items_measured=len(measured),
            outcomes=outcomes,
            loss_ratio=loss_ratio,
            loss_ratio_by_band=by_band,
            fragments_saved=self.fragments_saved,
            mean_fragments_per_item=(self.fragments_saved / produced) if produced else 0.0,
            bytes_to_peers=self.bytes_to_peers,
            bytes_to_server=self.bytes_to_server,
            conflict_count=len(self.conflicts),
            conflicts=tuple(self.conflicts),
            calibration_episodes=tuple(self.episodes),
            occupancy={t: tuple(points) for t, points in self.occupancy.items()},
        )


class _PeerTerminal:
    """Adapter presenting a peer's store to the owner-side scheduler."""

    def __init__(self, sim: Simulation, terminal_id: str) -> None:
        self._sim = sim
        self.terminal_id = terminal_id
        self.channel = sim.channel_estimate

    def free_bytes(self) -> int:
        return self._sim.stores[self.terminal_id].free_bytes(self._sim.now)

    def save(self, fragment, item: DataItem, declared_success: float) -> bool:
        meta = ReplicaMetadata(
            owner=item.owner,
            priority=item.priority,
            declared_success=declared_success,
            lifetime=item.lifetime,
            temporal_deps=item.temporal_deps,
            mergeable=item.mergeable,
            stream=item.stream,
        )
        return self._sim.stores[self.terminal_id].accept(fragment, meta, self._sim.now)


def run(config: ScenarioConfig, trace: Optional[TraceSink] = None) -> MetricsReport:
    """Execute one deterministic run of a scenario."""
    return Simulation(config, trace=trace).run()


def run_batch(config: ScenarioConfig, replications: int) -> BatchReport:
    """Run `replications` seeds (seed, seed+1, ...) and aggregate metrics."""
    if replications < 1:
        raise ConfigError(f"replications must be >= 1, got {replications}")
    reports = []
    for r in range(replications):
        replica_config = config_from_dict({**config.to_dict(), "seed": config.seed + r})
        reports.append(run(replica_config))
    metrics: dict[str, dict[str, float]] = {}
    for name in MetricsReport.scalar_metrics:
        values = [float(getattr(rep, name)) for rep in reports]
        mean = sum(values) / len(values)
        if len(values) > 1:
            var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
            half = 1.96 * math.sqrt(var / len(values))
        else:
            var = 0.0
            half = 0.0
        metrics[name] = {
            "mean": mean,
            "stdev": math.sqrt(var),
            "ci_low": mean - half,
            "ci_high": mean + half,
        }
    pooled = tuple(e for rep in reports for e in rep.calibration_episodes)
    return BatchReport(
        seed=config.seed,
        replications=replications,
        metrics=metrics,
        calibration_episodes=pooled,
    )
