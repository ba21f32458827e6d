"""Owner-side backup queue and the encounter save loop.

Pending items wait in a queue ordered by deficit (target priority minus
the current estimated restore probability), largest shortfall first,
FIFO among equals. When a terminal comes into range the loop repeatedly
pulls the neediest item that fits the terminal's free space, ships its
next fragment, folds the save into the item's reliability table, and
re-queues the item only while it still falls short of its target.

Deficits are recomputed lazily at pull time, so priority raises and
background server saves are picked up without re-heaping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, MutableMapping, Optional, Protocol

from .dispersal import fragment_wire_size
from .model import DataItem, Fragment, UsageError, VersionIndex, VersionKey
from .reliability import ChannelEstimate, ReliabilityTable


class TerminalHandle(Protocol):
    """What the save loop needs from an encountered terminal."""

    terminal_id: str
    channel: ChannelEstimate

    def free_bytes(self) -> int: ...

    def save(self, fragment: Fragment, item: DataItem, declared_success: float) -> bool: ...


def can_save(terminal: TerminalHandle, fragment_size: int) -> bool:
    """Quota gate: the terminal's advertised free space fits the fragment."""
    return terminal.free_bytes() >= fragment_size


@dataclass(frozen=True)
class SaveOutcome:
    """Record of one completed fragment transfer during a meeting."""

    item_id: str
    version: int
    fragment_index: int
    bytes_transferred: int
    channel: ChannelEstimate
    saved: bool

    @property
    def key(self) -> VersionKey:
        return (self.item_id, self.version)


class LinkSession:
    """Byte budget of one wireless contact; transfers are all-or-drop."""

    def __init__(self, budget_bytes: int) -> None:
        self.remaining = max(int(budget_bytes), 0)
        self.dropped = False

    @property
    def reachable(self) -> bool:
        return not self.dropped and self.remaining > 0

    def try_transfer(self, nbytes: int) -> bool:
        """Consume budget for one fragment; a shortfall drops the link."""
        if self.dropped:
            return False
        if nbytes <= self.remaining:
            self.remaining -= nbytes
            return True
        self.remaining = 0
        self.dropped = True
        return False


class BackupQueue:
    """Deficit-ordered set of pending item versions.

    Holds only keys and arrival sequence numbers; deficits are supplied
    by the caller at pull time. Entries whose deficit has gone
    non-positive since insertion are silently retired during a pull.
    """

    def __init__(self) -> None:
        self._entries: dict[VersionKey, int] = {}
        self._next_seq = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: VersionKey) -> bool:
        return key in self._entries

    def keys(self) -> list[VersionKey]:
        return list(self._entries)

    def enqueue(self, key: VersionKey, deficit: float) -> bool:
        """Insert iff the item still falls short of its target (deficit > 0)."""
        if key in self._entries:
            raise UsageError(f"{key} is already queued")
        if deficit <= 0.0:
            return False
        self._entries[key] = self._next_seq
        self._next_seq += 1
        return True

    def discard(self, key: VersionKey) -> None:
        self._entries.pop(key, None)

    def pull(
        self,
        deficit_of: Callable[[VersionKey], float],
        eligible: Optional[Callable[[VersionKey], bool]] = None,
    ) -> Optional[VersionKey]:
        """Remove and return the highest-deficit eligible entry.

        Ties break FIFO by insertion sequence. Entries at or above their
        target are dropped on sight; ineligible entries stay queued.
        """
        best: Optional[tuple[float, int, VersionKey]] = None
        for key, seq in list(self._entries.items()):
            deficit = deficit_of(key)
            if deficit <= 0.0:
                del self._entries[key]
                continue
            if eligible is not None and not eligible(key):
                continue
            candidate = (-deficit, seq, key)
            if best is None or candidate[:2] < best[:2]:
                best = candidate
        if best is None:
            return None
        del self._entries[best[2]]
        return best[2]


@dataclass
class Scheduler:
    """Per-owner backup driver: one queue, one fragment cursor per item.

    `success_of` supplies the current composite restore estimate for a
    version (the simulator wires it to the dependency-aware product);
    `fragment_for` materializes fragment number i of a version, or is
    left None to run in metadata mode with size-only fragments.
    """

    owner: str
    index: VersionIndex
    tables: MutableMapping[VersionKey, ReliabilityTable]
    success_of: Callable[[VersionKey], float]
    fragment_for: Optional[Callable[[VersionKey, int], Fragment]] = None
    queue: BackupQueue = field(default_factory=BackupQueue)
    _next_index: dict[VersionKey, int] = field(default_factory=dict)

    def enqueue(self, item: DataItem, current_success: float) -> bool:
        if item.key not in self.index:
            raise UsageError(f"{item.key} is not registered")
        return self.queue.enqueue(item.key, item.priority - current_success)

    def fragments_sent(self, key: VersionKey) -> int:
        return self._next_index.get(key, 0)

    def deficit_of(self, key: VersionKey) -> float:
        """Current shortfall below target; the queue's lazy ordering key."""
        return self.index.get(key).priority - self.success_of(key)

    def _fragment(self, key: VersionKey, i: int) -> Fragment:
        if self.fragment_for is not None:
            return self.fragment_for(key, i)
        item = self.index.get(key)
        return Fragment(
            item_id=item.id,
            version=item.version,
            index=i,
            n=item.n,
            k=item.k,
            original_size=item.size_bytes,
        )

    def on_meeting(
        self, terminal: TerminalHandle, link: LinkSession, now: float = 0.0
    ) -> list[SaveOutcome]:
        """Run the save loop against one encountered terminal.

        Stops when the link drops, the queue empties, or nothing left in
        the queue fits the terminal. Several fragments of one item saved
        in this same session share the terminal's fate, so the estimate
        is refolded through the batch update from the session-start
        table rather than stacked as independent saves.
        """
        outcomes: list[SaveOutcome] = []
        skips: set[VersionKey] = set()
        session_base: dict[VersionKey, ReliabilityTable] = {}
        session_count: dict[VersionKey, int] = {}
        channel = terminal.channel

        def eligible(key: VersionKey) -> bool:
            if key in skips:
                return False
            item = self.index.get(key)
            if item.expired(now):
                return True  # pulled then retired below
            if self._next_index.get(key, 0) >= item.n:
                return False  # exhausted: stays queued awaiting a server flush
            return can_save(terminal, fragment_wire_size(item.size_bytes, item.k))

        while link.reachable and len(self.queue):
            key = self.queue.pull(self.deficit_of, eligible)
            if key is None:
                break
            item = self.index.get(key)
            next_index = self._next_index.get(key, 0)
            if item.expired(now):
                continue  # no longer worth sending; silently retired
            prior_deficit = item.priority - self.success_of(key)
            fragment = self._fragment(key, next_index)
            size = fragment_wire_size(item.size_bytes, item.k)
            if not link.try_transfer(size):
                # dropped mid-transfer: the fragment does not count
                self.queue.enqueue(key, prior_deficit)
                break
            base = session_base.setdefault(key, self.tables[key])
            m = session_count.get(key, 0) + 1
            old_table = self.tables[key]
            self.tables[key] = base.add_batch_same_terminal(channel, m)
            proba = self.success_of(key)
            if not terminal.save(fragment, item, proba):
                self.tables[key] = old_table
                skips.add(key)
                self.queue.enqueue(key, prior_deficit)
                outcomes.append(
                    SaveOutcome(item.id, item.version, next_index, size, channel, False)
                )
                continue
            session_count[key] = m
            self._next_index[key] = next_index + 1
            outcomes.append(
                SaveOutcome(item.id, item.version, next_index, size, channel, True)
            )
            if proba < item.priority:
                self.queue.enqueue(key, item.priority - proba)
        return outcomes
