"""Partitioned, durable, at-least-once message log with consumer groups.

Semantics in brief: a topic is N append-only partitions; a message lands on
partition crc32(key) mod N, getting the next contiguous offset; consumer
groups own a committed offset per partition, and anything at or past the
committed mark is redelivered after a restart.  Poll positions are
volatile; only commit survives.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass
from typing import NamedTuple

from ..errors import (
    BackpressureTimeoutError,
    BadConfigError,
    BadPartitionCountError,
    OffsetOutOfRangeError,
    TopicExistsError,
    UnknownTopicError,
)
from ..hashing import stable_hash32

_TOPIC_RE = re.compile(r"^[A-Za-z0-9._-]{1,128}$")

FSYNC_POLICIES = ("every_message", "interval")


class Message(NamedTuple):
    topic: str
    partition: int
    offset: int
    key: str
    value: str


@dataclass(frozen=True)
class BrokerConfig:
    data_dir: str
    fsync: str = "interval"
    fsync_interval_ms: float = 50.0
    # Producers block once a partition holds this many messages past the
    # slowest group's commit, and fail after the timeout.
    max_partition_backlog: int = 1_000_000
    produce_timeout_ms: float = 1000.0


def partition_for_key(key: str, partition_count: int) -> int:
    return stable_hash32(key) % partition_count


def _atomic_write_json(path: str, doc) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


class _Partition:
    """One append-only log: in-memory rows plus the file that backs them."""

    def __init__(self, path: str):
        self.path = path
        self.rows: list[tuple[str, str]] = []  # (key, value); offset = index
        self._fh = None
        self._last_sync = 0.0
        self._recover()

    def _recover(self) -> None:
        if os.path.exists(self.path):
            good_end = 0
            with open(self.path, "rb") as fh:
                for line in fh:
                    if not line.endswith(b"\n"):
                        break  # torn final write
                    try:
                        doc = json.loads(line)
                        if doc["offset"] != len(self.rows):
                            break
                        self.rows.append((doc["key"], doc["value"]))
                    except (ValueError, KeyError, TypeError):
                        break
                    good_end += len(line)
            size = os.path.getsize(self.path)
            if good_end != size:
                with open(self.path, "r+b") as fh:
                    fh.truncate(good_end)
        self._fh = open(self.path, "a", encoding="utf-8")

    def append(self, key: str, value: str, fsync_now: bool) -> int:
        offset = len(self.rows)
        line = json.dumps(
            {"offset": offset, "key": key, "value": value},
            separators=(",", ":"),
        )
        self._fh.write(line + "\n")
        self._fh.flush()
        if fsync_now:
            os.fsync(self._fh.fileno())
            self._last_sync = time.monotonic()
        self.rows.append((key, value))
        return offset

    def maybe_sync(self, interval_s: float) -> None:
        now = time.monotonic()
        if now - self._last_sync >= interval_s:
            os.fsync(self._fh.fileno())
            self._last_sync = now

    def sync(self) -> None:
        self._fh.flush()
        os.fsync(self._fh.fileno())
        self._last_sync = time.monotonic()

    def close(self) -> None:
        if self._fh is not None:
            self.sync()
            self._fh.close()
            self._fh = None


class _Group:
    """Committed offsets plus the volatile member/position bookkeeping."""

    def __init__(self):
        self.committed: dict[str, dict[int, int]] = {}  # topic -> {p: offset}
        self.members: dict[str, list[str]] = {}  # topic -> consumer ids, join order
        self.positions: dict[tuple[str, str], dict[int, int]] = {}  # (topic, cid)
        self.next_partition: dict[tuple[str, str], int] = {}  # poll fairness cursor


class Broker:
    """In-process broker core; both transports drive this object."""

    def __init__(self, config: BrokerConfig | str):
        if isinstance(config, str):
            config = BrokerConfig(data_dir=config)
        if config.fsync not in FSYNC_POLICIES:
            raise BadConfigError(f"fsync policy {config.fsync!r}")
        self.config = config
        self._lock = threading.RLock()
        self._data_arrived = threading.Condition(self._lock)
        self._space_freed = threading.Condition(self._lock)
        self._topics: dict[str, list[_Partition]] = {}
        self._groups: dict[str, _Group] = {}
        self._closed = False
        os.makedirs(config.data_dir, exist_ok=True)
        self._topics_path = os.path.join(config.data_dir, "topics.json")
        self._offsets_path = os.path.join(config.data_dir, "offsets.json")
        self._load()

    # -- persistence ------------------------------------------------------

    def _load(self) -> None:
        if os.path.exists(self._topics_path):
            with open(self._topics_path, encoding="utf-8") as fh:
                for name, count in json.load(fh).items():
                    self._topics[name] = [
                        _Partition(self._log_path(name, p)) for p in range(count)
                    ]
        if os.path.exists(self._offsets_path):
            with open(self._offsets_path, encoding="utf-8") as fh:
                for gid, topics in json.load(fh).items():
                    g = _Group()
                    g.committed = {
                        t: {int(p): o for p, o in offs.items()}
                        for t, offs in topics.items()
                    }
                    self._groups[gid] = g

    def _log_path(self, topic: str, partition: int) -> str:
        return os.path.join(self.config.data_dir, f"{topic}-{partition}.log")

    def _save_topics(self) -> None:
        _atomic_write_json(
            self._topics_path,
            {name: len(parts) for name, parts in self._topics.items()},
        )

    def _save_offsets(self) -> None:
        doc = {
            gid: {t: {str(p): o for p, o in offs.items()}
                  for t, offs in g.committed.items()}
            for gid, g in self._groups.items()
            if g.committed
        }
        _atomic_write_json(self._offsets_path, doc)

    # -- topics -----------------------------------------------------------

    def create_topic(self, name: str, partition_count: int) -> None:
        if not _TOPIC_RE.match(name or ""):
            raise BadConfigError(f"bad topic name {name!r}")
        if partition_count < 1:
            raise BadPartitionCountError(f"partition_count={partition_count}")
        with self._lock:
            if name in self._topics:
                raise TopicExistsError(name)
            self._topics[name] = [
                _Partition(self._log_path(name, p)) for p in range(partition_count)
            ]
            self._save_topics()

    def _parts(self, topic: str) -> list[_Partition]:
        try:
            return self._topics[topic]
        except KeyError:
            raise UnknownTopicError(topic) from None

    def topics(self) -> dict[str, int]:
        with self._lock:
            return {name: len(parts) for name, parts in self._topics.items()}

    def partition_count(self, topic: str) -> int:
        with self._lock:
            return len(self._parts(topic))

    def partition_length(self, topic: str, partition: int) -> int:
        with self._lock:
            return len(self._parts(topic)[partition].rows)

    # -- produce ----------------------------------------------------------

    def _in_flight(self, topic: str, partition: int) -> int:
        length = len(self._topics[topic][partition].rows)
        floor = None
        for g in self._groups.values():
            off = g.committed.get(topic, {}).get(partition, 0)
            floor = off if floor is None else min(floor, off)
        return length - (floor or 0)

    def produce(self, topic: str, key: str, value: str) -> tuple[int, int]:
        """Durably append one message; returns (partition, offset)."""
        with self._lock:
            parts = self._parts(topic)
            partition = partition_for_key(key, len(parts))
            deadline = time.monotonic() + self.config.produce_timeout_ms / 1000.0
            while self._in_flight(topic, partition) >= self.config.max_partition_backlog:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise BackpressureTimeoutError(
                        f"{topic}[{partition}] backlog over "
                        f"{self.config.max_partition_backlog}"
                    )
                self._space_freed.wait(remaining)
                self._parts(topic)  # re-raise if topic vanished
            part = parts[partition]
            offset = part.append(key, value, self.config.fsync == "every_message")
            if self.config.fsync == "interval":
                part.maybe_sync(self.config.fsync_interval_ms / 1000.0)
            self._data_arrived.notify_all()
            return partition, offset

    # -- consume ----------------------------------------------------------

    def _group(self, group_id: str) -> _Group:
        g = self._groups.get(group_id)
        if g is None:
            g = self._groups[group_id] = _Group()
        return g

    def _assignment(self, g: _Group, topic: str, consumer_id: str) -> list[int]:
        members = g.members.setdefault(topic, [])
        if consumer_id not in members:
            members.append(consumer_id)
            # Joining resets every member's position in this topic to the
            # committed mark; uncommitted progress is meant to replay.
            for (t, cid) in list(g.positions):
                if t == topic:
                    del g.positions[(t, cid)]
        n = len(self._parts(topic))
        rank = members.index(consumer_id)
        return [p for p in range(n) if p % len(members) == rank]

    def _positions(self, g: _Group, topic: str, consumer_id: str,
                   assigned: list[int]) -> dict[int, int]:
        key = (topic, consumer_id)
        pos = g.positions.get(key)
        if pos is None:
            committed = g.committed.get(topic, {})
            pos = {p: committed.get(p, 0) for p in assigned}
            g.positions[key] = pos
        for p in assigned:
            pos.setdefault(p, g.committed.get(topic, {}).get(p, 0))
        return pos

    def subscribe(self, group_id: str, topic: str,
                  consumer_id: str = "_default") -> None:
        """Start (or restart) a consumer session.

        A fresh session forgets volatile poll positions and resumes from
        the committed offsets, which is exactly how uncommitted messages
        get redelivered after a consumer dies.
        """
        with self._lock:
            self._parts(topic)
            g = self._group(group_id)
            members = g.members.setdefault(topic, [])
            if consumer_id not in members:
                members.append(consumer_id)
                for (t, cid) in list(g.positions):
                    if t == topic:
                        del g.positions[(t, cid)]
            else:
                g.positions.pop((topic, consumer_id), None)

    def leave(self, group_id: str, topic: str,
              consumer_id: str = "_default") -> None:
        with self._lock:
            g = self._group(group_id)
            members = g.members.get(topic, [])
            if consumer_id in members:
                members.remove(consumer_id)
                for (t, cid) in list(g.positions):
                    if t == topic:
                        del g.positions[(t, cid)]

    def poll(self, group_id: str, topic: str, max_messages: int = 100,
             timeout_ms: float = 0.0, consumer_id: str = "_default") -> list[Message]:
        """Fetch up to max_messages from this consumer's partitions.

        Blocks up to timeout_ms for the first message; an empty list on
        timeout is normal, not an error.  Never advances commits.
        """
        deadline = time.monotonic() + timeout_ms / 1000.0
        with self._lock:
            while True:
                parts = self._parts(topic)
                g = self._group(group_id)
                assigned = self._assignment(g, topic, consumer_id)
                pos = self._positions(g, topic, consumer_id, assigned)
                batch: list[Message] = []
                if assigned:
                    cursor_key = (topic, consumer_id)
                    start = g.next_partition.get(cursor_key, 0) % len(assigned)
                    for step in range(len(assigned)):
                        p = assigned[(start + step) % len(assigned)]
                        rows = parts[p].rows
                        while pos[p] < len(rows) and len(batch) < max_messages:
                            key, value = rows[pos[p]]
                            batch.append(Message(topic, p, pos[p], key, value))
                            pos[p] += 1
                        if len(batch) >= max_messages:
                            break
                    g.next_partition[cursor_key] = (start + 1) % len(assigned)
                if batch:
                    return batch
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return []
                self._data_arrived.wait(remaining)

    def commit(self, group_id: str, topic: str, offsets: dict[int, int]) -> None:
        """Persist per-partition resume points (offset = next to read)."""
        with self._lock:
            parts = self._parts(topic)
            for p, off in offsets.items():
                if not 0 <= p < len(parts):
                    raise OffsetOutOfRangeError(f"partition {p}")
                if not 0 <= off <= len(parts[p].rows):
                    raise OffsetOutOfRangeError(
                        f"{topic}[{p}] offset {off} > high water {len(parts[p].rows)}"
                    )
            g = self._group(group_id)
            topic_offsets = g.committed.setdefault(topic, {})
            for p, off in offsets.items():
                topic_offsets[p] = int(off)
            self._save_offsets()
            self._space_freed.notify_all()

    def committed(self, group_id: str, topic: str) -> dict[int, int]:
        with self._lock:
            return dict(self._group(group_id).committed.get(topic, {}))

    # -- lifecycle --------------------------------------------------------

    def flush(self) -> None:
        with self._lock:
            for parts in self._topics.values():
                for part in parts:
                    part.sync()

    def close(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._closed = True
            for parts in self._topics.values():
                for part in parts:
                    part.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
