"""Messages, transport interfaces, worker assignment, and the transport audit."""

from __future__ import annotations

import itertools
import logging
import threading
import time
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Protocol

import numpy as np
import numpy.typing as npt
import pandas as pd

from psvgp.errors import ConfigError
from psvgp.gp import Array

log = logging.getLogger(__name__)

AUDIT_FILENAME = "transport-audit.csv"


class MessageKind(IntEnum):
    """Record type tag (also the wire `kind` byte)."""

    BATCH_REQUEST = 1
    BATCH_REPLY = 2
    DONE = 3
    SHUTDOWN = 4


@dataclass(frozen=True, eq=False)
class BatchRequest:
    """Ask the owner of `target` for rows `indices`, on behalf of partition `source`."""

    sender: int
    request_id: int
    source: int
    target: int
    batch_size: int
    indices: npt.NDArray[np.int64]

    kind = MessageKind.BATCH_REQUEST


@dataclass(frozen=True, eq=False)
class BatchReply:
    """Rows of partition `target` answering request `request_id`."""

    sender: int
    request_id: int
    target: int
    coords: Array
    responses: Array

    kind = MessageKind.BATCH_REPLY

    @property
    def rows(self) -> int:
        return int(self.responses.shape[0])


@dataclass(frozen=True)
class Done:
    """The sender finished its iterations and will send no more requests."""

    sender: int

    kind = MessageKind.DONE


@dataclass(frozen=True)
class Shutdown:
    """The sender is aborting."""

    sender: int
    reason: str = ""

    kind = MessageKind.SHUTDOWN


Message = BatchRequest | BatchReply | Done | Shutdown


class Transport(Protocol):
    """Non-blocking, reliable, point-to-point, per-sender FIFO channel."""

    worker_id: int

    def send(self, to: int, message: Message) -> None: ...  # pragma: no cover

    def poll(self) -> list[Message]: ...  # pragma: no cover

    def close(self) -> None: ...  # pragma: no cover


class Fabric(Protocol):
    """Creates one connected transport per worker."""

    audit: TransportAudit

    def connect(self, worker_id: int) -> Transport: ...  # pragma: no cover

    def close(self) -> None: ...  # pragma: no cover


@dataclass(frozen=True)
class AuditEntry:
    """One sent message, or a worker exit (kind "exit")."""

    seq: int
    time: float
    sender: int
    receiver: int
    kind: str
    request_id: int = -1
    partition: int = -1
    rows: int = 0


def _describe(message: Message) -> tuple[int, int, int]:
    """(request id, partition, rows) for an audit entry."""
    match message:
        case BatchRequest():
            return message.request_id, message.source, int(len(message.indices))
        case BatchReply():
            return message.request_id, message.target, message.rows
    return -1, -1, 0


class TransportAudit:
    """Thread-safe log of every message sent through a fabric."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._seq = itertools.count()
        self._start = time.perf_counter()
        self._entries: list[AuditEntry] = []

    def record(self, sender: int, receiver: int, message: Message) -> None:
        request_id, partition, rows = _describe(message)
        with self._lock:
            self._entries.append(
                AuditEntry(
                    seq=next(self._seq),
                    time=time.perf_counter() - self._start,
                    sender=sender,
                    receiver=receiver,
                    kind=message.kind.name,
                    request_id=request_id,
                    partition=partition,
                    rows=rows,
                )
            )

    def exit(self, worker_id: int) -> None:
        with self._lock:
            self._entries.append(
                AuditEntry(
                    seq=next(self._seq),
                    time=time.perf_counter() - self._start,
                    sender=worker_id,
                    receiver=-1,
                    kind="exit",
                )
            )

    @property
    def entries(self) -> list[AuditEntry]:
        with self._lock:
            return list(self._entries)

    @property
    def messages(self) -> list[AuditEntry]:
        return [e for e in self.entries if e.kind != "exit"]

    def count(self, kind: MessageKind | None = None) -> int:
        """Number of messages sent, optionally of one kind."""
        if kind is None:
            return len(self.messages)
        return sum(1 for e in self.messages if e.kind == kind.name)

    def counts(self) -> dict[str, int]:
        return dict(Counter(e.kind for e in self.messages))

    def exits(self) -> dict[int, int]:
        """Exit sequence number per worker."""
        return {e.sender: e.seq for e in self.entries if e.kind == "exit"}

    def to_frame(self) -> pd.DataFrame:
        columns = ["seq", "time", "sender", "receiver", "kind", "request_id", "partition", "rows"]
        return pd.DataFrame([vars(e) for e in self.entries], columns=columns)

    def save(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)


@dataclass(frozen=True)
class WorkerAssignment:
    """Partitions owned by one worker, plus the shared routing table."""

    worker_id: int
    owned: tuple[int, ...]
    routing: Mapping[int, int] = field(repr=False)

    def owner(self, partition_id: int) -> int:
        return self.routing[partition_id]

    def owns(self, partition_id: int) -> bool:
        return self.routing.get(partition_id) == self.worker_id


def assign_workers(partition_ids: Sequence[int], n_proc: int) -> list[WorkerAssignment]:
    """Split partitions into contiguous row-major blocks, one per worker.

    >>> [a.owned for a in assign_workers(range(6), 3)]
    [(0, 1), (2, 3), (4, 5)]
    """
    ids = sorted(partition_ids)
    if n_proc < 1:
        raise ConfigError(f"need at least one worker, got {n_proc}")
    if n_proc > len(ids):
        raise ConfigError(f"{n_proc} workers for {len(ids)} partitions")
    if len(ids) % n_proc:
        log.warning(
            "%d workers do not evenly divide %d partitions; work is unbalanced",
            n_proc,
            len(ids),
        )

    blocks = [tuple(int(i) for i in b) for b in np.array_split(np.asarray(ids), n_proc)]
    routing = {pid: worker for worker, block in enumerate(blocks) for pid in block}
    return [WorkerAssignment(worker, block, routing) for worker, block in enumerate(blocks)]
