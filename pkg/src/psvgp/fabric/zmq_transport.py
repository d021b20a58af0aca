"""ZeroMQ socket transport.

Each worker binds one PULL socket and lazily connects one PUSH socket per
peer. Every ZeroMQ message carries exactly one wire record.
"""

from __future__ import annotations

import logging
import threading
import uuid
from collections.abc import Sequence

import zmq

from psvgp.errors import ConfigError, TransportError
from psvgp.fabric import wire
from psvgp.fabric.core import Message, TransportAudit

log = logging.getLogger(__name__)

LINGER_MS = 1000
SEND_TIMEOUT_MS = 10_000


class ZmqFabric:
    """Point-to-point PUSH/PULL sockets, one inbox per worker.

    Pass explicit `addresses` (e.g. ``tcp://127.0.0.1:5601``) or a `prefix`
    to which ``-<worker>`` is appended; by default a unique ``inproc://``
    prefix is used.
    """

    def __init__(
        self,
        n_workers: int,
        *,
        addresses: Sequence[str] | None = None,
        prefix: str | None = None,
    ) -> None:
        if addresses is None:
            base = prefix or f"inproc://psvgp-{uuid.uuid4().hex}"
            addresses = [f"{base}-{worker}" for worker in range(n_workers)]
        if len(addresses) != n_workers:
            raise ConfigError(f"got {len(addresses)} addresses for {n_workers} workers")
        self.n_workers = n_workers
        self.addresses = list(addresses)
        self.audit = TransportAudit()
        self.context = zmq.Context()
        self._lock = threading.Lock()
        self._transports: list[ZmqTransport] = []

    def connect(self, worker_id: int) -> ZmqTransport:
        if not 0 <= worker_id < self.n_workers:
            raise TransportError(f"no worker {worker_id} in a fabric of {self.n_workers}")
        transport = ZmqTransport(self, worker_id)
        with self._lock:
            self._transports.append(transport)
        return transport

    def close(self) -> None:
        with self._lock:
            transports, self._transports = self._transports, []
        for transport in transports:
            transport.close()
        self.context.term()


class ZmqTransport:
    """One worker's inbox and outboxes on a `ZmqFabric`."""

    def __init__(self, fabric: ZmqFabric, worker_id: int) -> None:
        self.fabric = fabric
        self.worker_id = worker_id
        self._outboxes: dict[int, zmq.Socket[bytes]] = {}
        self._closed = False
        self._inbox = fabric.context.socket(zmq.PULL)
        self._inbox.setsockopt(zmq.LINGER, LINGER_MS)
        address = fabric.addresses[worker_id]
        try:
            self._inbox.bind(address)
        except zmq.ZMQError as e:
            self._inbox.close()
            raise TransportError(f"worker {worker_id}: cannot bind {address}: {e}") from e
        log.debug("worker %d bound %s", worker_id, address)

    def _outbox(self, to: int) -> zmq.Socket[bytes]:
        sock = self._outboxes.get(to)
        if sock is None:
            if not 0 <= to < self.fabric.n_workers:
                raise TransportError(f"worker {self.worker_id} -> {to}: no such worker")
            sock = self.fabric.context.socket(zmq.PUSH)
            sock.setsockopt(zmq.LINGER, LINGER_MS)
            sock.setsockopt(zmq.SNDTIMEO, SEND_TIMEOUT_MS)
            sock.connect(self.fabric.addresses[to])
            self._outboxes[to] = sock
        return sock

    def send(self, to: int, message: Message) -> None:
        if self._closed:
            raise TransportError(f"worker {self.worker_id} -> {to}: transport closed")
        record = wire.encode(message)
        sock = self._outbox(to)
        self.fabric.audit.record(self.worker_id, to, message)
        try:
            sock.send(record)
        except zmq.ZMQError as e:
            raise TransportError(f"worker {self.worker_id} -> {to}: {e}") from e

    def poll(self) -> list[Message]:
        if self._closed:
            return []
        records: list[bytes] = []
        while True:
            try:
                records.append(self._inbox.recv(flags=zmq.NOBLOCK))
            except zmq.Again:
                break
            except zmq.ZMQError as e:
                raise TransportError(f"worker {self.worker_id}: receive failed: {e}") from e
        return [wire.decode(r) for r in records]

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        for sock in self._outboxes.values():
            sock.close()
        self._outboxes.clear()
        self._inbox.close()
