"""In-process transport for tests and single-machine runs."""

from __future__ import annotations

import threading
from collections import deque

import numpy as np

from psvgp.errors import TransportError
from psvgp.fabric import wire
from psvgp.fabric.core import Message, TransportAudit

Payload = bytes | Message


class InProcessFabric:
    """Thread-safe per-sender queues between a fixed set of workers.

    With `serialize` every message round-trips through the wire codec. With
    `shuffle_seed` each poll releases a random prefix of every sender queue,
    which randomizes interleaving across senders but keeps per-sender order.
    """

    def __init__(
        self,
        n_workers: int,
        *,
        serialize: bool = True,
        shuffle_seed: int | None = None,
    ) -> None:
        self.n_workers = n_workers
        self.serialize = serialize
        self.audit = TransportAudit()
        self._lock = threading.Lock()
        self._queues: list[dict[int, deque[Payload]]] = [
            {sender: deque() for sender in range(n_workers)} for _ in range(n_workers)
        ]
        self._closed: set[int] = set()
        self._rng = None if shuffle_seed is None else np.random.default_rng(shuffle_seed)

    def connect(self, worker_id: int) -> InProcessTransport:
        if not 0 <= worker_id < self.n_workers:
            raise TransportError(f"no worker {worker_id} in a fabric of {self.n_workers}")
        return InProcessTransport(self, worker_id)

    def close(self) -> None:
        with self._lock:
            self._closed.update(range(self.n_workers))

    def deliver(self, sender: int, receiver: int, message: Message) -> None:
        if not 0 <= receiver < self.n_workers:
            raise TransportError(f"worker {sender} -> {receiver}: no such worker")
        payload: Payload = wire.encode(message) if self.serialize else message
        with self._lock:
            if receiver in self._closed:
                raise TransportError(f"worker {sender} -> {receiver}: receiver has exited")
            self.audit.record(sender, receiver, message)
            self._queues[receiver][sender].append(payload)

    def collect(self, receiver: int) -> list[Message]:
        with self._lock:
            taken: list[Payload] = []
            for queue in self._queues[receiver].values():
                count = len(queue)
                if self._rng is not None and count:
                    count = int(self._rng.integers(0, count + 1))
                taken.extend(queue.popleft() for _ in range(count))
        return [wire.decode(p) if isinstance(p, bytes) else p for p in taken]

    def disconnect(self, worker_id: int) -> None:
        with self._lock:
            self._closed.add(worker_id)


class InProcessTransport:
    """One worker's endpoint on an `InProcessFabric`."""

    def __init__(self, fabric: InProcessFabric, worker_id: int) -> None:
        self.fabric = fabric
        self.worker_id = worker_id

    def send(self, to: int, message: Message) -> None:
        self.fabric.deliver(self.worker_id, to, message)

    def poll(self) -> list[Message]:
        return self.fabric.collect(self.worker_id)

    def close(self) -> None:
        self.fabric.disconnect(self.worker_id)
