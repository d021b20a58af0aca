"""Workers: train owned partitions, serve batches to peers, and finish together.

Each worker is a single sequential loop. Per iteration it advances every
owned partition by one step (fetching remote batches point-to-point and
servicing inbound requests while it waits), then polls its inbox once.
After its last iteration it announces Done to its peers and keeps serving
until every peer has announced Done too.
"""

from __future__ import annotations

import itertools
import logging
import threading
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from psvgp.config import TrainRun
from psvgp.errors import ConfigError, FabricError, ProtocolError, RoutingError, TransportError, WatchdogError
from psvgp.fabric.core import (
    BatchReply,
    BatchRequest,
    Done,
    Fabric,
    Message,
    MessageKind,
    Shutdown,
    Transport,
    TransportAudit,
    WorkerAssignment,
    assign_workers,
)
from psvgp.fabric.inproc import InProcessFabric
from psvgp.fabric.zmq_transport import ZmqFabric
from psvgp.gp import Array
from psvgp.partition import NeighborGraph, PartitionData, neighborhoods
from psvgp.sgd import Draw, PartitionTrainer, source_probs
from psvgp.svgp import VariationalState

log = logging.getLogger(__name__)

POLL_INTERVAL = 0.0005  # seconds between empty polls


def open_fabric(kind: str, n_workers: int) -> Fabric:
    """Fabric for a `TrainRun.transport` name."""
    match kind:
        case "inproc":
            return InProcessFabric(n_workers)
        case "zmq":
            return ZmqFabric(n_workers)
    raise ConfigError(f"unknown transport: {kind!r}")


def peers_of(assignment: WorkerAssignment, graph: NeighborGraph, delta: float) -> frozenset[int]:
    """Workers owning a neighbor of any owned partition (none when delta is 0)."""
    if delta == 0:
        return frozenset()
    owners = {
        assignment.owner(k) for pid in assignment.owned for k in graph.neighbors(pid)
    }
    return frozenset(owners - {assignment.worker_id})


def remote_probabilities(
    graph: NeighborGraph, routing: Mapping[int, int], delta: float
) -> dict[int, float]:
    """Per-iteration probability that each trained partition needs a remote batch."""
    probs: dict[int, float] = {}
    for j, n_j in graph.counts.items():
        if n_j == 0:
            continue
        probs[j] = sum(
            p for k, p in source_probs(j, graph, delta).items() if routing[k] != routing[j]
        )
    return probs


class Worker:
    """One worker's training, serving, and termination loop."""

    def __init__(
        self,
        assignment: WorkerAssignment,
        partitions: Mapping[int, PartitionData],
        graph: NeighborGraph,
        run: TrainRun,
        transport: Transport,
        audit: TransportAudit,
    ) -> None:
        self.id = assignment.worker_id
        self.assignment = assignment
        self.transport = transport
        self.audit = audit
        self.data = {pid: partitions[pid] for pid in assignment.owned}
        self.trainers = [
            PartitionTrainer(part, graph, run) for part in self.data.values() if part.n > 0
        ]
        self.peers = peers_of(assignment, graph, run.delta)
        self.iterations = run.iterations
        self.watchdog = run.watchdog

        self.iteration = 0
        self.requested = 0
        self.served = 0
        self._request_ids = itertools.count()
        self._awaiting: int | None = None
        self._reply: BatchReply | None = None
        self._done_from: set[int] = set()
        self._aborted_peers: set[int] = set()
        self._last_progress = time.monotonic()
        self.failed_at: float | None = None

    def run(self) -> None:
        """Train, then terminate; on failure tell the peers and re-raise."""
        log.info(
            "worker %d starting: partitions %s, peers %s",
            self.id,
            list(self.assignment.owned),
            sorted(self.peers),
        )
        try:
            for iteration in range(self.iterations):
                self.iteration = iteration
                for trainer in self.trainers:
                    draw = trainer.draw()
                    coords, responses = self.fetch(trainer.id, draw, trainer.batch_size)
                    trainer.step(coords, responses)
                    self._progress()
                self.service()
            self.terminate()
        except Exception as e:
            self.failed_at = time.monotonic()
            self.abort(e)
            raise
        finally:
            self.audit.exit(self.id)
            self.transport.close()

    def fetch(self, j: int, draw: Draw, batch_size: int) -> tuple[Array, Array]:
        """Rows for `draw`, sliced locally or requested from the owning worker."""
        owner = self.assignment.owner(draw.source)
        if owner == self.id:
            part = self.data[draw.source]
            return part.coords[draw.indices], part.responses[draw.indices]

        request = BatchRequest(
            sender=self.id,
            request_id=next(self._request_ids),
            source=j,
            target=draw.source,
            batch_size=batch_size,
            indices=draw.indices,
        )
        self._awaiting = request.request_id
        self.transport.send(owner, request)
        self.requested += 1
        while self._reply is None:
            if not self.service():
                self._idle(f"waiting for reply {request.request_id} from worker {owner}")

        reply, self._reply, self._awaiting = self._reply, None, None
        if reply.target != draw.source or reply.rows != len(draw.indices):
            raise ProtocolError(
                f"worker {owner} -> {self.id}: reply {reply.request_id} does not match "
                f"the request for {len(draw.indices)} rows of partition {draw.source}"
            )
        return reply.coords, reply.responses

    def service(self) -> bool:
        """Handle everything in the inbox; True if anything arrived."""
        messages = self.transport.poll()
        for message in messages:
            reply = self.service_inbound(message)
            if reply is not None:
                self.transport.send(message.sender, reply)
        if messages:
            self._progress()
        return bool(messages)

    def service_inbound(self, message: Message) -> Message | None:
        """Process one inbound message, returning the reply to send (if any)."""
        match message:
            case BatchRequest():
                return self._answer(message)
            case BatchReply():
                if self._awaiting != message.request_id or self._reply is not None:
                    raise ProtocolError(
                        f"worker {message.sender} -> {self.id}: reply {message.request_id} "
                        "matches no outstanding request"
                    )
                self._reply = message
            case Done():
                self._done_from.add(message.sender)
            case Shutdown():
                self._aborted_peers.add(message.sender)
                raise TransportError(
                    f"worker {message.sender} -> {self.id}: peer aborted: {message.reason}"
                )
        return None

    def _answer(self, request: BatchRequest) -> BatchReply:
        part = self.data.get(request.target)
        if part is None:
            raise RoutingError(
                f"worker {request.sender} -> {self.id}: partition {request.target} "
                "is not owned here"
            )
        idx = np.asarray(request.indices, dtype=np.int64)
        expected = min(request.batch_size, part.n)
        valid = (
            request.batch_size >= 1
            and idx.shape == (expected,)
            and (idx.size == 0 or (idx.min() >= 0 and idx.max() < part.n))
            and np.unique(idx).size == idx.size
        )
        if not valid:
            raise ProtocolError(
                f"worker {request.sender} -> {self.id}: request {request.request_id} has an "
                f"invalid index set for partition {request.target} (n={part.n}, "
                f"batch={request.batch_size}, got {idx.size} indices)"
            )
        self.served += 1
        return BatchReply(
            sender=self.id,
            request_id=request.request_id,
            target=request.target,
            coords=part.coords[idx],
            responses=part.responses[idx],
        )

    def terminate(self) -> None:
        """Announce Done and keep serving until every peer has done the same."""
        for peer in sorted(self.peers):
            self.transport.send(peer, Done(self.id))
        while not self.peers <= self._done_from:
            if not self.service():
                waiting = sorted(self.peers - self._done_from)
                self._idle(f"waiting for Done from workers {waiting}")
        log.info(
            "worker %d finished: %d requests sent, %d served", self.id, self.requested, self.served
        )

    def abort(self, error: BaseException) -> None:
        """Tell every live peer this worker is giving up."""
        log.error("worker %d aborting: %s", self.id, error)
        for peer in sorted(self.peers - self._aborted_peers):
            try:
                self.transport.send(peer, Shutdown(self.id, str(error)))
            except FabricError as e:
                log.debug("worker %d could not notify worker %d: %s", self.id, peer, e)

    def dump(self) -> dict[str, Any]:
        return {
            "worker": self.id,
            "iteration": self.iteration,
            "owned": list(self.assignment.owned),
            "peers": sorted(self.peers),
            "done_from": sorted(self._done_from),
            "awaiting": self._awaiting,
            "requested": self.requested,
            "served": self.served,
        }

    def _progress(self) -> None:
        self._last_progress = time.monotonic()

    def _idle(self, waiting_for: str) -> None:
        if time.monotonic() - self._last_progress > self.watchdog:
            dump = self.dump()
            log.error("worker %d watchdog fired: %s", self.id, dump)
            raise WatchdogError(
                f"worker {self.id} made no progress for {self.watchdog:g}s while {waiting_for}",
                dump,
            )
        time.sleep(POLL_INTERVAL)


@dataclass(frozen=True)
class TrainingResult:
    """Trained models and what it took to train them."""

    states: dict[int, VariationalState]
    audit: TransportAudit
    seconds: float
    iterations: int
    traces: dict[int, list[tuple[int, float]]]
    graph: NeighborGraph
    assignments: list[WorkerAssignment]

    @property
    def requests(self) -> int:
        return self.audit.count(MessageKind.BATCH_REQUEST)

    @property
    def messages(self) -> int:
        return self.audit.count()

    @property
    def seconds_per_iteration(self) -> float:
        return self.seconds / self.iterations if self.iterations else 0.0


def _run_workers(workers: Sequence[Worker]) -> None:
    if len(workers) == 1:
        workers[0].run()
        return

    lock = threading.Lock()
    failures: list[tuple[float, Exception]] = []

    def target(worker: Worker) -> None:
        try:
            worker.run()
        except Exception as e:
            with lock:
                failures.append((worker.failed_at or time.monotonic(), e))

    threads = [
        threading.Thread(target=target, args=(w,), name=f"psvgp-worker-{w.id}") for w in workers
    ]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    if failures:
        # the earliest failure is the cause; later ones are peers reacting to it
        raise min(failures, key=lambda f: f[0])[1]


def run_training(
    run: TrainRun,
    partitions: Sequence[PartitionData],
    fabric: Fabric | None = None,
) -> TrainingResult:
    """Train every non-empty partition with one worker per assignment block."""
    run.validate()
    graph = neighborhoods(partitions, run.adjacency, run.wraparound)  # type: ignore[arg-type]
    assignments = assign_workers([p.id for p in partitions], run.procs)
    data = {p.id: p for p in partitions}

    owned_fabric = fabric is None
    active = fabric if fabric is not None else open_fabric(run.transport, len(assignments))
    try:
        workers = [
            Worker(a, data, graph, run, active.connect(a.worker_id), active.audit)
            for a in assignments
        ]
        start = time.perf_counter()
        _run_workers(workers)
        seconds = time.perf_counter() - start
    finally:
        if owned_fabric:
            active.close()

    trainers = sorted((t for w in workers for t in w.trainers), key=lambda t: t.id)
    return TrainingResult(
        states={t.id: t.state for t in trainers},
        audit=active.audit,
        seconds=seconds,
        iterations=run.iterations,
        traces={t.id: t.trace for t in trainers if t.trace},
        graph=graph,
        assignments=assignments,
    )
