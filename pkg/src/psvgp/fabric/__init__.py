"""Decentralized worker fabric: messages, transports, and the training loop."""

from __future__ import annotations

from psvgp.fabric.core import (
    AUDIT_FILENAME,
    AuditEntry,
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
from psvgp.fabric.inproc import InProcessFabric, InProcessTransport
from psvgp.fabric.worker import (
    TrainingResult,
    Worker,
    open_fabric,
    peers_of,
    remote_probabilities,
    run_training,
)
from psvgp.fabric.zmq_transport import ZmqFabric, ZmqTransport

__all__ = [
    "AUDIT_FILENAME",
    "AuditEntry",
    "BatchReply",
    "BatchRequest",
    "Done",
    "Fabric",
    "InProcessFabric",
    "InProcessTransport",
    "Message",
    "MessageKind",
    "Shutdown",
    "TrainingResult",
    "Transport",
    "TransportAudit",
    "Worker",
    "WorkerAssignment",
    "ZmqFabric",
    "ZmqTransport",
    "assign_workers",
    "open_fabric",
    "peers_of",
    "remote_probabilities",
    "run_training",
]
