"""Binary record format for the socket transport.

Every record is a little-endian uint32 body length followed by the body:

    magic   4 bytes  b"PSVG"
    version uint16
    kind    uint8    (MessageKind)
    sender  int64
    ...     kind-specific fields in declaration order

Integers are int64 and reals are float64. Arrays are preceded by their
dimensions. See docs/wire.md for the full layout.
"""

from __future__ import annotations

import struct
from typing import Any

import numpy as np

from psvgp.errors import ProtocolError
from psvgp.fabric.core import (
    BatchReply,
    BatchRequest,
    Done,
    Message,
    MessageKind,
    Shutdown,
)

MAGIC = b"PSVG"
VERSION = 1

_LENGTH = struct.Struct("<I")
_HEADER = struct.Struct("<4sHBq")
_INT = struct.Struct("<q")
_INTS5 = struct.Struct("<qqqqq")
_INTS4 = struct.Struct("<qqqq")


def encode(message: Message) -> bytes:
    """Serialize one message to a length-prefixed record."""
    parts = [_HEADER.pack(MAGIC, VERSION, int(message.kind), message.sender)]
    match message:
        case BatchRequest():
            idx = np.ascontiguousarray(message.indices, dtype="<i8")
            parts.append(
                _INTS5.pack(
                    message.request_id,
                    message.source,
                    message.target,
                    message.batch_size,
                    idx.shape[0],
                )
            )
            parts.append(idx.tobytes())
        case BatchReply():
            coords = np.ascontiguousarray(message.coords, dtype="<f8")
            responses = np.ascontiguousarray(message.responses, dtype="<f8")
            rows, dims = coords.shape
            if responses.shape != (rows,):
                raise ProtocolError(
                    f"reply {message.request_id} has {rows} coordinate rows but "
                    f"{responses.shape[0]} responses"
                )
            parts.append(_INTS4.pack(message.request_id, message.target, rows, dims))
            parts.append(coords.tobytes())
            parts.append(responses.tobytes())
        case Done():
            pass
        case Shutdown():
            reason = message.reason.encode("utf-8")
            parts.append(_INT.pack(len(reason)))
            parts.append(reason)
    body = b"".join(parts)
    return _LENGTH.pack(len(body)) + body


class _Reader:
    def __init__(self, body: bytes, offset: int) -> None:
        self.body = body
        self.offset = offset

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if size < 0 or end > len(self.body):
            raise ProtocolError(f"truncated record: need {end} bytes, have {len(self.body)}")
        chunk = self.body[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: struct.Struct) -> tuple[Any, ...]:
        return tuple(fmt.unpack(self.take(fmt.size)))

    def array(self, count: int, wire: str, native: type[Any]) -> Any:
        if count < 0:
            raise ProtocolError(f"negative array length {count}")
        width = np.dtype(wire).itemsize
        return np.frombuffer(self.take(count * width), dtype=wire).astype(native)


def decode(record: bytes) -> Message:
    """Parse one length-prefixed record."""
    if len(record) < _LENGTH.size:
        raise ProtocolError("record shorter than its length prefix")
    (length,) = _LENGTH.unpack_from(record)
    if length != len(record) - _LENGTH.size:
        raise ProtocolError(
            f"record length prefix says {length} bytes, got {len(record) - _LENGTH.size}"
        )

    reader = _Reader(record, _LENGTH.size)
    magic, version, kind, sender = reader.unpack(_HEADER)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported wire version {version}")

    message: Message
    match kind:
        case MessageKind.BATCH_REQUEST:
            request_id, source, target, batch_size, count = reader.unpack(_INTS5)
            indices = reader.array(count, "<i8", np.int64)
            message = BatchRequest(sender, request_id, source, target, batch_size, indices)
        case MessageKind.BATCH_REPLY:
            request_id, target, rows, dims = reader.unpack(_INTS4)
            if rows < 0 or dims < 0:
                raise ProtocolError(f"reply {request_id} has negative shape ({rows}, {dims})")
            coords = reader.array(rows * dims, "<f8", np.float64).reshape(rows, dims)
            responses = reader.array(rows, "<f8", np.float64)
            message = BatchReply(sender, request_id, target, coords, responses)
        case MessageKind.DONE:
            message = Done(sender)
        case MessageKind.SHUTDOWN:
            (size,) = reader.unpack(_INT)
            try:
                reason = reader.take(size).decode("utf-8")
            except UnicodeDecodeError as e:
                raise ProtocolError(f"shutdown reason is not utf-8: {e}") from e
            message = Shutdown(sender, reason)
        case _:
            raise ProtocolError(f"unknown record kind {kind}")

    if reader.offset != len(record):
        raise ProtocolError(f"{len(record) - reader.offset} trailing bytes after record")
    return message
