"""Exceptions raised by psvgp."""

from __future__ import annotations


class PsvgpError(Exception):
    """Base exception for psvgp errors."""


class ConfigError(PsvgpError):
    """Raised when a configuration or input shape is invalid."""


class DataError(PsvgpError):
    """Raised when input data is malformed or a model is missing."""


class NumericalError(PsvgpError):
    """Raised when a factorization fails after jitter escalation."""

    def __init__(self, message: str, context: str = "") -> None:
        super().__init__(f"{message} [{context}]" if context else message)
        self.context = context


class FabricError(PsvgpError):
    """Base exception for the worker communication layer."""


class ProtocolError(FabricError):
    """Raised on malformed records or replies that match no request."""


class RoutingError(FabricError):
    """Raised when a worker receives a request for a partition it does not own."""


class TransportError(FabricError):
    """Raised when a transport fails or a peer aborts the run."""


class WatchdogError(FabricError):
    """Raised when a worker makes no progress within the watchdog window."""

    def __init__(self, message: str, dump: dict[str, object] | None = None) -> None:
        super().__init__(message)
        self.dump = dump or {}
