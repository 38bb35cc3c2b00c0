"""Exception types shared across the package."""

from __future__ import annotations


class MeshlocError(Exception):
    """Base class for all package errors."""


class MalformedLine(MeshlocError):
    def __init__(self, lineno: int, line: str, reason: str) -> None:
        super().__init__(f"line {lineno}: {reason}: {line!r}")
        self.lineno = lineno
        self.line = line
        self.reason = reason


class InvalidPattern(MeshlocError):
    pass


class InvalidThreshold(MeshlocError):
    pass


class EmptyTrace(MeshlocError):
    pass


class UnmappedAp(MeshlocError):
    def __init__(self, ap_id: str) -> None:
        super().__init__(f"AP {ap_id!r} is not part of the clustering snapshot")
        self.ap_id = ap_id


class EmptyHistory(MeshlocError):
    pass


class InvalidAgenda(MeshlocError):
    pass


class NoActiveNodes(MeshlocError):
    pass


class WorkloadOutOfRange(MeshlocError):
    pass
