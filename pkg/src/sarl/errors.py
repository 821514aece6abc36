"""Exception types shared across the package.

Every error raised by the scoring path derives from :class:`SarlError` so
batch drivers can convert failures into per-item error records instead of
aborting whole runs.
"""

from __future__ import annotations


class SarlError(Exception):
    """Base class for all package errors."""

    code = "internal"
    retryable = False


class ZeroVectorError(SarlError):
    """A vector with (near-)zero Euclidean norm cannot be normalized."""

    code = "zero_vector"


class DimensionMismatchError(SarlError):
    """Vectors within one trace must share a single dimension."""

    code = "dimension_mismatch"


class InvalidRequestError(SarlError):
    """A score request violates its shape contract."""

    code = "invalid_request"


class CorpusError(SarlError):
    """A corpus file is unreadable or violates the line schema in strict mode."""

    code = "corpus"


class TransportError(SarlError):
    """The embedding endpoint stayed unreachable after the retry budget."""

    code = "embed_transport"
    retryable = True


class ProtocolError(SarlError):
    """The embedding endpoint answered with an unusable payload."""

    code = "embed_protocol"


def error_info(exc: Exception) -> dict:
    """Map an exception to the wire-format error record."""
    if isinstance(exc, SarlError):
        return {"code": exc.code, "message": str(exc), "retryable": exc.retryable}
    return {"code": "internal", "message": f"{type(exc).__name__}: {exc}", "retryable": False}
