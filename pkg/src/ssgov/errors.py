"""Error hierarchy shared across the engine.

Every error carries a stable machine-readable ``code`` so that service
responses, CLI output and audit records can name failures without parsing
exception text.
"""

from __future__ import annotations


class SsgovError(Exception):
    """Base class for all engine errors."""

    code = "ERROR"

    def __init__(self, detail: str = ""):
        super().__init__(detail or self.code)
        self.detail = detail or self.code


# --- frame calculus ---------------------------------------------------------

class NoApplicableFrame(SsgovError):
    code = "NO_APPLICABLE_FRAME"


class AmbiguousFrame(SsgovError):
    """Two applicable frames share the maximal priority.

    Signals a frame-authoring defect; never auto-resolved.
    """

    code = "AMBIGUOUS_FRAME"


class UnknownRequestKind(SsgovError):
    code = "UNKNOWN_REQUEST_KIND"


class NoApplicableRule(SsgovError):
    """Rules exist for the request kind but no context condition holds.

    Default-deny: an ungoverned context is answered with an error, never a
    silent permit.
    """

    code = "NO_APPLICABLE_RULE"


class UnresolvableField(SsgovError):
    code = "UNRESOLVABLE_FIELD"


class MissingContextParam(SsgovError):
    code = "MISSING_CONTEXT_PARAM"


class InvalidFrame(SsgovError):
    code = "INVALID_FRAME"


# --- registry store ---------------------------------------------------------

class DuplicateRegistry(SsgovError):
    code = "DUPLICATE_REGISTRY"


class InvalidSchema(SsgovError):
    code = "INVALID_SCHEMA"


class SchemaViolation(SsgovError):
    code = "SCHEMA_VIOLATION"


class UnknownRegistry(SsgovError):
    code = "UNKNOWN_REGISTRY"


class UnknownField(SsgovError):
    code = "UNKNOWN_FIELD"


class UnknownKey(SsgovError):
    code = "UNKNOWN_KEY"


class StaleBefore(SsgovError):
    code = "STALE_BEFORE"


class FutureSeq(SsgovError):
    code = "FUTURE_SEQ"


class GapDetected(SsgovError):
    code = "GAP_DETECTED"


class DigestMismatch(SsgovError):
    code = "DIGEST_MISMATCH"


# --- command language -------------------------------------------------------

class CommandSyntaxError(SsgovError):
    code = "SYNTAX_ERROR"

    def __init__(self, detail: str, line: int = 0, column: int = 0):
        super().__init__(f"{detail} (line {line}, column {column})" if line else detail)
        self.line = line
        self.column = column


class UnknownKeyword(CommandSyntaxError):
    code = "UNKNOWN_KEYWORD"


class LimitExceeded(SsgovError):
    code = "LIMIT_EXCEEDED"


# --- attestation ------------------------------------------------------------

class MissingField(SsgovError):
    code = "MISSING_FIELD"


class UnknownKeyId(SsgovError):
    code = "AUTH_UNKNOWN_KEY"


class ExpiredKey(SsgovError):
    code = "AUTH_EXPIRED_KEY"


class SignatureInvalid(SsgovError):
    code = "AUTH_FAIL"


class NonceReplay(SsgovError):
    code = "AUTH_NONCE_REPLAY"


# --- notification -----------------------------------------------------------

class DeniedPayload(SsgovError):
    code = "DENIED_PAYLOAD"
