"""Exception hierarchy shared by every module."""


class RGMemError(Exception):
    """Base class; ``code`` is the machine-readable error name used by the HTTP API."""

    code = "internal"


class ValidationError(RGMemError):
    code = "validation"


class InvalidUnit(ValidationError):
    code = "invalid_unit"


class DuplicateUnit(RGMemError):
    code = "duplicate_unit"


class DuplicateProfile(RGMemError):
    code = "duplicate_profile"


class NotFound(RGMemError):
    code = "not_found"


class UnknownUnit(NotFound):
    code = "unknown_unit"


class UnknownEdge(NotFound):
    code = "unknown_edge"


class UnknownNode(NotFound):
    code = "unknown_node"


class UnknownProfile(NotFound):
    code = "unknown_profile"


class UnknownDoc(NotFound):
    code = "unknown_doc"


class WrongEdgeKind(ValidationError):
    code = "wrong_edge_kind"


class WrongTier(ValidationError):
    code = "wrong_tier"


class TierViolation(ValidationError):
    code = "tier_violation"


class EmptySession(ValidationError):
    code = "empty_session"


class ParseError(ValidationError):
    code = "parse_error"


class DuplicateDoc(RGMemError):
    code = "duplicate_doc"


class DimensionMismatch(ValidationError):
    code = "dimension_mismatch"


class BackendFailure(RGMemError):
    code = "backend_failure"


class SchemaViolation(RGMemError):
    """Backend output failed its structured-output contract."""

    code = "schema_violation"

    def __init__(self, message, window=None):
        super().__init__(message)
        self.window = window


class CorruptSnapshot(RGMemError):
    code = "corrupt_snapshot"


class CorruptLog(RGMemError):
    code = "corrupt_log"


class IoFailure(RGMemError):
    code = "io_failure"
