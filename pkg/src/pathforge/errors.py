"""Exception types shared across the package.

Domain errors subclass PathforgeError so CLI/service layers can map them
to exit code 1 / HTTP error responses in one place.
"""


class PathforgeError(Exception):
    """Base class for all domain errors raised by this package."""

    code = "Error"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details


class EmptyArticle(PathforgeError):
    code = "EmptyArticle"


class EmptyText(PathforgeError):
    code = "EmptyText"


class UnknownNode(PathforgeError):
    code = "UnknownNode"


class CycleDetected(PathforgeError):
    code = "CycleDetected"


class InvalidPathway(PathforgeError):
    """Raised when an operation requires a structurally valid pathway."""

    code = "InvalidPathway"

    def __init__(self, message: str = "", violations=None, **details):
        super().__init__(message, **details)
        self.violations = list(violations or [])


class SessionConcluded(PathforgeError):
    code = "SessionConcluded"


class NothingToUndo(PathforgeError):
    code = "NothingToUndo"


class Conflict(PathforgeError):
    """Optimistic-concurrency failure: stale version supplied."""

    code = "Conflict"


class UnparseableResponse(PathforgeError):
    """Model output could not be mapped to the block/connection schema."""

    code = "UnparseableResponse"

    def __init__(self, message: str = "", offset: int = 0, **details):
        super().__init__(message, **details)
        self.offset = offset


class StructurallyInvalid(PathforgeError):
    """Parsed cleanly but the graph violates the pathway contract."""

    code = "StructurallyInvalid"

    def __init__(self, message: str = "", violations=None, **details):
        super().__init__(message, **details)
        self.violations = list(violations or [])


class ProviderUnavailable(PathforgeError):
    code = "ProviderUnavailable"


class UnsupportedVersion(PathforgeError):
    code = "UnsupportedVersion"


class MalformedDocument(PathforgeError):
    """Interchange document rejected; json_path points at the first offense."""

    code = "MalformedDocument"

    def __init__(self, message: str = "", json_path: str = "$", **details):
        super().__init__(message, **details)
        self.json_path = json_path


class DuplicateArticleId(PathforgeError):
    code = "DuplicateArticleId"


class MalformedArticle(PathforgeError):
    code = "MalformedArticle"


class UnknownArticle(PathforgeError):
    code = "UnknownArticle"


class TooLarge(PathforgeError):
    code = "TooLarge"


class MissingPathway(PathforgeError):
    code = "MissingPathway"


class UnknownSession(PathforgeError):
    code = "UnknownSession"


class UnknownTrial(PathforgeError):
    code = "UnknownTrial"


class BadRequest(PathforgeError):
    """Malformed request payload at the service boundary."""

    code = "BadRequest"


class TrialIncomplete(PathforgeError):
    code = "TrialIncomplete"


class ProtocolError(PathforgeError):
    """Blind-test protocol violation (e.g. answering an unblinded trial)."""

    code = "ProtocolError"


class ConfigError(PathforgeError):
    code = "ConfigError"
