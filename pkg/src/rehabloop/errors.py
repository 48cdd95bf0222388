"""Exception types shared across the middleware.

Decode and stream-processing errors never abort the process: connection
handlers catch them, count them, and keep the session alive.
"""


class RehabLoopError(Exception):
    """Base class for all middleware errors."""


# --- wire ---

class MalformedJson(RehabLoopError):
    """Input is not a parseable JSON text."""


class UnknownType(RehabLoopError):
    """Envelope carries a msg_type the protocol does not define."""


class SchemaViolation(RehabLoopError):
    """Envelope payload does not match its msg_type schema."""

    def __init__(self, field: str, reason: str = "invalid"):
        self.field = field
        super().__init__(f"{field}: {reason}")


class ProtocolViolation(RehabLoopError):
    """Message arrived in a connection phase that does not allow it."""


# --- ingest ---

class WrongStream(RehabLoopError):
    """Envelope msg_type does not match the session's device stream."""


class StaleTimestamp(RehabLoopError):
    """Device timestamp regressed beyond tolerance."""


class NonPositiveInterval(RehabLoopError):
    """RR interval must be a positive number of 1/1024 s units."""


# --- affect ---

class InvalidDistribution(RehabLoopError):
    """Probability vector does not sum to 1 within tolerance."""


class EmptyWindow(RehabLoopError):
    """Operation requires a non-empty affect window."""


# --- fusion ---

class TooFewIntervals(RehabLoopError):
    """HRV metrics need at least two RR intervals."""


class TooFewSamples(RehabLoopError):
    """Motion smoothness needs at least three samples."""


class NoUsableData(RehabLoopError):
    """Every input stream is stale or absent."""


# --- cam / ipm ---

class BoundaryViolation(RehabLoopError):
    """Directive crosses the reasoning/execution boundary."""

    def __init__(self, field: str, reason: str = "not allowed"):
        self.field = field
        super().__init__(f"{field}: {reason}")


class EmptyCategory(RehabLoopError):
    """No exercise in the catalog matches the requested category."""


class InfeasibleQuota(RehabLoopError):
    """No sequence can satisfy the plan quotas under the catalog."""


# --- iam ---

class InvalidOverride(RehabLoopError):
    """Override command carries an out-of-range or out-of-order value."""


class NoActiveSession(RehabLoopError):
    """Command requires a live session."""


class StorageFull(RehabLoopError):
    """Persistence layer cannot append; live operation continues."""


# --- simkit ---

class CorruptLog(RehabLoopError):
    """A session log line failed to parse."""

    def __init__(self, path: str, line_no: int, reason: str):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {reason}")
