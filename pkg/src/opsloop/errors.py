"""Exception taxonomy shared across the engine.

Every domain error maps onto one gateway ApiError code (see gateway module);
anything not listed here surfaces as ``internal``.
"""


class OpsLoopError(Exception):
    """Base class for all engine errors."""


class InvalidTag(OpsLoopError):
    """A business/module/tag string normalized to the empty string."""


class ValidationFailure(OpsLoopError):
    """A domain object violates one of its declared invariants."""


class RegistryConflict(OpsLoopError):
    """Attempt to register a data source id that already exists."""


class UnknownSource(OpsLoopError):
    """Query addressed to a source id absent from the registry."""


class ParamError(OpsLoopError):
    """Source query parameters do not satisfy the source's param schema."""


class SpecError(OpsLoopError):
    """A scenario spec (or drift schedule) is internally inconsistent."""


class StaleVersion(OpsLoopError):
    """Skill put with a version that does not follow the stored head."""


class SeedError(OpsLoopError):
    """A seed document (skill or knowledge entry) failed to load."""

    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)
        self.reason = reason


class NotFound(OpsLoopError):
    """Lookup by id found nothing."""


class Conflict(OpsLoopError):
    """Write rejected because it would violate an exactly-once rule."""


class EmbedError(OpsLoopError):
    """Embedding requested for unusable text (empty after tokenization)."""


class ReasonerUnavailable(OpsLoopError):
    """Transport-level reasoner failure (timeout, connection refused)."""


class ReasonerProtocolError(OpsLoopError):
    """Reasoner backend answered with a payload we cannot parse."""

    def __init__(self, message, raw=None):
        super().__init__(message)
        self.raw = raw


class CompositionError(OpsLoopError):
    """Prompt composition hit a placeholder it cannot resolve."""


class DatasetError(OpsLoopError):
    """Eval dataset is malformed or inconsistent with its scenario."""


class ScriptError(OpsLoopError):
    """Correction or mock script is missing a required entry."""


class DomainError(OpsLoopError):
    """Numeric input outside the documented domain."""
