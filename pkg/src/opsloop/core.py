"""Shared domain vocabulary: events, diagnoses, case records, feedback.

Everything here is a plain value type. Once constructed, instances are safe
to share across threads; the single exception is the feedback field on a
stored CaseRecord, whose one-time transition is serialized by the case store.

All types round-trip through a canonical structured-text serialization:
key-ordered JSON tagged with a ``schema_version`` field. The same encoding is
used for persistence files, the HTTP API, and test fixtures.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Optional

from .errors import InvalidTag, ValidationFailure

SCHEMA_VERSION = 1

# ---------------------------------------------------------------------------
# timestamps: UTC instants at millisecond precision, formatted as
# "YYYY-MM-DDTHH:MM:SS.mmmZ" everywhere.

_INSTANT_RE = re.compile(r"^(\d{4}-\d{2}-\d{2})T(\d{2}:\d{2}:\d{2})\.(\d{3})Z$")


def to_utc_ms(dt: datetime) -> datetime:
    """Coerce a datetime to UTC, truncated to millisecond precision."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    dt = dt.astimezone(timezone.utc)
    return dt.replace(microsecond=(dt.microsecond // 1000) * 1000)


def format_instant(dt: datetime) -> str:
    dt = to_utc_ms(dt)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def parse_instant(value: str) -> datetime:
    m = _INSTANT_RE.match(value)
    if not m:
        raise ValidationFailure(f"bad instant {value!r}; expected YYYY-MM-DDTHH:MM:SS.mmmZ")
    base = datetime.strptime(m.group(1) + "T" + m.group(2), "%Y-%m-%dT%H:%M:%S")
    return base.replace(microsecond=int(m.group(3)) * 1000, tzinfo=timezone.utc)


def utc_now() -> datetime:
    return to_utc_ms(datetime.now(timezone.utc))


# ---------------------------------------------------------------------------
# canonical serialization


def canonical_dumps(payload: dict) -> str:
    """Pretty key-ordered JSON document (persistence files, fixtures)."""
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def canonical_line(payload: dict) -> str:
    """Compact key-ordered JSON, one record per line (archival logs)."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_loads(text: str) -> dict:
    return json.loads(text)


# ---------------------------------------------------------------------------
# tags


_WS_HYPHEN_RUN = re.compile(r"[\s\-]+")


def normalize_tag(raw: str) -> str:
    """Canonical tag form: lowercase, trimmed, whitespace runs become one hyphen.

    Idempotent: normalizing an already-normalized tag is a no-op. Raises
    InvalidTag when nothing survives normalization.
    """
    collapsed = _WS_HYPHEN_RUN.sub("-", raw.strip().lower()).strip("-")
    if not collapsed:
        raise InvalidTag(f"tag {raw!r} is empty after normalization")
    return collapsed


# ---------------------------------------------------------------------------
# enums


class EventKind(str, Enum):
    RELEASE = "release"
    ALERT = "alert"
    INSPECTION = "inspection"


class MetricFamily(str, Enum):
    GMV = "gmv"
    CAPACITY = "capacity"
    AVAILABILITY = "availability"
    COREDUMP = "coredump"


class Verdict(str, Enum):
    PROCEED = "proceed"
    ROLLBACK = "rollback"
    SUPPRESS = "suppress"
    PAGE = "page"
    HEALTHY = "healthy"
    AT_RISK = "at_risk"


class SourceStatus(str, Enum):
    OK = "ok"
    EMPTY = "empty"
    ERROR = "error"


class FeedbackClass(str, Enum):
    CONFIRMATION = "confirmation"
    INADEQUATE_RETRIEVAL = "inadequate_retrieval"
    FLAWED_REASONING = "flawed_reasoning"
    INCORRECT_KNOWLEDGE = "incorrect_knowledge"


# ---------------------------------------------------------------------------
# operational events


@dataclass(frozen=True)
class OperationalEvent:
    """A release, alert, or inspection trigger entering the engine.

    ``business`` and ``module`` are stored in normalized tag form so that
    keyword matching against skill tags never fails on formatting.
    """

    event_id: str
    kind: EventKind
    business: str
    module: str
    timestamp: datetime
    metric_family: Optional[MetricFamily] = None
    payload: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", EventKind(self.kind))
        object.__setattr__(self, "business", normalize_tag(self.business))
        object.__setattr__(self, "module", normalize_tag(self.module))
        object.__setattr__(self, "timestamp", to_utc_ms(self.timestamp))
        if self.metric_family is not None:
            object.__setattr__(self, "metric_family", MetricFamily(self.metric_family))
        if not self.event_id:
            raise ValidationFailure("event_id must be non-empty")
        if self.kind is EventKind.ALERT and self.metric_family is None:
            raise ValidationFailure(f"alert event {self.event_id} requires a metric_family")
        if self.kind is EventKind.RELEASE and "version" not in self.payload:
            raise ValidationFailure(f"release event {self.event_id} requires payload['version']")

    def tag_set(self) -> set[str]:
        """Tags a skill can match on: business, module, kind, metric family."""
        tags = {self.business, self.module, self.kind.value}
        if self.metric_family is not None:
            tags.add(self.metric_family.value)
        return tags

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "event_id": self.event_id,
            "kind": self.kind.value,
            "business": self.business,
            "module": self.module,
            "metric_family": self.metric_family.value if self.metric_family else None,
            "timestamp": format_instant(self.timestamp),
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OperationalEvent":
        return cls(
            event_id=d["event_id"],
            kind=EventKind(d["kind"]),
            business=d["business"],
            module=d["module"],
            metric_family=MetricFamily(d["metric_family"]) if d.get("metric_family") else None,
            timestamp=parse_instant(d["timestamp"]),
            payload=dict(d.get("payload", {})),
        )


# ---------------------------------------------------------------------------
# retrieved data


@dataclass(frozen=True)
class RetrievedItem:
    source_id: str
    params_used: dict[str, Any]
    rows: tuple[dict, ...]
    status: SourceStatus

    def to_dict(self) -> dict:
        return {
            "source_id": self.source_id,
            "params_used": self.params_used,
            "rows": [dict(r) for r in self.rows],
            "status": self.status.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RetrievedItem":
        return cls(
            source_id=d["source_id"],
            params_used=dict(d["params_used"]),
            rows=tuple(dict(r) for r in d["rows"]),
            status=SourceStatus(d["status"]),
        )


@dataclass(frozen=True)
class RetrievedData:
    items: tuple[RetrievedItem, ...]
    fetch_window: tuple[datetime, datetime]

    def source_ids(self) -> set[str]:
        return {item.source_id for item in self.items}

    def to_dict(self) -> dict:
        return {
            "items": [i.to_dict() for i in self.items],
            "fetch_window": [format_instant(self.fetch_window[0]), format_instant(self.fetch_window[1])],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RetrievedData":
        return cls(
            items=tuple(RetrievedItem.from_dict(i) for i in d["items"]),
            fetch_window=(parse_instant(d["fetch_window"][0]), parse_instant(d["fetch_window"][1])),
        )

    @classmethod
    def empty(cls, window: tuple[datetime, datetime]) -> "RetrievedData":
        return cls(items=(), fetch_window=window)


# ---------------------------------------------------------------------------
# diagnosis


@dataclass(frozen=True)
class RootCause:
    module: str
    change_ref: Optional[str] = None
    description: str = ""

    def to_dict(self) -> dict:
        return {"module": self.module, "change_ref": self.change_ref, "description": self.description}

    @classmethod
    def from_dict(cls, d: dict) -> "RootCause":
        return cls(module=d["module"], change_ref=d.get("change_ref"), description=d.get("description", ""))


@dataclass(frozen=True)
class Evidence:
    source_id: str
    excerpt: str
    relevance_note: str = ""

    def to_dict(self) -> dict:
        return {"source_id": self.source_id, "excerpt": self.excerpt, "relevance_note": self.relevance_note}

    @classmethod
    def from_dict(cls, d: dict) -> "Evidence":
        return cls(source_id=d["source_id"], excerpt=d.get("excerpt", ""), relevance_note=d.get("relevance_note", ""))


@dataclass(frozen=True)
class Diagnosis:
    """Structured reasoning output: verdict, root-cause candidate, evidence, actions."""

    verdict: Verdict
    root_cause: Optional[RootCause] = None
    evidence: tuple[Evidence, ...] = ()
    actions: tuple[str, ...] = ()
    confidence: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "verdict", Verdict(self.verdict))
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationFailure(f"confidence {self.confidence} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "root_cause": self.root_cause.to_dict() if self.root_cause else None,
            "evidence": [e.to_dict() for e in self.evidence],
            "actions": list(self.actions),
            "confidence": self.confidence,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Diagnosis":
        return cls(
            verdict=Verdict(d["verdict"]),
            root_cause=RootCause.from_dict(d["root_cause"]) if d.get("root_cause") else None,
            evidence=tuple(Evidence.from_dict(e) for e in d.get("evidence", [])),
            actions=tuple(d.get("actions", [])),
            confidence=d.get("confidence", 0.5),
        )


# ---------------------------------------------------------------------------
# feedback


@dataclass
class Feedback:
    """Practitioner feedback on one case. Classification is filled exactly
    once by the feedback router."""

    feedback_id: str
    case_id: str
    author: str
    text: str
    submitted_at: datetime
    resolved_classification: Optional[FeedbackClass] = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValidationFailure("feedback text must be non-empty")
        self.submitted_at = to_utc_ms(self.submitted_at)
        if self.resolved_classification is not None:
            self.resolved_classification = FeedbackClass(self.resolved_classification)

    def resolve(self, classification: FeedbackClass) -> None:
        if self.resolved_classification is not None:
            raise ValidationFailure(f"feedback {self.feedback_id} already classified")
        self.resolved_classification = FeedbackClass(classification)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "feedback_id": self.feedback_id,
            "case_id": self.case_id,
            "author": self.author,
            "text": self.text,
            "submitted_at": format_instant(self.submitted_at),
            "resolved_classification": (
                self.resolved_classification.value if self.resolved_classification else None
            ),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Feedback":
        return cls(
            feedback_id=d["feedback_id"],
            case_id=d["case_id"],
            author=d["author"],
            text=d["text"],
            submitted_at=parse_instant(d["submitted_at"]),
            resolved_classification=(
                FeedbackClass(d["resolved_classification"]) if d.get("resolved_classification") else None
            ),
        )


# ---------------------------------------------------------------------------
# knowledge snapshot carried on a case record


@dataclass(frozen=True)
class KnowledgeSnapshot:
    entry_id: str
    kind: str
    text: str

    def to_dict(self) -> dict:
        return {"entry_id": self.entry_id, "kind": self.kind, "text": self.text}

    @classmethod
    def from_dict(cls, d: dict) -> "KnowledgeSnapshot":
        return cls(entry_id=d["entry_id"], kind=d["kind"], text=d["text"])


# ---------------------------------------------------------------------------
# case record


@dataclass
class CaseRecord:
    """Full execution trace for one event: the unit of memory.

    Immutable once written except the feedback field, which transitions from
    absent to present exactly once (the case store enforces the transition).
    ``markers`` carries pipeline annotations such as degraded-mode flags;
    ``correction_of`` links a knowledge-correction case to the case it amends.
    """

    case_id: str
    event: OperationalEvent
    skill_ids: tuple[tuple[str, int], ...]
    retrieved_data: RetrievedData
    retrieved_knowledge: tuple[KnowledgeSnapshot, ...]
    diagnosis: Diagnosis
    created_at: datetime
    feedback: Optional[Feedback] = None
    markers: tuple[str, ...] = ()
    correction_of: Optional[str] = None

    def __post_init__(self) -> None:
        self.created_at = to_utc_ms(self.created_at)
        self.skill_ids = tuple((str(s), int(v)) for s, v in self.skill_ids)
        bad = [e.source_id for e in self.diagnosis.evidence if e.source_id not in self.retrieved_data.source_ids()]
        if bad:
            raise ValidationFailure(f"diagnosis evidence references unretrieved sources: {bad}")

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "case_id": self.case_id,
            "event": self.event.to_dict(),
            "skill_ids": [[s, v] for s, v in self.skill_ids],
            "retrieved_data": self.retrieved_data.to_dict(),
            "retrieved_knowledge": [k.to_dict() for k in self.retrieved_knowledge],
            "diagnosis": self.diagnosis.to_dict(),
            "feedback": self.feedback.to_dict() if self.feedback else None,
            "created_at": format_instant(self.created_at),
            "markers": list(self.markers),
            "correction_of": self.correction_of,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CaseRecord":
        return cls(
            case_id=d["case_id"],
            event=OperationalEvent.from_dict(d["event"]),
            skill_ids=tuple((s, v) for s, v in d.get("skill_ids", [])),
            retrieved_data=RetrievedData.from_dict(d["retrieved_data"]),
            retrieved_knowledge=tuple(KnowledgeSnapshot.from_dict(k) for k in d.get("retrieved_knowledge", [])),
            diagnosis=Diagnosis.from_dict(d["diagnosis"]),
            feedback=Feedback.from_dict(d["feedback"]) if d.get("feedback") else None,
            created_at=parse_instant(d["created_at"]),
            markers=tuple(d.get("markers", [])),
            correction_of=d.get("correction_of"),
        )
