"""Skill generation and update: reasoner-driven synthesis with execution-based
validation and bounded retry.

Generation runs when no skill matches an event: the reasoner drafts a
candidate from the source registry plus a capability descriptor, the draft is
validated by actually executing its LoadDataSchema, and validation errors are
fed back for regeneration — one initial call plus up to three retries.
Updates revise exactly one component (schema or prompt) from natural-language
feedback under the same validate-and-retry loop, capped at three iterations.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path
from typing import Optional

from .core import OperationalEvent, canonical_dumps
from .dataplane import SignalSimulator
from .errors import EmbedError, NotFound, OpsLoopError, ParamError, StaleVersion, UnknownSource, ValidationFailure
from .knowledge import KnowledgeBase
from .reasoner import ReasonerRequest, RequestKind, Sampling
from .skills import KnowledgeQuery, Skill, SkillPool, SourceCall

logger = logging.getLogger(__name__)

GENERATE_MAX_CALLS = 4  # 1 initial attempt + 3 retries
UPDATE_MAX_CALLS = 3


class PlaceholderError(OpsLoopError):
    """A `{event.*}` placeholder could not be resolved from the event."""


def resolve_placeholder(value: str, event: OperationalEvent) -> str:
    """Substitute `{event.*}` placeholders in a string."""
    out = value
    while "{event." in out:
        start = out.index("{event.")
        end = out.index("}", start)
        path = out[start + 7 : end]
        if path == "business":
            repl = event.business
        elif path == "module":
            repl = event.module
        elif path == "kind":
            repl = event.kind.value
        elif path == "event_id":
            repl = event.event_id
        elif path == "metric_family":
            if event.metric_family is None:
                raise PlaceholderError(f"event {event.event_id} has no metric_family")
            repl = event.metric_family.value
        elif path.startswith("payload."):
            key = path[len("payload.") :]
            if key not in event.payload:
                raise PlaceholderError(f"event payload has no key {key!r}")
            repl = str(event.payload[key])
        else:
            raise PlaceholderError(f"unknown placeholder {{event.{path}}}")
        out = out[:start] + repl + out[end + 1 :]
    return out


def resolve_params(params: dict, event: OperationalEvent) -> dict:
    return {k: resolve_placeholder(v, event) if isinstance(v, str) else v for k, v in params.items()}


def resolve_window(call: SourceCall, event: OperationalEvent):
    before = int(call.window.get("minutes_before", 30))
    after = int(call.window.get("minutes_after", 0))
    return (event.timestamp - timedelta(minutes=before), event.timestamp + timedelta(minutes=after))


@dataclass(frozen=True)
class CapabilityDescriptor:
    """Seed input for generation: which sources matter for a scenario and how
    they relate."""

    business: str
    module: str
    kind: str
    metric_family: Optional[str] = None
    relevant_sources: tuple[dict, ...] = ()  # {"source_id", "rationale"}
    relevant_knowledge: tuple[str, ...] = ()
    relationships: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "scenario": {
                "business": self.business,
                "module": self.module,
                "kind": self.kind,
                "metric_family": self.metric_family,
            },
            "relevant_sources": [dict(s) for s in self.relevant_sources],
            "relevant_knowledge": list(self.relevant_knowledge),
            "relationships": list(self.relationships),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CapabilityDescriptor":
        scenario = d.get("scenario", {})
        return cls(
            business=scenario.get("business", ""),
            module=scenario.get("module", ""),
            kind=scenario.get("kind", "alert"),
            metric_family=scenario.get("metric_family"),
            relevant_sources=tuple(d.get("relevant_sources", [])),
            relevant_knowledge=tuple(d.get("relevant_knowledge", [])),
            relationships=tuple(d.get("relationships", [])),
        )

    def validate_sources(self, simulator: SignalSimulator) -> None:
        known = {d.source_id for d in simulator.descriptors()}
        unknown = [s["source_id"] for s in self.relevant_sources if s["source_id"] not in known]
        if unknown:
            raise ValidationFailure(f"capability names unregistered sources: {unknown}")


def load_capability(directory, event: OperationalEvent) -> Optional[CapabilityDescriptor]:
    """Capability documents are keyed by (business, module, kind). Missing
    document means degraded-seed generation with the registry only."""
    if directory is None:
        return None
    path = Path(directory) / f"{event.business}--{event.module}--{event.kind.value}.json"
    if not path.exists():
        return None
    with open(path, "r", encoding="utf-8") as fh:
        return CapabilityDescriptor.from_dict(json.load(fh))


@dataclass
class CallCheck:
    call_id: str
    status: str  # ok | empty | error
    mandatory: bool
    missing_fields: list[str] = field(default_factory=list)
    error: str = ""

    def to_dict(self) -> dict:
        return {
            "call_id": self.call_id,
            "status": self.status,
            "mandatory": self.mandatory,
            "missing_fields": self.missing_fields,
            "error": self.error,
        }


@dataclass
class ValidationReport:
    attempted_skill: Skill
    results: list[CallCheck]
    verdict: str  # valid | invalid
    error_summary: str

    def to_dict(self) -> dict:
        return {
            "attempted_skill": self.attempted_skill.to_dict(),
            "results": [r.to_dict() for r in self.results],
            "verdict": self.verdict,
            "error_summary": self.error_summary,
        }


class GenerationFailure(OpsLoopError):
    def __init__(self, message: str, reports: list[ValidationReport]):
        super().__init__(message)
        self.reports = reports


class UpdateFailure(OpsLoopError):
    def __init__(self, message: str, reports: list[ValidationReport]):
        super().__init__(message)
        self.reports = reports


class SkillLifecycle:
    """Generation/update engine. Operations on the same skill_id are mutually
    exclusive; distinct ids may proceed concurrently."""

    def __init__(
        self,
        pool: SkillPool,
        simulator: SignalSimulator,
        knowledge: KnowledgeBase,
        reasoner,
        capabilities_dir: Optional[str] = None,
        transcripts_dir: Optional[str] = None,
    ):
        self.pool = pool
        self.simulator = simulator
        self.knowledge = knowledge
        self.reasoner = reasoner
        self.capabilities_dir = capabilities_dir
        self.transcripts_dir = Path(transcripts_dir) if transcripts_dir else None
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock_for(self, skill_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(skill_id, threading.Lock())

    # -- validation ---------------------------------------------------------

    def validate(self, skill: Skill, event: OperationalEvent) -> ValidationReport:
        """Execute the skill's LoadDataSchema against the triggering event.

        Read-only: data queries hit the simulator and knowledge queries use
        the non-counting view, so no store state changes.
        """
        results: list[CallCheck] = []
        for call in skill.load_data_schema.source_calls:
            check = CallCheck(call_id=call.source_id, status="ok", mandatory=call.mandatory)
            try:
                params = resolve_params(call.params, event)
                window = resolve_window(call, event)
                descriptor = self.simulator.descriptor(call.source_id)
                result = self.simulator.query_source(call.source_id, params, window)
                check.status = result.status
                check.missing_fields = [f for f in call.expected_fields if f not in descriptor.field_schema]
                if check.missing_fields and check.status == "ok":
                    check.status = "error"
                    check.error = f"missing expected fields {check.missing_fields}"
            except (PlaceholderError, UnknownSource, ParamError) as exc:
                check.status = "error"
                check.error = str(exc)
            results.append(check)

        for i, query in enumerate(skill.load_data_schema.knowledge_queries):
            check = CallCheck(call_id=f"knowledge:{query.index}#{i}", status="ok", mandatory=query.mandatory)
            try:
                self._run_knowledge_query(query, event, count_hits=False)
            except (PlaceholderError, ParamError, ValidationFailure, KeyError, EmbedError) as exc:
                check.status = "error"
                check.error = str(exc)
            results.append(check)

        failures = []
        for r in results:
            if not r.mandatory:
                continue
            # mandatory data calls must come back ok; mandatory knowledge
            # queries fail only on index errors (empty results are fine)
            if r.call_id.startswith("knowledge:"):
                if r.status == "error":
                    failures.append(r)
            elif r.status != "ok":
                failures.append(r)
        verdict = "invalid" if failures else "valid"
        summary = "; ".join(f"{r.call_id}: {r.error or r.status}" for r in failures)
        return ValidationReport(attempted_skill=skill, results=results, verdict=verdict, error_summary=summary)

    def _run_knowledge_query(self, query: KnowledgeQuery, event: OperationalEvent, count_hits: bool):
        if query.index == "kv":
            parts = {k: resolve_placeholder(str(v), event) for k, v in query.key_parts.items()}
            return self.knowledge.query_kv(parts["business"], parts["scenario"], count_hits=count_hits)
        if query.index == "kkv":
            parts = {k: resolve_placeholder(str(v), event) for k, v in query.key_parts.items()}
            return self.knowledge.query_kkv(parts["subject"], parts["object"], parts["metric"], count_hits=count_hits)
        text = resolve_placeholder(query.query_text, event)
        return [e for e, _ in self.knowledge.query_vector(text, query.top_k, count_hits=count_hits)]

    # -- generation -----------------------------------------------------------

    def reference_skills(self, event: OperationalEvent, limit: int = 2) -> list[Skill]:
        """Related-scenario skills passed as references for cross-scenario
        transfer; exact-scenario matches are excluded (they would have
        matched the event already)."""
        scenario_tags = event.tag_set()
        required = {event.business, event.module}
        candidates = [s for s in self.pool.heads() if not required <= set(s.meta.tags)]
        candidates.sort(key=lambda s: (-len(set(s.meta.tags) & scenario_tags), s.meta.skill_id))
        return candidates[:limit]

    def _fresh_skill_id(self, skill_id: str) -> str:
        if self.pool.latest_version(skill_id) is None:
            return skill_id
        n = 2
        while self.pool.latest_version(f"{skill_id}-g{n}") is not None:
            n += 1
        return f"{skill_id}-g{n}"

    def generate(
        self,
        event: OperationalEvent,
        *,
        case_ref: str = "",
        temperature: float = 0.0,
        seed: int = 0,
    ) -> Skill:
        """Synthesize, validate, and store a new skill for an unmatched event.

        Raises GenerationFailure with all validation reports after the retry
        budget is exhausted; reasoner transport failures propagate without
        consuming a retry.
        """
        capability = load_capability(self.capabilities_dir, event)
        if capability is None:
            logger.info("degraded-seed generation for %s/%s: no capability descriptor", event.business, event.module)
            capability = CapabilityDescriptor(business=event.business, module=event.module, kind=event.kind.value)
        references = self.reference_skills(event)
        sources = [d.to_dict() for d in self.simulator.descriptors()]
        reports: list[ValidationReport] = []
        error_summaries: list[str] = []
        ref = case_ref or event.event_id

        for attempt in range(1, GENERATE_MAX_CALLS + 1):
            context = {
                "event": event.to_dict(),
                "sources": sources,
                "capability": capability.to_dict(),
                "references": [s.to_dict() for s in references],
                "error_summaries": list(error_summaries),
            }
            request = ReasonerRequest(
                kind=RequestKind.GENERATE_SKILL,
                context=context,
                sampling=Sampling(temperature=temperature, seed=seed, attempt_index=attempt, case_ref=ref),
            )
            response = self.reasoner.call(request)
            try:
                candidate = Skill.from_dict(response.payload["skill"]).with_version(1)
            except (KeyError, ValidationFailure, TypeError) as exc:
                report = ValidationReport(
                    attempted_skill=_fallback_skill(event),
                    results=[CallCheck(call_id="candidate", status="error", mandatory=True, error=str(exc))],
                    verdict="invalid",
                    error_summary=f"candidate unparseable: {exc}",
                )
                reports.append(report)
                error_summaries.append(report.error_summary)
                self._note_validation(ref, "generate_skill", attempt, report)
                continue

            report = self.validate(candidate, event)
            reports.append(report)
            self._note_validation(ref, "generate_skill", attempt, report)
            if report.verdict == "valid":
                skill_id = self._fresh_skill_id(candidate.meta.skill_id)
                if skill_id != candidate.meta.skill_id:
                    doc = candidate.to_dict()
                    doc["meta"]["skill_id"] = skill_id
                    candidate = Skill.from_dict(doc)
                with self._lock_for(skill_id):
                    self.pool.put(candidate)
                self._write_transcript(ref, "generate", reports)
                return candidate
            error_summaries.append(report.error_summary)

        self._write_transcript(ref, "generate", reports)
        raise GenerationFailure(
            f"generation for {event.event_id} failed after {GENERATE_MAX_CALLS} attempts", reports
        )

    # -- update --------------------------------------------------------------

    def update(
        self,
        skill_id: str,
        feedback_text: str,
        target: str,
        event: OperationalEvent,
        *,
        case_ref: str = "",
        temperature: float = 0.0,
        seed: int = 0,
    ) -> Skill:
        """Revise one component of a skill from natural-language feedback.

        The non-targeted component must come back byte-identical; a violation
        consumes an iteration. At most three reasoner calls, then
        UpdateFailure with all reports.
        """
        if target not in ("load_data_schema", "prompt"):
            raise ValidationFailure(f"unknown update target {target!r}")
        untouched = "prompt" if target == "load_data_schema" else "load_data_schema"
        reports: list[ValidationReport] = []
        error_summaries: list[str] = []
        ref = case_ref or skill_id

        with self._lock_for(skill_id):
            current = self.pool.get(skill_id)  # NotFound propagates
            for attempt in range(1, UPDATE_MAX_CALLS + 1):
                context = {
                    "skill": current.to_dict(),
                    "feedback": feedback_text,
                    "target": target,
                    "event": event.to_dict(),
                    "error_summaries": list(error_summaries),
                }
                request = ReasonerRequest(
                    kind=RequestKind.UPDATE_SKILL,
                    context=context,
                    sampling=Sampling(temperature=temperature, seed=seed, attempt_index=attempt, case_ref=ref),
                )
                response = self.reasoner.call(request)
                try:
                    candidate = Skill.from_dict(response.payload["skill"]).with_version(current.meta.version + 1)
                except (KeyError, ValidationFailure, TypeError) as exc:
                    report = ValidationReport(
                        attempted_skill=current,
                        results=[CallCheck(call_id="candidate", status="error", mandatory=True, error=str(exc))],
                        verdict="invalid",
                        error_summary=f"candidate unparseable: {exc}",
                    )
                    reports.append(report)
                    error_summaries.append(report.error_summary)
                    self._note_validation(ref, "update_skill", attempt, report)
                    continue

                if candidate.component_bytes(untouched) != current.component_bytes(untouched):
                    report = ValidationReport(
                        attempted_skill=candidate,
                        results=[
                            CallCheck(
                                call_id=untouched,
                                status="error",
                                mandatory=True,
                                error="non-targeted component modified",
                            )
                        ],
                        verdict="invalid",
                        error_summary="non-targeted component modified",
                    )
                    reports.append(report)
                    error_summaries.append(report.error_summary)
                    self._note_validation(ref, "update_skill", attempt, report)
                    continue

                report = self.validate(candidate, event)
                reports.append(report)
                self._note_validation(ref, "update_skill", attempt, report)
                if report.verdict == "valid":
                    try:
                        self.pool.put(candidate)
                    except StaleVersion:
                        head = self.pool.get(skill_id)
                        candidate = candidate.with_version(head.meta.version + 1)
                        self.pool.put(candidate)
                    self._write_transcript(ref, "update", reports)
                    return candidate
                error_summaries.append(report.error_summary)

        self._write_transcript(ref, "update", reports)
        raise UpdateFailure(f"update of {skill_id} failed after {UPDATE_MAX_CALLS} iterations", reports)

    # -- audit ----------------------------------------------------------------

    def _note_validation(self, case_ref: str, op: str, attempt: int, report: ValidationReport) -> None:
        if hasattr(self.reasoner, "note"):
            self.reasoner.note(
                f"{op}:validation",
                case_ref,
                {"attempt": attempt, "verdict": report.verdict, "error_summary": report.error_summary},
            )

    def _write_transcript(self, ref: str, op: str, reports: list[ValidationReport]) -> None:
        if not self.transcripts_dir:
            return
        self.transcripts_dir.mkdir(parents=True, exist_ok=True)
        safe_ref = ref.replace("/", "_").replace(":", "_")
        path = self.transcripts_dir / f"{op}-{safe_ref}.json"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(canonical_dumps({"op": op, "ref": ref, "reports": [r.to_dict() for r in reports]}))


def _fallback_skill(event: OperationalEvent) -> Skill:
    """Minimal placeholder recorded when a candidate cannot even be parsed."""
    from .skills import LoadDataSchema, PromptTemplate, SkillMeta

    return Skill(
        meta=SkillMeta(
            skill_id=f"unparseable-{event.event_id}",
            name="unparseable candidate",
            version=1,
            description="placeholder for an unparseable reasoner candidate",
            tags=(event.business, event.module),
        ),
        load_data_schema=LoadDataSchema(
            source_calls=(SourceCall(source_id="none", mandatory=False, expected_fields=()),)
        ),
        prompt=PromptTemplate(steps=("n/a",)),
    )
