"""Feedback classification and dual-pathway dispatch.

One practitioner signal drives two independent learning pathways: the memory
pathway (case write + knowledge distillation, or knowledge correction) and
the skill pathway (schema or prompt revision). A failure on one pathway never
aborts the other.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Optional

from .core import CaseRecord, Feedback, FeedbackClass
from .errors import Conflict, NotFound, ReasonerUnavailable
from .lifecycle import SkillLifecycle, UpdateFailure
from .memory import CaseMemory
from .reasoner import ReasonerRequest, RequestKind, Sampling

logger = logging.getLogger(__name__)

# classification -> exact action set (table-driven; see route())
ACTION_MAP: dict[FeedbackClass, tuple[str, ...]] = {
    FeedbackClass.CONFIRMATION: ("memory_write", "knowledge_distill"),
    FeedbackClass.INADEQUATE_RETRIEVAL: ("memory_write", "knowledge_distill", "skill_update_schema"),
    FeedbackClass.FLAWED_REASONING: ("memory_write", "knowledge_distill", "skill_update_prompt"),
    FeedbackClass.INCORRECT_KNOWLEDGE: ("memory_write", "knowledge_correction"),
}

_EXECUTION_ORDER = (
    "memory_write",
    "knowledge_distill",
    "knowledge_correction",
    "skill_update_schema",
    "skill_update_prompt",
)


@dataclass(frozen=True)
class RoutingDecision:
    classification: FeedbackClass
    actions: tuple[str, ...]
    target_skill_id: Optional[str] = None
    degraded: bool = False
    correction_hints: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "classification": self.classification.value,
            "actions": list(self.actions),
            "target_skill_id": self.target_skill_id,
            "degraded": self.degraded,
        }


@dataclass
class ActionOutcome:
    action: str
    status: str  # ok | failed | skipped
    detail: str = ""
    skill_id: Optional[str] = None
    skill_version: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "status": self.status,
            "detail": self.detail,
            "skill_id": self.skill_id,
            "skill_version": self.skill_version,
        }


@dataclass
class ExecutionReport:
    feedback_id: str
    outcomes: list[ActionOutcome]

    def outcome_for(self, action: str) -> Optional[ActionOutcome]:
        for o in self.outcomes:
            if o.action == action:
                return o
        return None

    def to_dict(self) -> dict:
        return {"feedback_id": self.feedback_id, "outcomes": [o.to_dict() for o in self.outcomes]}


class FeedbackRouter:
    """Classifies feedback via the reasoner and executes the mapped actions."""

    def __init__(self, memory: CaseMemory, lifecycle: SkillLifecycle, reasoner, seed: int = 0):
        self.memory = memory
        self.lifecycle = lifecycle
        self.reasoner = reasoner
        self.seed = seed
        self._executed: set[str] = set()
        self._lock = threading.Lock()

    def route(self, case: CaseRecord, feedback: Feedback, *, case_ref: str = "") -> RoutingDecision:
        """Classify the feedback and map it to its fixed action set.

        Reasoner failure degrades to ``confirmation`` (memory still learns,
        no skill is touched) rather than risking a spurious skill rewrite.
        """
        if case.feedback is not None and case.feedback.feedback_id != feedback.feedback_id:
            raise Conflict(f"case {case.case_id} already has feedback {case.feedback.feedback_id}")
        context = {
            "feedback": feedback.text,
            "case": {
                "case_id": case.case_id,
                "event": case.event.to_dict(),
                "skill_ids": [list(p) for p in case.skill_ids],
                "verdict": case.diagnosis.verdict.value,
                "markers": list(case.markers),
                "knowledge_entry_ids": [s.entry_id for s in case.retrieved_knowledge],
            },
        }
        degraded = False
        payload: dict = {}
        try:
            response = self.reasoner.call(
                ReasonerRequest(
                    kind=RequestKind.CLASSIFY_FEEDBACK,
                    context=context,
                    sampling=Sampling(seed=self.seed, attempt_index=1, case_ref=case_ref or case.case_id),
                )
            )
            payload = response.payload
            classification = FeedbackClass(payload["classification"])
        except ReasonerUnavailable:
            logger.warning("feedback %s: reasoner unavailable, degrading to confirmation", feedback.feedback_id)
            classification = FeedbackClass.CONFIRMATION
            degraded = True

        actions = ACTION_MAP[classification]
        target: Optional[str] = None
        if any(a.startswith("skill_update") for a in actions):
            declared = payload.get("target_skill_id")
            case_skill_ids = [sid for sid, _ in case.skill_ids]
            if declared and declared in case_skill_ids:
                target = declared
            elif case_skill_ids:
                # skills are recorded in match-score order; first is best
                target = case_skill_ids[0]
        hints = {
            "statement": payload.get("corrected_statement") or feedback.text,
            "contradicted_entry_ids": payload.get("contradicted_entry_ids")
            or [s.entry_id for s in case.retrieved_knowledge],
        }
        feedback.resolve(classification)
        return RoutingDecision(
            classification=classification,
            actions=actions,
            target_skill_id=target,
            degraded=degraded,
            correction_hints=hints,
        )

    def execute(self, decision: RoutingDecision, case: CaseRecord, feedback: Feedback) -> ExecutionReport:
        """Run every mapped action, isolating failures per pathway.

        Idempotency: a feedback_id executes at most once; replays raise
        Conflict.
        """
        with self._lock:
            if feedback.feedback_id in self._executed:
                raise Conflict(f"feedback {feedback.feedback_id} already executed")
            self._executed.add(feedback.feedback_id)

        outcomes: list[ActionOutcome] = []
        stored_case = case
        for action in _EXECUTION_ORDER:
            if action not in decision.actions:
                continue
            if action == "memory_write":
                outcomes.append(self._do_memory_write(case, feedback))
                try:
                    stored_case = self.memory.get(case.case_id)
                except NotFound:
                    stored_case = case
            elif action == "knowledge_distill":
                outcomes.append(self._do_distill(stored_case))
            elif action == "knowledge_correction":
                outcomes.append(self._do_correction(case, decision))
            else:
                outcomes.append(self._do_skill_update(action, decision, case, feedback))
        return ExecutionReport(feedback_id=feedback.feedback_id, outcomes=outcomes)

    # -- individual actions -------------------------------------------------

    def _do_memory_write(self, case: CaseRecord, feedback: Feedback) -> ActionOutcome:
        try:
            self.memory.attach_feedback(case.case_id, feedback)
            return ActionOutcome(action="memory_write", status="ok", detail=f"feedback attached to {case.case_id}")
        except NotFound:
            try:
                case.feedback = feedback
                self.memory.write_case(case)
                return ActionOutcome(action="memory_write", status="ok", detail=f"case {case.case_id} written")
            except Exception as exc:  # pragma: no cover - defensive
                return ActionOutcome(action="memory_write", status="failed", detail=str(exc))
        except Conflict as exc:
            return ActionOutcome(action="memory_write", status="failed", detail=str(exc))

    def _do_distill(self, case: CaseRecord) -> ActionOutcome:
        try:
            ids = self.memory.distill(case, seed=self.seed)
            return ActionOutcome(action="knowledge_distill", status="ok", detail=f"{len(ids)} entries")
        except Exception as exc:
            return ActionOutcome(action="knowledge_distill", status="failed", detail=str(exc))

    def _do_correction(self, case: CaseRecord, decision: RoutingDecision) -> ActionOutcome:
        try:
            correction = self.memory.apply_correction(case.case_id, decision.correction_hints)
            return ActionOutcome(action="knowledge_correction", status="ok", detail=f"correction case {correction.case_id}")
        except Exception as exc:
            return ActionOutcome(action="knowledge_correction", status="failed", detail=str(exc))

    def _do_skill_update(
        self, action: str, decision: RoutingDecision, case: CaseRecord, feedback: Feedback
    ) -> ActionOutcome:
        target_component = "load_data_schema" if action == "skill_update_schema" else "prompt"
        if decision.target_skill_id is None:
            return ActionOutcome(action=action, status="failed", detail="no skill recorded on case to update")
        try:
            updated = self.lifecycle.update(
                decision.target_skill_id,
                feedback.text,
                target_component,
                case.event,
                case_ref=case.case_id,
                seed=self.seed,
            )
            return ActionOutcome(
                action=action,
                status="ok",
                detail=f"{updated.meta.skill_id} v{updated.meta.version}",
                skill_id=updated.meta.skill_id,
                skill_version=updated.meta.version,
            )
        except UpdateFailure as exc:
            return ActionOutcome(action=action, status="failed", detail=str(exc))
        except NotFound as exc:
            return ActionOutcome(action=action, status="failed", detail=str(exc))
