"""Short-term case memory: rolling store, working-memory retrieval, and the
distillation trigger into the knowledge base.

Every written case is appended to an archival log (when configured) before
window eviction applies, so full-run history survives; "memory" semantics
only govern working-memory eligibility.
"""

from __future__ import annotations

import bisect
import logging
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Callable, Optional

from .core import CaseRecord, Feedback, KnowledgeSnapshot, OperationalEvent, canonical_line, utc_now
from .errors import Conflict, NotFound, ReasonerUnavailable
from .knowledge import KnowledgeBase, KnowledgeEntry
from .reasoner import ReasonerRequest, RequestKind, Sampling

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MemoryConfig:
    window_cases: int = 500
    window_days: int = 7
    working_memory_k: int = 5

    def __post_init__(self) -> None:
        if self.window_cases < 1 or self.window_days < 1 or self.working_memory_k < 1:
            raise ValueError("memory config values must be positive")


def working_memory_score(event: OperationalEvent, case: CaseRecord) -> int:
    """3-bit relevance: business match outranks module match outranks kind."""
    score = 0
    if case.event.business == event.business:
        score |= 4
    if case.event.module == event.module:
        score |= 2
    if case.event.kind == event.kind:
        score |= 1
    return score


class CaseMemory:
    """Append-serialized rolling case store with snapshot-consistent reads."""

    def __init__(
        self,
        config: MemoryConfig = MemoryConfig(),
        knowledge: Optional[KnowledgeBase] = None,
        reasoner=None,
        archive_path: Optional[str] = None,
        clock: Callable[[], datetime] = utc_now,
    ):
        self.config = config
        self.knowledge = knowledge
        self.reasoner = reasoner
        self.archive_path = archive_path
        self.clock = clock
        self._lock = threading.RLock()
        self._cases: dict[str, CaseRecord] = {}
        self._order: list[tuple[str, str]] = []  # (created_at iso, case_id), oldest first
        self._seen_ids: set[str] = set()
        self.evicted_count = 0

    # -- writes --------------------------------------------------------------

    def write_case(self, case: CaseRecord) -> str:
        with self._lock:
            if case.case_id in self._seen_ids:
                raise Conflict(f"case {case.case_id} already written")
            self._seen_ids.add(case.case_id)
            self._cases[case.case_id] = case
            bisect.insort(self._order, (case.created_at.isoformat(), case.case_id))
            self._archive(case)
            self._evict(case.created_at)
        return case.case_id

    def _archive(self, case: CaseRecord) -> None:
        if not self.archive_path:
            return
        with open(self.archive_path, "a", encoding="utf-8") as fh:
            fh.write(canonical_line(case.to_dict()) + "\n")

    def _evict(self, now: datetime) -> None:
        horizon = (now - timedelta(days=self.config.window_days)).isoformat()
        while self._order and (len(self._order) > self.config.window_cases or self._order[0][0] < horizon):
            _, case_id = self._order.pop(0)
            del self._cases[case_id]
            self.evicted_count += 1

    def attach_feedback(self, case_id: str, feedback: Feedback) -> CaseRecord:
        """The single allowed mutation of a stored case: absent -> present."""
        with self._lock:
            case = self._cases.get(case_id)
            if case is None:
                raise NotFound(f"case {case_id} not in memory")
            if case.feedback is not None:
                raise Conflict(f"case {case_id} already has feedback")
            case.feedback = feedback
            self._archive(case)
            return case

    # -- reads ---------------------------------------------------------------

    def get(self, case_id: str) -> CaseRecord:
        with self._lock:
            case = self._cases.get(case_id)
            if case is None:
                raise NotFound(f"case {case_id} not in memory")
            return case

    def size(self) -> int:
        with self._lock:
            return len(self._cases)

    def list_cases(
        self,
        business: Optional[str] = None,
        module: Optional[str] = None,
        kind: Optional[str] = None,
        limit: int = 50,
        cursor: Optional[str] = None,
    ) -> list[CaseRecord]:
        """Newest first, filterable; cursor is the last case_id of the
        previous page."""
        with self._lock:
            ordered = [self._cases[cid] for _, cid in reversed(self._order)]
        if business:
            ordered = [c for c in ordered if c.event.business == business]
        if module:
            ordered = [c for c in ordered if c.event.module == module]
        if kind:
            ordered = [c for c in ordered if c.event.kind.value == kind]
        if cursor is not None:
            ids = [c.case_id for c in ordered]
            start = ids.index(cursor) + 1 if cursor in ids else 0
            ordered = ordered[start:]
        return ordered[: max(1, min(limit, 500))]

    def retrieve_working_memory(self, event: OperationalEvent, k: int) -> list[CaseRecord]:
        """Top-k live cases by exact-tag relevance, newest first on ties.

        Eligibility requires the business bit: cross-business cases never
        surface, however their kind or module happens to line up.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        with self._lock:
            live = list(self._cases.values())
        scored = [(working_memory_score(event, c), c) for c in live]
        scored = [(s, c) for s, c in scored if s & 4]
        scored.sort(key=lambda it: (-it[0], -it[1].created_at.timestamp(), it[1].case_id))
        return [c for _, c in scored[:k]]

    def snapshot(self) -> list[dict]:
        with self._lock:
            return [self._cases[cid].to_dict() for _, cid in self._order]

    # -- knowledge pathway -----------------------------------------------------

    def distill(self, case: CaseRecord, *, case_ref: str = "", seed: int = 0, temperature: float = 0.0) -> list[str]:
        """Ask the reasoner for reusable insights from one case and persist
        them. Best-effort: one retry on transport failure, then skip (the
        case itself is already durable)."""
        if self.reasoner is None or self.knowledge is None:
            return []
        summary = {
            "case_id": case.case_id,
            "event": case.event.to_dict(),
            "verdict": case.diagnosis.verdict.value,
            "root_cause": case.diagnosis.root_cause.to_dict() if case.diagnosis.root_cause else None,
            "feedback": case.feedback.text if case.feedback else None,
        }
        request = ReasonerRequest(
            kind=RequestKind.DISTILL,
            context={"case": summary},
            sampling=Sampling(
                temperature=temperature, seed=seed, attempt_index=1, case_ref=case_ref or case.case_id
            ),
        )
        for attempt in (1, 2):
            try:
                response = self.reasoner.call(request)
                break
            except ReasonerUnavailable:
                if attempt == 2:
                    logger.warning("distillation skipped for %s: reasoner unavailable", case.case_id)
                    return []
        entry_ids = []
        for i, draft in enumerate(response.payload.get("entries", [])):
            entry = KnowledgeEntry(
                entry_id=f"ke-{case.case_id}-{i}",
                kind=draft["kind"],
                key=draft.get("key"),
                text=draft["text"],
                provenance="distilled",
                source_case_id=case.case_id,
                created_at=case.created_at,
            )
            entry_ids.append(self.knowledge.put_entry(entry))
        return entry_ids

    def apply_correction(self, case_id: str, corrected_fields: dict) -> CaseRecord:
        """Write a correction-annotated twin of a case so corrected knowledge
        takes effect immediately through working memory; contradicted
        long-term entries are flagged and fall at the next consolidation."""
        with self._lock:
            original = self._cases.get(case_id)
            if original is None:
                raise NotFound(f"case {case_id} not in memory")
        statement = corrected_fields.get("statement", "")
        contradicted = list(corrected_fields.get("contradicted_entry_ids", []))
        snapshots = []
        replaced = False
        for snap in original.retrieved_knowledge:
            if snap.entry_id in contradicted and statement:
                snapshots.append(KnowledgeSnapshot(entry_id=snap.entry_id, kind=snap.kind, text=f"[corrected] {statement}"))
                replaced = True
            else:
                snapshots.append(snap)
        if statement and not replaced:
            snapshots.insert(0, KnowledgeSnapshot(entry_id=f"correction-{case_id}", kind="semantic", text=statement))
        correction = CaseRecord(
            case_id=f"{case_id}-corr",
            event=original.event,
            skill_ids=original.skill_ids,
            retrieved_data=original.retrieved_data,
            retrieved_knowledge=tuple(snapshots),
            diagnosis=original.diagnosis,
            created_at=self.clock(),
            markers=tuple(original.markers) + ("knowledge-correction",),
            correction_of=case_id,
        )
        self.write_case(correction)
        if self.knowledge is not None:
            for entry_id in contradicted:
                self.knowledge.flag_for_tombstone(entry_id)
        return correction
