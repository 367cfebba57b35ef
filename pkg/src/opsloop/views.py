"""Payload builders shared by the HTTP API and the CLI so both surfaces
return identical structures for the same state."""

from __future__ import annotations

from typing import Optional

from .core import CaseRecord
from .errors import ValidationFailure
from .knowledge import KnowledgeBase
from .skills import SkillPool, diff_components


def case_summary(case: CaseRecord) -> dict:
    return {
        "case_id": case.case_id,
        "event_id": case.event.event_id,
        "kind": case.event.kind.value,
        "business": case.event.business,
        "module": case.event.module,
        "verdict": case.diagnosis.verdict.value,
        "root_cause_module": case.diagnosis.root_cause.module if case.diagnosis.root_cause else None,
        "confidence": case.diagnosis.confidence,
        "created_at": case.to_dict()["created_at"],
        "markers": list(case.markers),
        "has_feedback": case.feedback is not None,
        "skill_ids": [[s, v] for s, v in case.skill_ids],
    }


def case_page(cases: list[CaseRecord], limit: int) -> dict:
    summaries = [case_summary(c) for c in cases]
    next_cursor = summaries[-1]["case_id"] if len(summaries) == limit else None
    return {"cases": summaries, "next_cursor": next_cursor}


def skill_summary(pool: SkillPool) -> dict:
    return {
        "skills": [
            {
                "skill_id": s.meta.skill_id,
                "name": s.meta.name,
                "version": s.meta.version,
                "description": s.meta.description,
                "tags": list(s.meta.tags),
            }
            for s in pool.heads()
        ]
    }


def skill_detail(pool: SkillPool, skill_id: str, version: Optional[int] = None) -> dict:
    return pool.get(skill_id, version).to_dict()


def skill_diff(pool: SkillPool, skill_id: str, from_version: int, to_version: int) -> dict:
    old = pool.get(skill_id, from_version)
    new = pool.get(skill_id, to_version)
    return {
        "skill_id": skill_id,
        "from_version": from_version,
        "to_version": to_version,
        "components": diff_components(old, new),
    }


def knowledge_search(kb: KnowledgeBase, mode: str, params: dict) -> dict:
    if mode == "kv":
        entries = kb.query_kv(params["business"], params["scenario"])
        results = [e.to_dict() for e in entries]
    elif mode == "kkv":
        entries = kb.query_kkv(params["subject"], params["object"], params["metric"])
        results = [e.to_dict() for e in entries]
    elif mode == "vector":
        top_k = int(params.get("top_k", 5))
        scored = kb.query_vector(params["q"], top_k)
        results = [{"entry": e.to_dict(), "cosine": round(c, 6)} for e, c in scored]
    else:
        raise ValidationFailure(f"unknown knowledge search mode {mode!r}")
    return {"mode": mode, "results": results}
