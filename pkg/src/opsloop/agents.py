"""The three canonical agents: release interception, proactive inspection,
alert root-cause analysis.

Each agent is a data-only profile (scenario prompt + verdict vocabulary);
the execution pipeline is shared. Sub-profiles specialize the scenario prompt
per metric family and never change pipeline behavior. Every event yields a
CaseRecord: under retrieval or reasoner failure the pipeline degrades to the
profile's conservative verdict instead of dropping the event.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from datetime import timedelta
from typing import Optional

from .core import (
    CaseRecord,
    Diagnosis,
    EventKind,
    Evidence,
    KnowledgeSnapshot,
    MetricFamily,
    OperationalEvent,
    RetrievedData,
    RetrievedItem,
    RootCause,
    SourceStatus,
    Verdict,
)
from .errors import CompositionError, ParamError, ReasonerUnavailable, UnknownSource, ValidationFailure
from .lifecycle import GenerationFailure, PlaceholderError, resolve_params, resolve_placeholder, resolve_window
from .reasoner import ReasonerRequest, RequestKind, Sampling
from .skills import COMPOSITION_CAP, Skill, match_score

logger = logging.getLogger(__name__)

PROMPT_SIZE_CAP = 32_000


@dataclass(frozen=True)
class AgentProfile:
    agent_kind: EventKind
    sub_profile: Optional[MetricFamily]
    scenario_prompt: str
    verdict_vocabulary: tuple[Verdict, ...]
    conservative_verdict: Verdict

    def key(self) -> str:
        return self.agent_kind.value + (f"/{self.sub_profile.value}" if self.sub_profile else "")


_FAMILY_FOCUS = {
    MetricFamily.GMV: "Focus on transaction and revenue-impacting signals; weigh GMV movement against traffic shifts.",
    MetricFamily.CAPACITY: "Focus on saturation signals: capacity headroom, queue depth, resource exhaustion trends.",
    MetricFamily.AVAILABILITY: "Focus on availability signals: error rates, latency percentiles, timeout bursts.",
    MetricFamily.COREDUMP: "Focus on crash signals: coredump counts, restart loops, fatal log patterns.",
}


def _build_profiles() -> dict[tuple[str, Optional[str]], AgentProfile]:
    profiles: dict[tuple[str, Optional[str]], AgentProfile] = {}
    release_prompt = (
        "You are the release interception agent. A release checkpoint is under evaluation: "
        "compare post-release signals against the pre-release baseline and decide whether the "
        "rollout is safe. Verdict 'proceed' clears the checkpoint; 'rollback' blocks it."
    )
    profiles[("release", None)] = AgentProfile(
        agent_kind=EventKind.RELEASE,
        sub_profile=None,
        scenario_prompt=release_prompt,
        verdict_vocabulary=(Verdict.PROCEED, Verdict.ROLLBACK),
        conservative_verdict=Verdict.ROLLBACK,
    )
    inspection_prompt = (
        "You are the proactive inspection agent performing a periodic comprehensive health "
        "analysis. Look for latent risks and slow degradations. Verdict 'healthy' closes the "
        "inspection; 'at_risk' opens a follow-up with the suspected module."
    )
    alert_prompt = (
        "You are the alert root-cause analysis agent, triggered by a fired alert. Correlate the "
        "alert with metrics, logs, and recent changes to attribute a root cause. Verdict "
        "'suppress' marks the alert non-actionable; 'page' escalates with the root-cause candidate."
    )
    for family in [None, *MetricFamily]:
        suffix = f" {_FAMILY_FOCUS[family]}" if family else ""
        profiles[("inspection", family.value if family else None)] = AgentProfile(
            agent_kind=EventKind.INSPECTION,
            sub_profile=family,
            scenario_prompt=inspection_prompt + suffix,
            verdict_vocabulary=(Verdict.HEALTHY, Verdict.AT_RISK),
            conservative_verdict=Verdict.AT_RISK,
        )
        profiles[("alert", family.value if family else None)] = AgentProfile(
            agent_kind=EventKind.ALERT,
            sub_profile=family,
            scenario_prompt=alert_prompt + suffix,
            verdict_vocabulary=(Verdict.SUPPRESS, Verdict.PAGE),
            conservative_verdict=Verdict.PAGE,
        )
    return profiles


PROFILES = _build_profiles()


def dispatch(event: OperationalEvent) -> AgentProfile:
    """Total routing: event kind picks the agent, metric family the sub-profile."""
    if event.kind is EventKind.RELEASE:
        return PROFILES[("release", None)]
    family = event.metric_family.value if event.metric_family else None
    return PROFILES[(event.kind.value, family)]


# ---------------------------------------------------------------------------
# prompt composition


def _render_rows(item: RetrievedItem, limit: int = 30) -> list[str]:
    lines = []
    for row in item.rows[:limit]:
        lines.append("  " + " ".join(f"{k}={row[k]}" for k in row))
    if len(item.rows) > limit:
        lines.append(f"  ... ({len(item.rows) - limit} more rows)")
    return lines


def compose_prompt(
    profile: AgentProfile,
    skills: list[tuple[Skill, int]],
    data: RetrievedData,
    knowledge: list[KnowledgeSnapshot],
    working: list[CaseRecord],
    event: OperationalEvent,
) -> str:
    """Deterministic prompt assembly: scenario block, skill blocks in
    match-score order, data grouped by source, knowledge grouped by index
    kind, then working-memory summaries. Size-capped with lowest-relevance
    content truncated first.
    """
    retrieved_ids = data.source_ids()
    declared_indices = {
        q.index for skill, _ in skills for q in skill.load_data_schema.knowledge_queries
    }

    scenario_lines = [
        "# Scenario",
        profile.scenario_prompt,
        "Allowed verdicts: " + ", ".join(v.value for v in profile.verdict_vocabulary) + ".",
        f"Event: {event.event_id} kind={event.kind.value} business={event.business} "
        f"module={event.module} metric_family={event.metric_family.value if event.metric_family else '-'}",
    ]
    if not skills:
        scenario_lines.append("No skill matched this event; reason from the scenario profile alone.")

    skill_lines: list[str] = []
    for skill, score in skills:
        skill_lines.append(f"## Skill {skill.meta.skill_id}/v{skill.meta.version} (score {score})")
        for step in skill.prompt.steps:
            try:
                resolved = resolve_placeholder(step, event)
            except PlaceholderError as exc:
                raise CompositionError(f"skill {skill.meta.skill_id}: {exc}") from exc
            for kind, name in set(re.findall(r"\{(data|knowledge)\.([^}]+)\}", resolved)):
                if kind == "data":
                    if name not in retrieved_ids:
                        raise CompositionError(
                            f"skill {skill.meta.skill_id}: placeholder {{data.{name}}} has no retrieved data"
                        )
                    resolved = resolved.replace(f"{{data.{name}}}", f"[data:{name}]")
                else:
                    if name not in declared_indices:
                        raise CompositionError(
                            f"skill {skill.meta.skill_id}: placeholder {{knowledge.{name}}} not declared"
                        )
                    resolved = resolved.replace(f"{{knowledge.{name}}}", f"[knowledge:{name}]")
            skill_lines.append(f"- {resolved}")
        skill_lines.append(f"Output contract: {skill.prompt.output_contract}")

    data_lines: list[str] = ["# Data"]
    for item in data.items:
        data_lines.append(f"## Data: {item.source_id} (status={item.status.value}, rows={len(item.rows)})")
        data_lines.extend(_render_rows(item))

    knowledge_lines: list[str] = ["# Knowledge"]
    by_kind = {"definitive": [], "relational": [], "semantic": []}
    for snap in knowledge:
        by_kind.setdefault(snap.kind, []).append(snap)
    for kind in ("definitive", "relational", "semantic"):
        for snap in by_kind.get(kind, []):
            knowledge_lines.append(f"- [{kind}] {snap.entry_id}: {snap.text}")

    working_lines: list[str] = ["# Working memory"]
    for case in working:
        rc = case.diagnosis.root_cause.module if case.diagnosis.root_cause else "-"
        working_lines.append(
            f"- case {case.case_id}: {case.event.kind.value} on {case.event.business}/{case.event.module} "
            f"-> {case.diagnosis.verdict.value} (root_cause={rc})"
        )

    sections = [
        "\n".join(scenario_lines),
        "\n".join(skill_lines) if skill_lines else "",
        "\n".join(data_lines),
        "\n".join(knowledge_lines) if knowledge else "",
        "\n".join(working_lines) if working else "",
    ]
    prompt = "\n\n".join(s for s in sections if s)
    if len(prompt) <= PROMPT_SIZE_CAP:
        return prompt
    # truncate lowest-relevance sections first: working memory, knowledge, data
    for idx, label in ((4, "working memory"), (3, "knowledge"), (2, "data")):
        if sections[idx]:
            sections[idx] = f"[truncated: {label} omitted to fit the prompt size cap]"
            prompt = "\n\n".join(s for s in sections if s)
            if len(prompt) <= PROMPT_SIZE_CAP:
                return prompt
    return prompt[: PROMPT_SIZE_CAP - 13] + "\n[truncated]"


# ---------------------------------------------------------------------------
# execution pipeline


class AgentRuntime:
    """Shared execution pipeline binding the stores together.

    Flags: ``generation_enabled`` gates skill generation (off in the static
    ablation); ``knowledge_enabled`` gates knowledge and working-memory
    retrieval (off in the no-knowledge ablation).
    """

    def __init__(
        self,
        pool,
        simulator,
        knowledge,
        memory,
        lifecycle,
        reasoner,
        *,
        generation_enabled: bool = True,
        knowledge_enabled: bool = True,
        seed: int = 0,
        working_memory_k: int = 5,
        clock_advance=None,
    ):
        self.pool = pool
        self.simulator = simulator
        self.knowledge = knowledge
        self.memory = memory
        self.lifecycle = lifecycle
        self.reasoner = reasoner
        self.generation_enabled = generation_enabled
        self.knowledge_enabled = knowledge_enabled
        self.seed = seed
        self.working_memory_k = working_memory_k
        self.clock_advance = clock_advance

    def run(
        self,
        event: OperationalEvent,
        *,
        case_ref: str = "",
        attempt_index: int = 1,
        temperature: float = 0.0,
    ) -> CaseRecord:
        """Execute one event end to end and return the written CaseRecord."""
        if self.clock_advance is not None:
            self.clock_advance(event.timestamp)
        ref = case_ref or event.event_id
        case_id = f"{ref}-a{attempt_index}"
        profile = dispatch(event)
        markers: list[str] = []

        skills = self.pool.match(event)[:COMPOSITION_CAP]
        if not skills and self.generation_enabled:
            try:
                generated = self.lifecycle.generate(event, case_ref=ref, temperature=temperature, seed=self.seed)
                skills = [generated]
            except GenerationFailure:
                markers.append("generation-failed")
        elif not skills:
            markers.append("no-skill-static")
        scored = [(s, match_score(event, s)) for s in skills]

        data, mandatory_ok = self._execute_source_calls(skills, event)
        knowledge_snaps: list[KnowledgeSnapshot] = []
        working: list[CaseRecord] = []
        if self.knowledge_enabled:
            knowledge_snaps = self._execute_knowledge_queries(skills, event)
            working = self.memory.retrieve_working_memory(event, self.working_memory_k)
        else:
            markers.append("knowledge-disabled")

        if not mandatory_ok:
            markers.append("retrieval-failure")
            diagnosis = self._conservative(profile, event, "mandatory source retrieval failed")
        else:
            prompt = compose_prompt(profile, scored, data, knowledge_snaps, working, event)
            try:
                response = self.reasoner.call(
                    ReasonerRequest(
                        kind=RequestKind.DIAGNOSE,
                        context={
                            "prompt": prompt,
                            "event": event.to_dict(),
                            "skills": [
                                {"skill_id": s.meta.skill_id, "version": s.meta.version} for s, _ in scored
                            ],
                        },
                        sampling=Sampling(
                            temperature=temperature, seed=self.seed, attempt_index=attempt_index, case_ref=ref
                        ),
                    )
                )
                diagnosis = self._parse_diagnosis(response.payload, profile, event, data, markers)
            except ReasonerUnavailable:
                markers.append("reasoner-unavailable")
                diagnosis = self._conservative(profile, event, "reasoner unavailable")

        case = CaseRecord(
            case_id=case_id,
            event=event,
            skill_ids=tuple((s.meta.skill_id, s.meta.version) for s, _ in scored),
            retrieved_data=data,
            retrieved_knowledge=tuple(knowledge_snaps),
            diagnosis=diagnosis,
            created_at=event.timestamp,
            markers=tuple(markers),
        )
        self.memory.write_case(case)
        self.memory.distill(case, case_ref=ref, seed=self.seed)
        return case

    # -- pipeline steps -----------------------------------------------------

    def _execute_source_calls(self, skills: list[Skill], event: OperationalEvent):
        """Union of all matched skills' source calls, deduplicated on
        (source_id, resolved params, resolved window)."""
        import json as _json

        merged: dict[tuple, dict] = {}
        order: list[tuple] = []
        for skill in skills:
            for call in skill.load_data_schema.source_calls:
                try:
                    params = resolve_params(call.params, event)
                    window = resolve_window(call, event)
                    key = (call.source_id, _json.dumps(params, sort_keys=True), window)
                except PlaceholderError as exc:
                    key = (call.source_id, f"unresolved:{exc}", None)
                    params, window = None, None
                if key not in merged:
                    merged[key] = {"call": call, "params": params, "window": window, "mandatory": call.mandatory}
                    order.append(key)
                else:
                    merged[key]["mandatory"] = merged[key]["mandatory"] or call.mandatory
        items: list[RetrievedItem] = []
        mandatory_ok = True
        lo, hi = None, None
        for key in order:
            entry = merged[key]
            call = entry["call"]
            if entry["params"] is None:
                items.append(
                    RetrievedItem(source_id=call.source_id, params_used={}, rows=(), status=SourceStatus.ERROR)
                )
                if entry["mandatory"]:
                    mandatory_ok = False
                continue
            window = entry["window"]
            lo = window[0] if lo is None or window[0] < lo else lo
            hi = window[1] if hi is None or window[1] > hi else hi
            try:
                result = self.simulator.query_source(call.source_id, entry["params"], window)
                status = SourceStatus(result.status)
                items.append(
                    RetrievedItem(
                        source_id=call.source_id, params_used=entry["params"], rows=result.rows, status=status
                    )
                )
                if entry["mandatory"] and status is not SourceStatus.OK:
                    mandatory_ok = False
            except (UnknownSource, ParamError) as exc:
                logger.info("source call %s failed: %s", call.source_id, exc)
                items.append(
                    RetrievedItem(
                        source_id=call.source_id, params_used=entry["params"], rows=(), status=SourceStatus.ERROR
                    )
                )
                if entry["mandatory"]:
                    mandatory_ok = False
        if lo is None:
            lo, hi = event.timestamp - timedelta(minutes=30), event.timestamp
        return RetrievedData(items=tuple(items), fetch_window=(lo, hi)), mandatory_ok

    def _execute_knowledge_queries(self, skills: list[Skill], event: OperationalEvent) -> list[KnowledgeSnapshot]:
        import json as _json

        seen_queries: set[str] = set()
        snaps: list[KnowledgeSnapshot] = []
        seen_entries: set[str] = set()
        for skill in skills:
            for query in skill.load_data_schema.knowledge_queries:
                qkey = _json.dumps(query.to_dict(), sort_keys=True)
                if qkey in seen_queries:
                    continue
                seen_queries.add(qkey)
                try:
                    entries = self.lifecycle._run_knowledge_query(query, event, count_hits=True)
                except Exception as exc:
                    logger.info("knowledge query %s failed: %s", query.index, exc)
                    continue
                for entry in entries:
                    if entry.entry_id not in seen_entries:
                        seen_entries.add(entry.entry_id)
                        snaps.append(KnowledgeSnapshot(entry_id=entry.entry_id, kind=entry.kind, text=entry.text))
        return snaps

    def _conservative(self, profile: AgentProfile, event: OperationalEvent, why: str) -> Diagnosis:
        root = None
        if profile.conservative_verdict is Verdict.PAGE:
            root = RootCause(module=event.module, description=f"conservative escalation: {why}")
        return Diagnosis(
            verdict=profile.conservative_verdict,
            root_cause=root,
            evidence=(),
            actions=(f"manual review required: {why}",),
            confidence=0.0,
        )

    def _parse_diagnosis(
        self,
        payload: dict,
        profile: AgentProfile,
        event: OperationalEvent,
        data: RetrievedData,
        markers: list[str],
    ) -> Diagnosis:
        doc = payload.get("diagnosis", {})
        try:
            verdict = Verdict(doc.get("verdict"))
        except ValueError:
            markers.append("verdict-out-of-vocabulary")
            return self._conservative(profile, event, f"reasoner verdict {doc.get('verdict')!r} not allowed")
        if verdict not in profile.verdict_vocabulary:
            markers.append("verdict-out-of-vocabulary")
            return self._conservative(profile, event, f"verdict {verdict.value} not in {profile.key()} vocabulary")

        retrieved = data.source_ids()
        evidence: list[Evidence] = []
        for ev in doc.get("evidence", []):
            if ev.get("source_id") in retrieved:
                evidence.append(Evidence.from_dict(ev))
        for source_id in doc.get("evidence_sources", []):
            if source_id in retrieved and all(e.source_id != source_id for e in evidence):
                item = next(i for i in data.items if i.source_id == source_id)
                excerpt = " ".join(f"{k}={v}" for k, v in (item.rows[-1] if item.rows else {}).items())
                evidence.append(Evidence(source_id=source_id, excerpt=excerpt, relevance_note="cited by reasoner"))

        root = RootCause.from_dict(doc["root_cause"]) if doc.get("root_cause") else None
        if verdict is Verdict.PAGE and root is None:
            markers.append("root-cause-defaulted")
            root = RootCause(module=event.module, description="escalation without isolated cause")
        try:
            return Diagnosis(
                verdict=verdict,
                root_cause=root,
                evidence=tuple(evidence),
                actions=tuple(doc.get("actions", [])),
                confidence=float(doc.get("confidence", 0.5)),
            )
        except (ValidationFailure, TypeError, ValueError) as exc:
            markers.append("diagnosis-malformed")
            return self._conservative(profile, event, f"malformed diagnosis: {exc}")
