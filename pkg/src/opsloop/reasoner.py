"""Pluggable reasoning boundary with a deterministic scripted mock.

One request/response contract covers five request kinds (diagnose, skill
generation, skill update, knowledge distillation, feedback classification).
The mock backend resolves every call from a script plus counter-based derived
randomness keyed by (seed, case_ref, kind, attempt_index), so outcomes are
independent of call order and concurrency interleaving. A generic HTTP
backend serves real models behind the same contract; it never participates in
acceptance runs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

import requests

from .errors import ReasonerProtocolError, ReasonerUnavailable

logger = logging.getLogger(__name__)


class RequestKind(str, Enum):
    DIAGNOSE = "diagnose"
    GENERATE_SKILL = "generate_skill"
    UPDATE_SKILL = "update_skill"
    DISTILL = "distill"
    CLASSIFY_FEEDBACK = "classify_feedback"


@dataclass(frozen=True)
class Sampling:
    temperature: float = 0.0
    seed: int = 0
    attempt_index: int = 1
    case_ref: str = ""

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.attempt_index < 1:
            raise ValueError("attempt_index must be >= 1")


@dataclass(frozen=True)
class ReasonerRequest:
    kind: RequestKind
    context: dict[str, Any]
    sampling: Sampling


@dataclass(frozen=True)
class ReasonerResponse:
    kind: RequestKind
    payload: dict[str, Any]
    outcome_label: str = ""


def derived_unit(seed: int, *parts: Any) -> float:
    """Uniform in [0, 1) derived from a keyed hash; no shared RNG cursor."""
    material = json.dumps([seed, *[str(p) for p in parts]], separators=(",", ":"))
    digest = hashlib.blake2b(material.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2**64


def _context_text(context: dict) -> str:
    return json.dumps(context, sort_keys=True, default=str, ensure_ascii=False)


# ---------------------------------------------------------------------------
# scripted behaviors


_METRIC_KEYWORD_BY_FAMILY = {
    "gmv": "gmv",
    "capacity": "capacity",
    "availability": "latency",
    "coredump": "coredump",
}


def synthesize_skill_doc(context: dict) -> dict:
    """Deterministic stand-in for LLM skill drafting.

    Builds a plausible skill document for the triggering event from the
    source registry in the request context: the module's best-matching metric
    series, its log stream, the business change feed, plus kv/vector
    knowledge queries.
    """
    event = context.get("event", {})
    sources = context.get("sources", [])
    business = event.get("business", "unknown")
    module = event.get("module", "unknown")
    kind = event.get("kind", "alert")
    family = event.get("metric_family")

    module_metrics = [
        s for s in sources if s.get("kind") == "metric_series" and s.get("source_id", "").split(":")[1:2] == [module]
    ]
    keyword = _METRIC_KEYWORD_BY_FAMILY.get(family or "", "latency")
    preferred = [s for s in module_metrics if keyword in s["source_id"]] or module_metrics
    log_sources = [s for s in sources if s.get("kind") == "log_lines" and s.get("source_id", "").endswith(f":{module}")]
    change_sources = [s for s in sources if s.get("kind") == "change_events"]

    calls = []
    # only the metric series is mandatory: logs and the change feed can be
    # legitimately empty inside a quiet window
    for descriptor, mandatory in (
        (preferred[0] if preferred else None, True),
        (log_sources[0] if log_sources else None, False),
        (change_sources[0] if change_sources else None, False),
    ):
        if descriptor is None:
            continue
        calls.append(
            {
                "source_id": descriptor["source_id"],
                "params": {},
                "window": {"minutes_before": 30, "minutes_after": 5},
                "mandatory": mandatory,
                "expected_fields": list(descriptor["field_schema"]),
            }
        )

    tags = [business, module, kind] + ([family] if family else [])
    skill_id = "-".join(tags)
    steps = [
        f"Inspect {{data.{c['source_id']}}} for deviations around the event window." for c in calls
    ] + ["Correlate recent change events with the anomaly onset before attributing a root cause."]
    return {
        "meta": {
            "skill_id": skill_id,
            "name": f"{module} {kind} analysis",
            "version": 1,
            "description": f"Auto-drafted orchestration for {business}/{module} {kind} events.",
            "tags": tags,
        },
        "load_data_schema": {
            "source_calls": calls,
            "knowledge_queries": [
                {"index": "kv", "key_parts": {"business": business, "scenario": kind}, "top_k": 3, "mandatory": False},
                {
                    "index": "vector",
                    "query_text": f"{family or kind} anomaly in {module}",
                    "top_k": 5,
                    "mandatory": False,
                },
            ],
        },
        "prompt": {
            "steps": steps,
            "output_contract": "verdict, root_cause, evidence, actions, confidence",
        },
    }


def _apply_skill_patch(context: dict, outcome: dict) -> dict:
    """Produce an update candidate by patching the current skill from the request."""
    current = json.loads(json.dumps(context.get("skill", {})))
    target = context.get("target", "prompt")
    patch = outcome.get("patch", {})
    if outcome.get("outcome") == "violate_isolation":
        other = "prompt" if target == "load_data_schema" else "load_data_schema"
        if other == "prompt":
            current["prompt"]["steps"] = list(current["prompt"]["steps"]) + ["Tampered non-target step."]
        else:
            calls = list(current["load_data_schema"]["source_calls"])
            if calls:
                calls[0] = dict(calls[0], mandatory=not calls[0].get("mandatory", False))
            current["load_data_schema"]["source_calls"] = calls
    elif target == "prompt":
        step = patch.get("append_step")
        if step is None and "append_step_template" in patch:
            step = patch["append_step_template"].replace("{skill_id}", current["meta"]["skill_id"])
        if step and step not in current["prompt"]["steps"]:
            current["prompt"]["steps"] = list(current["prompt"]["steps"]) + [step]
    else:
        call = patch.get("add_source_call")
        if call:
            existing = [c["source_id"] for c in current["load_data_schema"]["source_calls"]]
            if call["source_id"] not in existing:
                current["load_data_schema"]["source_calls"] = list(
                    current["load_data_schema"]["source_calls"]
                ) + [dict(call)]
    current["meta"] = dict(current["meta"], version=int(current["meta"]["version"]) + 1)
    return current


class ScriptedBehavior:
    """Outcome program for one (case_ref, kind) slot.

    Accepts one of three forms: an explicit ``sequence`` indexed by
    attempt_index (clamped to the last element), a ``bernoulli`` success
    probability with canned success/failure outcomes, or a ``conditional``
    that picks an outcome on a deterministic predicate over the serialized
    request context. All three are pure functions of the request.
    """

    def __init__(self, spec: dict):
        forms = [k for k in ("sequence", "bernoulli", "conditional") if k in spec]
        if len(forms) != 1:
            raise ValueError(f"behavior needs exactly one of sequence/bernoulli/conditional, got {spec}")
        self.form = forms[0]
        self.spec = spec

    def resolve(self, request: ReasonerRequest) -> dict:
        if self.form == "sequence":
            seq = self.spec["sequence"]
            idx = min(request.sampling.attempt_index, len(seq)) - 1
            return seq[idx]
        if self.form == "bernoulli":
            b = self.spec["bernoulli"]
            u = derived_unit(
                request.sampling.seed,
                request.sampling.case_ref,
                request.kind.value,
                request.sampling.attempt_index,
            )
            return b["success"] if u < float(b["p"]) else b["failure"]
        cond = self.spec["conditional"]
        hit = cond["context_contains"] in _context_text(request.context)
        return cond["then"] if hit else cond["else"]


class MockScript:
    """Parsed mock-script fixture: per-case behaviors plus per-kind defaults."""

    def __init__(self, doc: Optional[dict] = None):
        doc = doc or {}
        self.defaults = {k: ScriptedBehavior(v) for k, v in doc.get("defaults", {}).items()}
        self.cases: dict[str, dict[str, ScriptedBehavior]] = {}
        for case_ref, kinds in doc.get("cases", {}).items():
            self.cases[case_ref] = {k: ScriptedBehavior(v) for k, v in kinds.items()}

    @classmethod
    def from_file(cls, path) -> "MockScript":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    def behavior_for(self, case_ref: str, kind: RequestKind) -> Optional[ScriptedBehavior]:
        by_case = self.cases.get(case_ref, {})
        return by_case.get(kind.value) or self.defaults.get(kind.value)


class MockReasoner:
    """Deterministic scripted backend for reproducible evaluation."""

    def __init__(self, script: Optional[MockScript] = None):
        self.script = script or MockScript()

    def call(self, request: ReasonerRequest) -> ReasonerResponse:
        behavior = self.script.behavior_for(request.sampling.case_ref, request.kind)
        outcome = behavior.resolve(request) if behavior else self._builtin_default(request)
        return self._materialize(request, outcome)

    def _builtin_default(self, request: ReasonerRequest) -> dict:
        if request.kind is RequestKind.DIAGNOSE:
            safe = {"release": "proceed", "inspection": "healthy", "alert": "suppress"}
            kind = request.context.get("event", {}).get("kind", "alert")
            return {
                "outcome": "diagnosis",
                "diagnosis": {
                    "verdict": safe.get(kind, "suppress"),
                    "root_cause": None,
                    "evidence_sources": [],
                    "actions": ["continue monitoring"],
                    "confidence": 0.5,
                },
            }
        if request.kind is RequestKind.GENERATE_SKILL:
            return {"outcome": "template"}
        if request.kind is RequestKind.UPDATE_SKILL:
            return {"outcome": "patch", "patch": {}}
        if request.kind is RequestKind.DISTILL:
            return {"outcome": "entries", "entries": []}
        return {"outcome": "classification", "classification": "confirmation"}

    def _materialize(self, request: ReasonerRequest, outcome: dict) -> ReasonerResponse:
        label = outcome.get("outcome", "")
        kind = request.kind
        if kind is RequestKind.DIAGNOSE:
            return ReasonerResponse(kind, {"diagnosis": outcome["diagnosis"]}, label or "diagnosis")
        if kind is RequestKind.GENERATE_SKILL:
            if label == "template":
                doc = synthesize_skill_doc(request.context)
            elif label == "invalid_source":
                doc = synthesize_skill_doc(request.context)
                if doc["load_data_schema"]["source_calls"]:
                    old_id = doc["load_data_schema"]["source_calls"][0]["source_id"]
                    doc["load_data_schema"]["source_calls"][0]["source_id"] = "metric:__absent__:none"
                    doc["prompt"]["steps"] = [
                        s.replace(old_id, "metric:__absent__:none") for s in doc["prompt"]["steps"]
                    ]
            elif label == "invalid_field":
                doc = synthesize_skill_doc(request.context)
                if doc["load_data_schema"]["source_calls"]:
                    doc["load_data_schema"]["source_calls"][0]["expected_fields"] = list(
                        doc["load_data_schema"]["source_calls"][0]["expected_fields"]
                    ) + ["p99_latency"]
            else:
                doc = json.loads(json.dumps(outcome["skill"]))
            return ReasonerResponse(kind, {"skill": doc}, label or "skill")
        if kind is RequestKind.UPDATE_SKILL:
            if label in ("patch", "violate_isolation"):
                doc = _apply_skill_patch(request.context, outcome)
            elif label == "invalid_source":
                # corrupt the *targeted* component so validation (or parsing)
                # rejects the candidate
                if request.context.get("target") == "prompt":
                    doc = json.loads(json.dumps(request.context.get("skill", {})))
                    doc["prompt"]["steps"] = list(doc["prompt"]["steps"]) + [
                        "Check {data.metric:__absent__:none} for anomalies."
                    ]
                    doc["meta"] = dict(doc["meta"], version=int(doc["meta"]["version"]) + 1)
                else:
                    doc = _apply_skill_patch(
                        request.context,
                        {
                            "outcome": "patch",
                            "patch": {
                                "add_source_call": {
                                    "source_id": "metric:__absent__:none",
                                    "params": {},
                                    "window": {"minutes_before": 10, "minutes_after": 0},
                                    "mandatory": True,
                                    "expected_fields": ["ts", "value"],
                                }
                            },
                        },
                    )
            else:
                doc = json.loads(json.dumps(outcome["skill"]))
            return ReasonerResponse(kind, {"skill": doc}, label or "skill")
        if kind is RequestKind.DISTILL:
            return ReasonerResponse(kind, {"entries": outcome.get("entries", [])}, label or "entries")
        payload = {
            "classification": outcome["classification"],
            "target_skill_id": outcome.get("target_skill_id"),
            "contradicted_entry_ids": outcome.get("contradicted_entry_ids", []),
            "corrected_statement": outcome.get("corrected_statement"),
        }
        return ReasonerResponse(kind, payload, label or "classification")


class HttpReasoner:
    """Generic HTTP backend: serializes the request, posts it, parses a payload.

    Prompt engineering for real models is deliberately out of scope; the wire
    format is the same JSON document the mock consumes.
    """

    def __init__(self, endpoint: str, timeout_ms: int = 30000):
        self.endpoint = endpoint
        self.timeout_s = timeout_ms / 1000.0

    def call(self, request: ReasonerRequest) -> ReasonerResponse:
        body = {
            "kind": request.kind.value,
            "context": request.context,
            "sampling": {
                "temperature": request.sampling.temperature,
                "seed": request.sampling.seed,
                "attempt_index": request.sampling.attempt_index,
                "case_ref": request.sampling.case_ref,
            },
        }
        try:
            resp = requests.post(self.endpoint, json=body, timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise ReasonerUnavailable(f"reasoner endpoint {self.endpoint}: {exc}") from exc
        if resp.status_code != 200:
            raise ReasonerUnavailable(f"reasoner endpoint returned HTTP {resp.status_code}")
        try:
            doc = resp.json()
            payload = doc["payload"]
        except (ValueError, KeyError) as exc:
            raise ReasonerProtocolError(f"unparseable reasoner response: {exc}", raw=resp.text) from exc
        if not isinstance(payload, dict):
            raise ReasonerProtocolError("reasoner payload must be an object", raw=resp.text)
        return ReasonerResponse(request.kind, payload, doc.get("outcome", ""))


@dataclass
class TranscriptEntry:
    kind: str
    case_ref: str
    attempt_index: int
    temperature: float
    seed: int
    outcome: str
    detail: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "case_ref": self.case_ref,
            "attempt_index": self.attempt_index,
            "temperature": self.temperature,
            "seed": self.seed,
            "outcome": self.outcome,
            "detail": self.detail,
        }


class RecordingReasoner:
    """Wraps any backend and records every call for audit and call-count tests."""

    def __init__(self, backend):
        self.backend = backend
        self.entries: list[TranscriptEntry] = []
        self._lock = threading.Lock()

    def call(self, request: ReasonerRequest) -> ReasonerResponse:
        response = self.backend.call(request)
        entry = TranscriptEntry(
            kind=request.kind.value,
            case_ref=request.sampling.case_ref,
            attempt_index=request.sampling.attempt_index,
            temperature=request.sampling.temperature,
            seed=request.sampling.seed,
            outcome=response.outcome_label,
        )
        with self._lock:
            self.entries.append(entry)
        return response

    def note(self, kind: str, case_ref: str, detail: dict) -> None:
        """Attach a non-call audit record (e.g. a validation report)."""
        with self._lock:
            self.entries.append(
                TranscriptEntry(kind=kind, case_ref=case_ref, attempt_index=0, temperature=0.0, seed=0, outcome="note", detail=detail)
            )

    def calls(self, kind: Optional[str] = None, case_ref: Optional[str] = None) -> list[TranscriptEntry]:
        with self._lock:
            out = [e for e in self.entries if e.attempt_index > 0]
        if kind is not None:
            out = [e for e in out if e.kind == kind]
        if case_ref is not None:
            out = [e for e in out if e.case_ref == case_ref]
        return out

    def clear(self) -> None:
        with self._lock:
            self.entries.clear()
