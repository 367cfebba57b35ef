"""Shared fixtures: a tiny three-module scenario, engines wired to scripted
mocks, and document builders."""

from __future__ import annotations

import json
from datetime import datetime, timedelta, timezone

import pytest

from opsloop.core import EventKind, MetricFamily, OperationalEvent
from opsloop.dataplane import Fault, ScenarioSpec
from opsloop.engine import Engine, EngineConfig
from opsloop.reasoner import MockScript

START = datetime(2026, 1, 1, tzinfo=timezone.utc)

TOPOLOGY = [
    {"module": "recall", "business": "ecom-search", "depends_on": ["index"]},
    {"module": "ranking", "business": "ecom-search", "depends_on": ["recall"]},
    {"module": "front-serve", "business": "ecom-search", "depends_on": ["ranking"]},
    {"module": "index", "business": "ecom-search", "depends_on": []},
]


def make_spec(faults=None, events=None, days=2, topology=None, metrics=("latency_p99", "error_rate")) -> ScenarioSpec:
    topo = topology if topology is not None else [dict(n) for n in TOPOLOGY]
    baselines = [
        {"module": n["module"], "metric": m, "mean": 100.0, "noise": 5.0, "period_minutes": 1440}
        for n in topo
        for m in metrics
    ]
    return ScenarioSpec(
        scenario_id="test-spec",
        start=START,
        end=START + timedelta(days=days),
        topology=topo,
        baselines=baselines,
        injected_faults=faults or [],
        event_schedule=events or [],
    )


def make_fault(module="recall", kind="latency_spike", at_hours=5, magnitude=3.0, duration=60, change_ref=None):
    return Fault(
        fault_id=f"f-{module}-{kind}",
        start=START + timedelta(hours=at_hours),
        duration_minutes=duration,
        module=module,
        kind=kind,
        magnitude=magnitude,
        root_cause_module=module,
        root_cause_change_ref=change_ref,
    )


def make_event(
    event_id="ev-1",
    kind="alert",
    business="ecom-search",
    module="recall",
    metric_family="availability",
    at_hours=5.5,
    payload=None,
):
    if payload is None:
        payload = (
            {"rule_id": "r1", "fired_value": 9.0, "threshold": 3.0}
            if kind == "alert"
            else {"version": "rel-42", "author": "dev"}
            if kind == "release"
            else {"schedule_id": "daily", "window_minutes": 60}
        )
    return OperationalEvent(
        event_id=event_id,
        kind=EventKind(kind),
        business=business,
        module=module,
        metric_family=MetricFamily(metric_family) if metric_family else None,
        timestamp=START + timedelta(hours=at_hours),
        payload=payload,
    )


def skill_doc(
    skill_id="ecom-search-recall-alert",
    tags=("ecom-search", "recall", "alert"),
    version=1,
    source_calls=None,
    knowledge_queries=None,
    steps=None,
):
    calls = source_calls or [
        {
            "source_id": "metric:recall:latency_p99",
            "params": {},
            "window": {"minutes_before": 30, "minutes_after": 5},
            "mandatory": True,
            "expected_fields": ["ts", "value"],
        }
    ]
    return {
        "schema_version": 1,
        "meta": {
            "skill_id": skill_id,
            "name": skill_id,
            "version": version,
            "description": "test skill",
            "tags": list(tags),
        },
        "load_data_schema": {"source_calls": calls, "knowledge_queries": knowledge_queries or []},
        "prompt": {
            "steps": list(steps or [f"Inspect {{data.{calls[0]['source_id']}}} for deviations."]),
            "output_contract": "verdict, root_cause, evidence, actions, confidence",
        },
    }


def make_engine(spec=None, script=None, seed=7, seed_skills=None, tmp_path=None, **overrides) -> Engine:
    """Engine over the tiny scenario with an optional in-memory mock script.

    ``seed_skills`` is a list of skill docs written to a temp seed dir.
    """
    seed_dir = None
    if seed_skills is not None:
        assert tmp_path is not None, "tmp_path required to materialize seed skills"
        seed_dir = tmp_path / "seed_skills"
        seed_dir.mkdir(exist_ok=True)
        for doc in seed_skills:
            (seed_dir / f"{doc['meta']['skill_id']}.json").write_text(json.dumps(doc))
    config = EngineConfig(
        scenario=spec or make_spec(faults=[make_fault()]),
        seed=seed,
        mock_script=MockScript(script) if isinstance(script, dict) else script,
        seed_skills_dir=str(seed_dir) if seed_dir else None,
        **overrides,
    )
    return Engine(config)


def diag_payload(verdict, module=None, change_ref=None, sources=(), confidence=0.9):
    root = {"module": module, "change_ref": change_ref, "description": "test"} if module else None
    return {
        "outcome": "diagnosis",
        "diagnosis": {
            "verdict": verdict,
            "root_cause": root,
            "evidence_sources": list(sources),
            "actions": ["act"],
            "confidence": confidence,
        },
    }


@pytest.fixture
def tiny_engine(tmp_path):
    return make_engine(tmp_path=tmp_path)
