"""Record gateway payloads into frontend/fixtures/ for the console contract
tests. Run from the repo root:

    python scripts/record_console_fixtures.py
"""

from __future__ import annotations

import json
import sys
from datetime import timedelta
from pathlib import Path

from fastapi.testclient import TestClient

sys.path.insert(0, str(Path(__file__).parent.parent / "tests"))

from conftest import diag_payload, make_engine, make_event, skill_doc  # noqa: E402

from opsloop.bundled import engine_factory, load_bundle  # noqa: E402
from opsloop.evaluation import run_drift_experiment  # noqa: E402
from opsloop.gateway import create_app  # noqa: E402

OUT = Path(__file__).parent.parent / "frontend" / "fixtures"


def record(name: str, payload) -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / f"{name}.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(f"recorded {name}.json")


def main() -> int:
    tmp = Path("/tmp/console-fixtures-seed")
    tmp.mkdir(exist_ok=True)
    script = {
        "defaults": {
            "classify_feedback": {"sequence": [{"outcome": "classification", "classification": "flawed_reasoning"}]},
            "update_skill": {
                "sequence": [{"outcome": "patch", "patch": {"append_step": "Weigh the change feed before concluding."}}]
            },
            "distill": {"sequence": [{"outcome": "entries", "entries": []}]},
        },
        "cases": {
            "ev-1": {
                "diagnose": {
                    "sequence": [
                        {
                            "outcome": "diagnosis",
                            "diagnosis": {
                                "verdict": "page",
                                "root_cause": {
                                    "module": "recall",
                                    "change_ref": "rel-777",
                                    "description": "latency spike following deploy rel-777",
                                },
                                "evidence_sources": ["metric:recall:latency_p99", "log:recall"],
                                "actions": ["roll back rel-777", "page the recall on-call"],
                                "confidence": 0.87,
                            },
                        }
                    ]
                }
            },
            "ev-degraded": {"generate_skill": {"sequence": [{"outcome": "invalid_source"}]}},
        },
    }
    log_call = {
        "source_id": "log:recall",
        "params": {},
        "window": {"minutes_before": 15, "minutes_after": 5},
        "mandatory": False,
        "expected_fields": ["ts", "level", "module", "message"],
    }
    base = skill_doc()
    base["load_data_schema"]["source_calls"].append(log_call)
    engine = make_engine(script=script, seed_skills=[base], tmp_path=tmp)
    from opsloop.knowledge import KnowledgeEntry

    engine.knowledge.put_entry(
        KnowledgeEntry(
            entry_id="hb-recall-ranking",
            kind="relational",
            key={"subject": "recall", "object": "ranking", "metric": "latency_p99"},
            text="Recall latency degradation propagates into ranking tail latency within minutes.",
            created_at=engine.spec.start,
        )
    )
    engine.knowledge.put_entry(
        KnowledgeEntry(
            entry_id="hb-coredump",
            kind="semantic",
            text="Coredump bursts usually follow a bad deploy; check the change feed first.",
            created_at=engine.spec.start,
        )
    )
    client = TestClient(create_app(engine), raise_server_exceptions=False)

    case_id = client.post("/events", json=make_event().to_dict()).json()["case_id"]
    record("case_detail", client.get(f"/cases/{case_id}").json())

    degraded_event = make_event(event_id="ev-degraded", module="front-serve", at_hours=6)
    degraded_id = client.post("/events", json=degraded_event.to_dict()).json()["case_id"]
    record("case_degraded", client.get(f"/cases/{degraded_id}").json())

    record("case_list", client.get("/cases", params={"limit": 50}).json())

    feedback = client.post(
        f"/cases/{case_id}/feedback",
        json={"author": "sre-oncall", "text": "The verdict is right but the reasoning ignored the deploy timeline."},
    )
    record("feedback_response", feedback.json())

    conflict = client.post(f"/cases/{case_id}/feedback", json={"author": "sre-oncall", "text": "second thoughts"})
    assert conflict.status_code == 409
    record("feedback_conflict", conflict.json())

    diff_link = feedback.json()["skill_diff_link"]
    record("skill_diff", client.get(diff_link).json())
    record("skills_list", client.get("/skills").json())
    record(
        "knowledge_vector",
        client.get("/knowledge/search", params={"mode": "vector", "q": "coredump deploy", "top_k": 5}).json(),
    )
    record(
        "knowledge_kkv",
        client.get(
            "/knowledge/search",
            params={"mode": "kkv", "subject": "recall", "object": "ranking", "metric": "latency_p99"},
        ).json(),
    )
    record("health", client.get("/health").json())
    record("api_error_not_found", client.get("/cases/ghost").json())

    bundle = load_bundle("bundled-13day")
    on = run_drift_experiment(engine_factory(bundle, "full", seed=3), days=13, feedback_enabled=True, seed=3)
    off = run_drift_experiment(engine_factory(bundle, "full", seed=3), days=13, feedback_enabled=False, seed=3)
    record("drift_reports", {"feedback_on": on.to_dict(), "feedback_off": off.to_dict()})
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
