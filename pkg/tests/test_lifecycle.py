import json

import pytest

from opsloop.errors import NotFound, ReasonerUnavailable
from opsloop.lifecycle import GenerationFailure, UpdateFailure, load_capability
from opsloop.reasoner import RequestKind
from opsloop.skills import Skill

from conftest import make_engine, make_event, skill_doc


def explicit_skill_outcome(doc):
    return {"outcome": "skill", "skill": doc}


class TestValidate:
    def test_happy_path(self, tmp_path):
        engine = make_engine(tmp_path=tmp_path)
        skill = Skill.from_dict(skill_doc())
        report = engine.lifecycle.validate(skill, make_event())
        assert report.verdict == "valid"

    def test_missing_expected_field(self, tmp_path):
        engine = make_engine(tmp_path=tmp_path)
        doc = skill_doc(
            source_calls=[
                {
                    "source_id": "metric:recall:latency_p99",
                    "params": {},
                    "window": {"minutes_before": 30, "minutes_after": 5},
                    "mandatory": True,
                    "expected_fields": ["ts", "value", "p99_latency"],
                }
            ]
        )
        report = engine.lifecycle.validate(Skill.from_dict(doc), make_event())
        assert report.verdict == "invalid"
        assert report.results[0].missing_fields == ["p99_latency"]

    def test_optional_failure_is_non_fatal(self, tmp_path):
        engine = make_engine(tmp_path=tmp_path)
        doc = skill_doc(
            source_calls=[
                {
                    "source_id": "metric:recall:latency_p99",
                    "params": {},
                    "window": {"minutes_before": 30, "minutes_after": 5},
                    "mandatory": True,
                    "expected_fields": ["ts", "value"],
                },
                {
                    "source_id": "metric:ghost:latency_p99",
                    "params": {},
                    "window": {"minutes_before": 30, "minutes_after": 5},
                    "mandatory": False,
                    "expected_fields": ["ts", "value"],
                },
            ]
        )
        report = engine.lifecycle.validate(Skill.from_dict(doc), make_event())
        assert report.verdict == "valid"
        statuses = {r.call_id: r.status for r in report.results}
        assert statuses["metric:ghost:latency_p99"] == "error"

    def test_unresolvable_placeholder_is_call_failure_not_exception(self, tmp_path):
        engine = make_engine(tmp_path=tmp_path)
        doc = skill_doc(
            source_calls=[
                {
                    "source_id": "metric:recall:latency_p99",
                    "params": {"shard": "{event.payload.shard}"},
                    "window": {"minutes_before": 30, "minutes_after": 5},
                    "mandatory": True,
                    "expected_fields": ["ts", "value"],
                }
            ]
        )
        report = engine.lifecycle.validate(Skill.from_dict(doc), make_event())
        assert report.verdict == "invalid"
        assert "shard" in report.results[0].error

    def test_validation_purity(self, tmp_path):
        engine = make_engine(tmp_path=tmp_path)
        doc = skill_doc(
            knowledge_queries=[
                {"index": "kv", "key_parts": {"business": "{event.business}", "scenario": "alert"}, "top_k": 3, "mandatory": False},
                {"index": "vector", "query_text": "latency spike {event.module}", "top_k": 5, "mandatory": False},
            ]
        )
        from opsloop.knowledge import KnowledgeEntry

        engine.knowledge.put_entry(
            KnowledgeEntry(
                entry_id="e1",
                kind="definitive",
                key={"business": "ecom-search", "scenario": "alert"},
                text="triage rule",
            )
        )
        pool_before = engine.pool.snapshot()
        kb_before = engine.knowledge.snapshot()
        mem_before = engine.memory.snapshot()
        engine.lifecycle.validate(Skill.from_dict(doc), make_event())
        assert engine.pool.snapshot() == pool_before
        assert engine.knowledge.snapshot() == kb_before
        assert engine.memory.snapshot() == mem_before


class TestGenerate:
    def test_valid_on_first_attempt(self, tmp_path):
        engine = make_engine(tmp_path=tmp_path)
        skill = engine.lifecycle.generate(make_event(), case_ref="caseA")
        assert skill.meta.version == 1
        assert engine.pool.latest_version(skill.meta.skill_id) == 1
        assert len(engine.reasoner.calls(kind="generate_skill", case_ref="caseA")) == 1

    def test_invalid_twice_then_valid_threads_error_summaries(self, tmp_path):
        script = {
            "cases": {
                "caseA": {
                    "generate_skill": {
                        "sequence": [
                            {"outcome": "invalid_source"},
                            {"outcome": "invalid_field"},
                            {"outcome": "template"},
                        ]
                    }
                }
            }
        }
        engine = make_engine(script=script, tmp_path=tmp_path)

        seen_contexts = []
        original = engine.reasoner.backend.call

        def spy(request):
            if request.kind is RequestKind.GENERATE_SKILL:
                seen_contexts.append(list(request.context["error_summaries"]))
            return original(request)

        engine.reasoner.backend.call = spy
        skill = engine.lifecycle.generate(make_event(), case_ref="caseA")
        assert skill.meta.version == 1
        assert len(seen_contexts) == 3
        assert seen_contexts[0] == []
        assert len(seen_contexts[1]) == 1 and "__absent__" in seen_contexts[1][0]
        assert len(seen_contexts[2]) == 2 and "p99_latency" in seen_contexts[2][1]

    def test_exhaustion_returns_all_reports(self, tmp_path):
        script = {"cases": {"caseA": {"generate_skill": {"sequence": [{"outcome": "invalid_source"}]}}}}
        engine = make_engine(script=script, tmp_path=tmp_path)
        with pytest.raises(GenerationFailure) as err:
            engine.lifecycle.generate(make_event(), case_ref="caseA")
        assert len(err.value.reports) == 4
        assert len(engine.reasoner.calls(kind="generate_skill", case_ref="caseA")) == 4

    def test_reasoner_unavailable_propagates_without_consuming_retry(self, tmp_path):
        engine = make_engine(tmp_path=tmp_path)

        class Down:
            def call(self, request):
                raise ReasonerUnavailable("offline")

        engine.lifecycle.reasoner = Down()
        with pytest.raises(ReasonerUnavailable):
            engine.lifecycle.generate(make_event(), case_ref="caseA")

    def test_bounded_calls_property(self, tmp_path):
        for sequence, expected_calls in (
            ([{"outcome": "template"}], 1),
            ([{"outcome": "invalid_source"}, {"outcome": "template"}], 2),
            ([{"outcome": "invalid_source"}], 4),
        ):
            script = {"cases": {"caseA": {"generate_skill": {"sequence": sequence}}}}
            engine = make_engine(script=script, tmp_path=tmp_path)
            try:
                engine.lifecycle.generate(make_event(), case_ref="caseA")
            except GenerationFailure:
                pass
            n = len(engine.reasoner.calls(kind="generate_skill"))
            assert n == expected_calls
            assert n <= 4

    def test_reference_skills_exclude_exact_scenario(self, tmp_path):
        seeds = [
            skill_doc("exact", tags=("ecom-search", "recall", "alert")),
            skill_doc("related-1", tags=("ecom-search", "ranking", "alert")),
            skill_doc("related-2", tags=("ecom-search", "index", "alert", "availability")),
            skill_doc("far", tags=("video-feed", "player")),
        ]
        engine = make_engine(seed_skills=seeds, tmp_path=tmp_path)
        refs = engine.lifecycle.reference_skills(make_event())
        ids = [s.meta.skill_id for s in refs]
        assert "exact" not in ids
        assert len(ids) == 2
        assert ids[0] == "related-2"  # higher tag overlap wins

    def test_degraded_seed_generation_without_capability(self, tmp_path, caplog):
        engine = make_engine(tmp_path=tmp_path)  # no capabilities dir configured
        with caplog.at_level("INFO"):
            skill = engine.lifecycle.generate(make_event(), case_ref="caseA")
        assert skill.meta.version == 1
        assert any("degraded-seed" in r.message for r in caplog.records)

    def test_capability_loaded_from_directory(self, tmp_path):
        caps = tmp_path / "capabilities"
        caps.mkdir()
        (caps / "ecom-search--recall--alert.json").write_text(
            json.dumps(
                {
                    "scenario": {"business": "ecom-search", "module": "recall", "kind": "alert", "metric_family": None},
                    "relevant_sources": [{"source_id": "metric:recall:latency_p99", "rationale": "primary"}],
                    "relevant_knowledge": [],
                    "relationships": ["check changes first"],
                }
            )
        )
        cap = load_capability(caps, make_event())
        assert cap is not None and cap.module == "recall"
        assert load_capability(caps, make_event(module="ranking")) is None


class TestUpdate:
    def _seeded_engine(self, tmp_path, script=None):
        return make_engine(seed_skills=[skill_doc()], tmp_path=tmp_path, script=script)

    def test_schema_update_leaves_prompt_byte_identical(self, tmp_path):
        script = {
            "cases": {
                "fix-1": {
                    "update_skill": {
                        "sequence": [
                            {
                                "outcome": "patch",
                                "patch": {
                                    "target": "load_data_schema",
                                    "add_source_call": {
                                        "source_id": "log:recall",
                                        "params": {},
                                        "window": {"minutes_before": 15, "minutes_after": 0},
                                        "mandatory": False,
                                        "expected_fields": ["ts", "level", "message"],
                                    },
                                },
                            }
                        ]
                    }
                }
            }
        }
        engine = self._seeded_engine(tmp_path, script=script)
        old = engine.pool.get("ecom-search-recall-alert")
        updated = engine.lifecycle.update(
            "ecom-search-recall-alert", "pull the logs too", "load_data_schema", make_event(), case_ref="fix-1"
        )
        assert updated.meta.version == 2
        assert updated.component_bytes("prompt") == old.component_bytes("prompt")
        assert len(updated.load_data_schema.source_calls) == 2

    def test_prompt_update_leaves_schema_byte_identical(self, tmp_path):
        engine = self._seeded_engine(tmp_path)  # builtin default: no-op patch on prompt
        old = engine.pool.get("ecom-search-recall-alert")
        updated = engine.lifecycle.update(
            "ecom-search-recall-alert", "reason more carefully", "prompt", make_event(), case_ref="fix-2"
        )
        assert updated.meta.version == 2
        assert updated.component_bytes("load_data_schema") == old.component_bytes("load_data_schema")

    def test_non_target_violation_counts_as_failed_iteration(self, tmp_path):
        script = {
            "cases": {
                "fix-3": {
                    "update_skill": {
                        "sequence": [{"outcome": "violate_isolation"}, {"outcome": "patch", "patch": {}}]
                    }
                }
            }
        }
        engine = self._seeded_engine(tmp_path, script=script)
        updated = engine.lifecycle.update(
            "ecom-search-recall-alert", "fix it", "prompt", make_event(), case_ref="fix-3"
        )
        assert updated.meta.version == 2
        notes = [e for e in engine.reasoner.entries if e.outcome == "note" and e.kind == "update_skill:validation"]
        assert any("non-targeted component modified" in n.detail.get("error_summary", "") for n in notes)

    def test_three_invalid_candidates_exhaust(self, tmp_path):
        script = {"cases": {"fix-4": {"update_skill": {"sequence": [{"outcome": "invalid_source"}]}}}}
        engine = self._seeded_engine(tmp_path, script=script)
        with pytest.raises(UpdateFailure) as err:
            engine.lifecycle.update("ecom-search-recall-alert", "fix", "load_data_schema", make_event(), case_ref="fix-4")
        assert len(err.value.reports) == 3
        assert len(engine.reasoner.calls(kind="update_skill", case_ref="fix-4")) == 3

    def test_unknown_skill(self, tmp_path):
        engine = make_engine(tmp_path=tmp_path)
        with pytest.raises(NotFound):
            engine.lifecycle.update("ghost", "fb", "prompt", make_event())

    def test_transcripts_persisted_for_audit(self, tmp_path):
        engine = make_engine(tmp_path=tmp_path, transcripts_dir=str(tmp_path / "transcripts"))
        engine.lifecycle.generate(make_event(), case_ref="caseT")
        files = list((tmp_path / "transcripts").glob("generate-*.json"))
        assert len(files) == 1
        doc = json.loads(files[0].read_text())
        assert doc["ref"] == "caseT"
        assert doc["reports"][0]["verdict"] == "valid"

    def test_every_stored_version_validated_at_write(self, tmp_path):
        # an update whose candidate never validates must not create a version
        script = {"cases": {"fix-5": {"update_skill": {"sequence": [{"outcome": "invalid_source"}]}}}}
        engine = self._seeded_engine(tmp_path, script=script)
        with pytest.raises(UpdateFailure):
            engine.lifecycle.update("ecom-search-recall-alert", "fb", "load_data_schema", make_event(), case_ref="fix-5")
        assert engine.pool.latest_version("ecom-search-recall-alert") == 1
