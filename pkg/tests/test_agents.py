import pytest

from opsloop.agents import PROFILES, compose_prompt, dispatch
from opsloop.core import EventKind, MetricFamily, RetrievedData, Verdict
from opsloop.errors import CompositionError, ReasonerUnavailable
from opsloop.skills import Skill

from conftest import diag_payload, make_engine, make_event, make_fault, make_spec, skill_doc


class TestDispatch:
    def test_release_profile(self):
        profile = dispatch(make_event(kind="release", metric_family=None))
        assert profile.agent_kind is EventKind.RELEASE
        assert profile.sub_profile is None
        assert set(profile.verdict_vocabulary) == {Verdict.PROCEED, Verdict.ROLLBACK}

    def test_alert_coredump_sub_profile(self):
        profile = dispatch(make_event(kind="alert", metric_family="coredump"))
        assert profile.agent_kind is EventKind.ALERT
        assert profile.sub_profile is MetricFamily.COREDUMP

    def test_inspection_without_family_uses_generic_profile(self):
        profile = dispatch(make_event(kind="inspection", metric_family=None))
        assert profile.agent_kind is EventKind.INSPECTION
        assert profile.sub_profile is None

    def test_sub_profile_purity(self):
        # sub-profiles of one agent kind differ only in scenario prompt text,
        # never in verdict vocabulary or conservative default
        for kind in ("inspection", "alert"):
            group = [p for (k, _), p in PROFILES.items() if k == kind]
            assert len({p.verdict_vocabulary for p in group}) == 1
            assert len({p.conservative_verdict for p in group}) == 1
            assert len({p.scenario_prompt for p in group}) == len(group)


class TestRunPipeline:
    def test_rca_matches_injected_ground_truth(self, tmp_path):
        # bad_release on recall; scripted diagnose points at the change the
        # generator actually planted in the change feed
        spec = make_spec(faults=[make_fault(module="recall", kind="bad_release", change_ref="rel-777")])
        script = {
            "cases": {
                "case-1": {
                    "diagnose": {
                        "sequence": [
                            diag_payload("page", module="recall", change_ref="rel-777", sources=["changes:ecom-search"])
                        ]
                    }
                }
            }
        }
        engine = make_engine(spec=spec, script=script, tmp_path=tmp_path)
        case = engine.run_event(make_event(), case_ref="case-1")
        assert case.diagnosis.verdict is Verdict.PAGE
        assert case.diagnosis.root_cause.module == "recall"
        assert case.diagnosis.root_cause.change_ref == "rel-777"
        assert any(e.source_id == "changes:ecom-search" for e in case.diagnosis.evidence)

    def test_unmatched_event_generates_skill_and_case_lists_it(self, tmp_path):
        engine = make_engine(tmp_path=tmp_path)
        assert engine.pool.size() == 0
        case = engine.run_event(make_event(), case_ref="case-1")
        assert engine.pool.size() == 1
        assert len(case.skill_ids) == 1
        assert case.skill_ids[0][1] == 1

    def test_generation_failure_degrades_but_records_case(self, tmp_path):
        script = {"defaults": {"generate_skill": {"sequence": [{"outcome": "invalid_source"}]}}}
        engine = make_engine(script=script, tmp_path=tmp_path)
        case = engine.run_event(make_event(), case_ref="case-1")
        assert "generation-failed" in case.markers
        assert case.skill_ids == ()
        assert case.diagnosis.verdict is Verdict.SUPPRESS  # scripted default still diagnoses

    def test_mandatory_source_failure_forces_conservative_verdict(self, tmp_path):
        doc = skill_doc(
            source_calls=[
                {
                    "source_id": "metric:recall:latency_p99",
                    "params": {},
                    # window entirely before scenario start -> status empty
                    "window": {"minutes_before": 10_000, "minutes_after": -9_000},
                    "mandatory": True,
                    "expected_fields": ["ts", "value"],
                }
            ],
            steps=["Inspect {data.metric:recall:latency_p99}."],
        )
        engine = make_engine(seed_skills=[doc], tmp_path=tmp_path)
        case = engine.run_event(make_event(at_hours=2), case_ref="case-1")
        assert "retrieval-failure" in case.markers
        assert case.diagnosis.verdict is Verdict.PAGE  # alert conservative default
        assert case.diagnosis.root_cause.module == "recall"

    def test_reasoner_unavailable_forces_conservative_path(self, tmp_path):
        engine = make_engine(seed_skills=[skill_doc()], tmp_path=tmp_path)

        class Down:
            def call(self, request):
                raise ReasonerUnavailable("offline")

        engine.runtime.reasoner = Down()
        for kind, family, expected in (
            ("alert", "availability", Verdict.PAGE),
            ("inspection", None, Verdict.AT_RISK),
            ("release", None, Verdict.ROLLBACK),
        ):
            case = engine.runtime.run(make_event(event_id=f"e-{kind}", kind=kind, metric_family=family))
            assert case.diagnosis.verdict is expected
            assert "reasoner-unavailable" in case.markers

    def test_out_of_vocabulary_verdict_normalized_conservatively(self, tmp_path):
        script = {"cases": {"case-1": {"diagnose": {"sequence": [diag_payload("healthy")]}}}}
        engine = make_engine(script=script, seed_skills=[skill_doc()], tmp_path=tmp_path)
        case = engine.run_event(make_event(), case_ref="case-1")  # alert cannot say healthy
        assert "verdict-out-of-vocabulary" in case.markers
        assert case.diagnosis.verdict is Verdict.PAGE

    def test_union_deduplicates_identical_calls(self, tmp_path):
        shared_call = {
            "source_id": "metric:recall:latency_p99",
            "params": {},
            "window": {"minutes_before": 30, "minutes_after": 5},
            "mandatory": True,
            "expected_fields": ["ts", "value"],
        }
        log_call = {
            "source_id": "log:recall",
            "params": {},
            "window": {"minutes_before": 15, "minutes_after": 0},
            "mandatory": False,
            "expected_fields": ["ts", "level", "message"],
        }
        seeds = [
            skill_doc("s-one", tags=("ecom-search", "recall", "alert", "availability"), source_calls=[shared_call]),
            skill_doc("s-two", tags=("ecom-search", "recall"), source_calls=[dict(shared_call), log_call]),
        ]
        engine = make_engine(seed_skills=seeds, tmp_path=tmp_path)
        engine.simulator.query_log.clear()
        case = engine.run_event(make_event(), case_ref="case-1")
        queried = [q["source_id"] for q in engine.simulator.query_log]
        assert queried.count("metric:recall:latency_p99") == 1  # deduplicated union
        assert queried.count("log:recall") == 1
        assert {i.source_id for i in case.retrieved_data.items} == {"metric:recall:latency_p99", "log:recall"}

    def test_every_event_yields_a_case(self, tmp_path):
        engine = make_engine(tmp_path=tmp_path)
        for i, (kind, family) in enumerate([("alert", "gmv"), ("inspection", None), ("release", None)]):
            case = engine.run_event(make_event(event_id=f"t-{i}", kind=kind, metric_family=family))
            assert case is not None
            assert engine.memory.get(case.case_id) is case

    def test_evidence_closure_filter(self, tmp_path):
        script = {
            "cases": {
                "case-1": {
                    "diagnose": {
                        "sequence": [diag_payload("page", module="recall", sources=["metric:never:queried"])]
                    }
                }
            }
        }
        engine = make_engine(script=script, seed_skills=[skill_doc()], tmp_path=tmp_path)
        case = engine.run_event(make_event(), case_ref="case-1")
        assert all(e.source_id in case.retrieved_data.source_ids() for e in case.diagnosis.evidence)


class TestComposePrompt:
    def _compose(self, engine, skills, event, knowledge=(), working=()):
        scored = [(s, 4 - i) for i, s in enumerate(skills)]
        data, _ = engine.runtime._execute_source_calls(skills, event)
        return compose_prompt(dispatch(event), scored, data, list(knowledge), list(working), event)

    def test_degenerate_zero_skills(self, tmp_path):
        engine = make_engine(tmp_path=tmp_path)
        event = make_event()
        prompt = compose_prompt(dispatch(event), [], RetrievedData.empty((event.timestamp, event.timestamp)), [], [], event)
        assert "No skill matched this event" in prompt
        assert "# Scenario" in prompt

    def test_skill_blocks_in_score_order(self, tmp_path):
        engine = make_engine(tmp_path=tmp_path)
        hi = Skill.from_dict(skill_doc("hi-score", tags=("ecom-search", "recall", "alert", "availability")))
        lo = Skill.from_dict(skill_doc("lo-score", tags=("ecom-search", "recall")))
        prompt = self._compose(engine, [hi, lo], make_event())
        assert prompt.index("hi-score") < prompt.index("lo-score")

    def test_byte_identical_for_same_inputs(self, tmp_path):
        engine = make_engine(tmp_path=tmp_path)
        skill = Skill.from_dict(skill_doc())
        a = self._compose(engine, [skill], make_event())
        b = self._compose(engine, [skill], make_event())
        assert a == b

    def test_unresolved_event_placeholder_raises_composition_error(self, tmp_path):
        engine = make_engine(tmp_path=tmp_path)
        doc = skill_doc(steps=["Look at {event.payload.missing_key} readings."])
        with pytest.raises(CompositionError) as err:
            self._compose(engine, [Skill.from_dict(doc)], make_event())
        assert "missing_key" in str(err.value)

    def test_size_cap_truncates_lowest_relevance_first(self, tmp_path):
        from opsloop.core import KnowledgeSnapshot

        engine = make_engine(tmp_path=tmp_path)
        skill = Skill.from_dict(skill_doc())
        knowledge = [
            KnowledgeSnapshot(entry_id=f"e{i}", kind="semantic", text="x" * 400) for i in range(100)
        ]
        prompt = self._compose(engine, [skill], make_event(), knowledge=knowledge)
        assert len(prompt) <= 32_000
        assert "[truncated: knowledge omitted" in prompt
        assert "# Scenario" in prompt  # scenario block survives
