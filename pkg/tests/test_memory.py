from datetime import timedelta

import pytest

from opsloop.core import CaseRecord, Diagnosis, Feedback, RetrievedData, Verdict
from opsloop.errors import Conflict, NotFound, ReasonerUnavailable
from opsloop.knowledge import KnowledgeBase
from opsloop.memory import CaseMemory, MemoryConfig, working_memory_score
from opsloop.reasoner import MockReasoner, MockScript

from conftest import START, make_event


def make_case(case_id, business="ecom-search", module="recall", kind="alert", at_hours=1.0, knowledge=()):
    event = make_event(
        event_id=f"ev-{case_id}",
        kind=kind,
        business=business,
        module=module,
        metric_family="availability" if kind == "alert" else None,
        at_hours=at_hours,
    )
    return CaseRecord(
        case_id=case_id,
        event=event,
        skill_ids=(),
        retrieved_data=RetrievedData.empty((event.timestamp, event.timestamp)),
        retrieved_knowledge=tuple(knowledge),
        diagnosis=Diagnosis(verdict=Verdict.SUPPRESS if kind == "alert" else Verdict.HEALTHY),
        created_at=event.timestamp,
    )


def memory_with(config=None, knowledge=None, reasoner=None, clock_at=None):
    return CaseMemory(
        config=config or MemoryConfig(),
        knowledge=knowledge,
        reasoner=reasoner,
        clock=lambda: clock_at or START + timedelta(days=1),
    )


class TestWriteAndWindow:
    def test_round_trip(self):
        mem = memory_with()
        case = make_case("c1")
        mem.write_case(case)
        assert mem.get("c1") is case

    def test_duplicate_conflict(self):
        mem = memory_with()
        mem.write_case(make_case("c1"))
        with pytest.raises(Conflict):
            mem.write_case(make_case("c1"))

    def test_window_cases_eviction(self):
        mem = memory_with(config=MemoryConfig(window_cases=500, window_days=365, working_memory_k=5))
        for i in range(501):
            mem.write_case(make_case(f"c{i:04d}", at_hours=i / 60))
        assert mem.size() == 500
        with pytest.raises(NotFound):
            mem.get("c0000")

    def test_window_days_eviction(self):
        mem = memory_with(config=MemoryConfig(window_cases=10_000, window_days=7, working_memory_k=5))
        mem.write_case(make_case("old", at_hours=0))
        mem.write_case(make_case("mid", at_hours=24))
        # next write is 7 days + 1h after "old": only "old" falls outside
        mem.write_case(make_case("new", at_hours=7 * 24 + 1))
        assert mem.size() == 2
        with pytest.raises(NotFound):
            mem.get("old")

    def test_archive_keeps_evicted(self, tmp_path):
        archive = tmp_path / "cases.log"
        mem = CaseMemory(config=MemoryConfig(window_cases=2, window_days=365, working_memory_k=5), archive_path=str(archive))
        for i in range(4):
            mem.write_case(make_case(f"c{i}", at_hours=i))
        lines = [l for l in archive.read_text().splitlines() if l]
        assert len(lines) == 4
        assert mem.size() == 2


class TestWorkingMemory:
    def brute_force(self, event, cases, k):
        # independent oracle: business bit required, rank by 3-bit score,
        # newest first on ties
        scored = [(working_memory_score(event, c), c) for c in cases]
        scored = [(s, c) for s, c in scored if s & 4]
        scored.sort(key=lambda t: (-t[0], -t[1].created_at.timestamp(), t[1].case_id))
        return [c.case_id for _, c in scored[:k]]

    def test_empty_store(self):
        assert memory_with().retrieve_working_memory(make_event(), 5) == []

    def test_same_module_beats_other_business(self):
        mem = memory_with(config=MemoryConfig(window_cases=100, window_days=365, working_memory_k=5))
        for i in range(3):
            mem.write_case(make_case(f"same-{i}", at_hours=i + 1))
        for i in range(10):
            mem.write_case(make_case(f"other-{i}", business="video-feed", module="player", at_hours=i + 1))
        got = [c.case_id for c in mem.retrieve_working_memory(make_event(at_hours=20), 5)]
        assert sorted(got) == ["same-0", "same-1", "same-2"]

    def test_tie_break_newer_first(self):
        mem = memory_with()
        mem.write_case(make_case("older", at_hours=1))
        mem.write_case(make_case("newer", at_hours=2))
        got = [c.case_id for c in mem.retrieve_working_memory(make_event(at_hours=3), 2)]
        assert got == ["newer", "older"]

    def test_matches_brute_force(self):
        mem = memory_with(config=MemoryConfig(window_cases=1000, window_days=365, working_memory_k=5))
        cases = []
        specs = [
            ("ecom-search", "recall", "alert"),
            ("ecom-search", "ranking", "alert"),
            ("ecom-search", "recall", "inspection"),
            ("video-feed", "recall", "alert"),
            ("video-feed", "player", "release"),
        ]
        for i in range(40):
            b, m, k = specs[i % len(specs)]
            case = make_case(f"c{i:02d}", business=b, module=m, kind=k, at_hours=i * 0.5)
            cases.append(case)
            mem.write_case(case)
        event = make_event(at_hours=30)
        for k in (1, 3, 5, 10):
            got = [c.case_id for c in mem.retrieve_working_memory(event, k)]
            assert got == self.brute_force(event, cases, k)

    def test_zero_score_excluded(self):
        mem = memory_with()
        mem.write_case(make_case("unrelated", business="video-feed", module="player", kind="release"))
        assert mem.retrieve_working_memory(make_event(), 5) == []


class TestDistill:
    def script_reasoner(self, entries):
        return MockReasoner(
            MockScript({"defaults": {"distill": {"sequence": [{"outcome": "entries", "entries": entries}]}}})
        )

    def test_scripted_two_entries(self):
        kb = KnowledgeBase(clock=lambda: START)
        mem = memory_with(
            knowledge=kb,
            reasoner=self.script_reasoner(
                [
                    {"kind": "semantic", "text": "recall incidents often trace to index"},
                    {"kind": "relational", "key": {"subject": "index", "object": "recall", "metric": "latency_p99"}, "text": "index impacts recall latency"},
                ]
            ),
        )
        case = make_case("c1")
        mem.write_case(case)
        ids = mem.distill(case)
        assert len(ids) == 2
        assert all(kb.get(i) is not None for i in ids)
        assert all(kb.get(i).provenance == "distilled" for i in ids)

    def test_zero_entries_no_change(self):
        kb = KnowledgeBase(clock=lambda: START)
        mem = memory_with(knowledge=kb, reasoner=self.script_reasoner([]))
        case = make_case("c1")
        mem.write_case(case)
        before = kb.snapshot()
        assert mem.distill(case) == []
        assert kb.snapshot() == before

    def test_distilled_relational_retrievable_by_kkv(self):
        kb = KnowledgeBase(clock=lambda: START)
        mem = memory_with(
            knowledge=kb,
            reasoner=self.script_reasoner(
                [{"kind": "relational", "key": {"subject": "recall", "object": "ranking", "metric": "latency_p99"}, "text": "t"}]
            ),
        )
        case = make_case("c1")
        mem.write_case(case)
        ids = mem.distill(case)
        assert [e.entry_id for e in kb.query_kkv("recall", "ranking", "latency_p99")] == ids

    def test_distill_does_not_mutate_case(self):
        kb = KnowledgeBase(clock=lambda: START)
        mem = memory_with(knowledge=kb, reasoner=self.script_reasoner([{"kind": "semantic", "text": "x"}]))
        case = make_case("c1")
        mem.write_case(case)
        before = case.to_dict()
        mem.distill(case)
        assert case.to_dict() == before

    def test_transport_failure_retried_then_skipped(self):
        class Flaky:
            def __init__(self):
                self.calls = 0

            def call(self, request):
                self.calls += 1
                raise ReasonerUnavailable("down")

        flaky = Flaky()
        mem = memory_with(knowledge=KnowledgeBase(clock=lambda: START), reasoner=flaky)
        case = make_case("c1")
        mem.write_case(case)
        assert mem.distill(case) == []
        assert flaky.calls == 2


class TestFeedbackAttach:
    def test_single_transition(self):
        mem = memory_with()
        case = make_case("c1")
        mem.write_case(case)
        fb = Feedback(feedback_id="f1", case_id="c1", author="a", text="t", submitted_at=START)
        mem.attach_feedback("c1", fb)
        assert mem.get("c1").feedback is fb
        with pytest.raises(Conflict):
            mem.attach_feedback("c1", Feedback(feedback_id="f2", case_id="c1", author="a", text="t2", submitted_at=START))


class TestApplyCorrection:
    def test_correction_visible_in_working_memory_immediately(self):
        kb = KnowledgeBase(clock=lambda: START)
        mem = memory_with(knowledge=kb, clock_at=START + timedelta(hours=6))
        case = make_case("c1", at_hours=1)
        mem.write_case(case)
        corrected = mem.apply_correction("c1", {"statement": "recall CAN affect gmv", "contradicted_entry_ids": []})
        got = [c.case_id for c in mem.retrieve_working_memory(make_event(at_hours=7), 5)]
        assert got[0] == corrected.case_id
        assert corrected.correction_of == "c1"
        assert "knowledge-correction" in corrected.markers
        assert any("recall CAN affect gmv" in s.text for s in corrected.retrieved_knowledge)

    def test_contradicted_entry_tombstoned_only_at_consolidation(self):
        kb = KnowledgeBase(clock=lambda: START)
        from opsloop.knowledge import KnowledgeEntry

        kb.put_entry(
            KnowledgeEntry(
                entry_id="wrong-claim",
                kind="definitive",
                key={"business": "ecom-search", "scenario": "alert"},
                text="recall cannot affect gmv",
                created_at=START,
            )
        )
        mem = memory_with(knowledge=kb)
        from opsloop.core import KnowledgeSnapshot

        case = make_case("c1", knowledge=[KnowledgeSnapshot(entry_id="wrong-claim", kind="definitive", text="recall cannot affect gmv")])
        mem.write_case(case)
        mem.apply_correction("c1", {"statement": "recall CAN affect gmv", "contradicted_entry_ids": ["wrong-claim"]})
        # not tombstoned before consolidation
        assert [e.entry_id for e in kb.query_kv("ecom-search", "alert")] == ["wrong-claim"]
        kb.consolidate(START + timedelta(days=1))
        assert kb.query_kv("ecom-search", "alert") == []

    def test_missing_case(self):
        with pytest.raises(NotFound):
            memory_with().apply_correction("ghost", {"statement": "x"})
