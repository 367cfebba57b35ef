import json

import pytest
from hypothesis import given, strategies as st

from opsloop.core import (
    CaseRecord,
    Diagnosis,
    Evidence,
    Feedback,
    KnowledgeSnapshot,
    OperationalEvent,
    RetrievedData,
    RetrievedItem,
    RootCause,
    SourceStatus,
    Verdict,
    canonical_dumps,
    format_instant,
    normalize_tag,
    parse_instant,
)

from opsloop.errors import InvalidTag, ValidationFailure

from conftest import START, make_event


class TestNormalizeTag:
    def test_definitional(self):
        assert normalize_tag("Recall Module") == "recall-module"

    def test_idempotent_example(self):
        assert normalize_tag("recall-module") == "recall-module"

    def test_trims(self):
        assert normalize_tag("  GMV  ") == "gmv"

    def test_empty_raises(self):
        with pytest.raises(InvalidTag):
            normalize_tag("   ")

    @given(st.text(max_size=40))
    def test_idempotence_property(self, raw):
        try:
            once = normalize_tag(raw)
        except InvalidTag:
            return
        assert normalize_tag(once) == once


class TestEventInvariants:
    def test_alert_requires_metric_family(self):
        with pytest.raises(ValidationFailure):
            make_event(kind="alert", metric_family=None)

    def test_release_requires_version(self):
        with pytest.raises(ValidationFailure):
            make_event(kind="release", metric_family=None, payload={"author": "x"})

    def test_tags_normalized_at_construction(self):
        ev = make_event(business=" Ecom Search ", module="RECALL")
        assert ev.business == "ecom-search"
        assert ev.module == "recall"

    def test_tag_set(self):
        ev = make_event()
        assert ev.tag_set() == {"ecom-search", "recall", "alert", "availability"}


class TestInstants:
    def test_round_trip(self):
        s = "2026-01-02T03:04:05.678Z"
        assert format_instant(parse_instant(s)) == s

    def test_rejects_non_canonical(self):
        with pytest.raises(ValidationFailure):
            parse_instant("2026-01-02T03:04:05Z")


def _full_case() -> CaseRecord:
    event = make_event()
    data = RetrievedData(
        items=(
            RetrievedItem(
                source_id="metric:recall:latency_p99",
                params_used={"agg": "raw"},
                rows=({"ts": "2026-01-01T05:00:00.000Z", "value": 401.5},),
                status=SourceStatus.OK,
            ),
        ),
        fetch_window=(event.timestamp, event.timestamp),
    )
    diagnosis = Diagnosis(
        verdict=Verdict.PAGE,
        root_cause=RootCause(module="recall", change_ref="rel-1", description="spike"),
        evidence=(Evidence(source_id="metric:recall:latency_p99", excerpt="value=401.5", relevance_note="3x"),),
        actions=("rollback rel-1",),
        confidence=0.875,
    )
    return CaseRecord(
        case_id="case-1",
        event=event,
        skill_ids=(("ecom-search-recall-alert", 2),),
        retrieved_data=data,
        retrieved_knowledge=(KnowledgeSnapshot(entry_id="hb-1", kind="definitive", text="check changes"),),
        diagnosis=diagnosis,
        created_at=event.timestamp,
        feedback=Feedback(
            feedback_id="fb-1", case_id="case-1", author="sre", text="looks right", submitted_at=event.timestamp
        ),
        markers=("something",),
    )


_tag = st.text(alphabet="abcdefgh-", min_size=1, max_size=8).filter(lambda s: s.strip("-"))
_verdicts_by_kind = {"alert": ["suppress", "page"], "inspection": ["healthy", "at_risk"], "release": ["proceed", "rollback"]}


@st.composite
def case_records(draw):
    kind = draw(st.sampled_from(["alert", "inspection", "release"]))
    family = draw(st.sampled_from(["gmv", "capacity", "availability", "coredump"])) if kind == "alert" else None
    payload = {"version": "rel-1"} if kind == "release" else {"rule_id": "r"}
    event = OperationalEvent(
        event_id=draw(st.text(alphabet="abc123", min_size=1, max_size=6)),
        kind=kind,
        business=draw(_tag),
        module=draw(_tag),
        metric_family=family,
        timestamp=START,
        payload=payload,
    )
    n_items = draw(st.integers(min_value=0, max_value=3))
    items = tuple(
        RetrievedItem(
            source_id=f"src-{i}",
            params_used={"p": draw(st.integers(0, 9))},
            rows=tuple({"ts": "2026-01-01T00:00:00.000Z", "value": draw(st.floats(0, 100, allow_nan=False))} for _ in range(draw(st.integers(0, 2)))),
            status=draw(st.sampled_from(list(SourceStatus))),
        )
        for i in range(n_items)
    )
    data = RetrievedData(items=items, fetch_window=(START, START))
    verdict = draw(st.sampled_from(_verdicts_by_kind[kind]))
    evidence = tuple(
        Evidence(source_id=item.source_id, excerpt=draw(st.text(max_size=10)), relevance_note="n")
        for item in items
        if draw(st.booleans())
    )
    root = RootCause(module=event.module, change_ref=None, description="d") if verdict in ("page", "at_risk") else None
    diagnosis = Diagnosis(
        verdict=verdict,
        root_cause=root,
        evidence=evidence,
        actions=tuple(draw(st.lists(st.text(max_size=8), max_size=2))),
        confidence=draw(st.floats(0, 1, allow_nan=False)),
    )
    return CaseRecord(
        case_id=draw(st.text(alphabet="abc-123", min_size=1, max_size=10)),
        event=event,
        skill_ids=tuple((f"sk-{i}", draw(st.integers(1, 5))) for i in range(draw(st.integers(0, 2)))),
        retrieved_data=data,
        retrieved_knowledge=(KnowledgeSnapshot(entry_id="k1", kind="semantic", text="t"),) if draw(st.booleans()) else (),
        diagnosis=diagnosis,
        created_at=START,
        markers=tuple(draw(st.lists(st.sampled_from(["generation-failed", "knowledge-disabled"]), max_size=2))),
    )


class TestCaseRecordRoundTrip:
    def test_bit_exact(self):
        case = _full_case()
        doc = canonical_dumps(case.to_dict())
        rebuilt = CaseRecord.from_dict(json.loads(doc))
        assert canonical_dumps(rebuilt.to_dict()) == doc

    @given(case_records())
    def test_bit_exact_property(self, case):
        doc = canonical_dumps(case.to_dict())
        rebuilt = CaseRecord.from_dict(json.loads(doc))
        assert canonical_dumps(rebuilt.to_dict()) == doc

    def test_evidence_closure_enforced(self):
        case = _full_case()
        bad = case.to_dict()
        bad["diagnosis"]["evidence"][0]["source_id"] = "metric:never:retrieved"
        with pytest.raises(ValidationFailure):
            CaseRecord.from_dict(bad)


class TestFeedbackTransitions:
    def test_text_non_empty(self):
        with pytest.raises(ValidationFailure):
            Feedback(feedback_id="f", case_id="c", author="a", text="  ", submitted_at=START)

    def test_classification_set_exactly_once(self):
        fb = Feedback(feedback_id="f", case_id="c", author="a", text="t", submitted_at=START)
        fb.resolve("confirmation")
        with pytest.raises(ValidationFailure):
            fb.resolve("flawed_reasoning")


class TestDiagnosis:
    def test_confidence_bounds(self):
        with pytest.raises(ValidationFailure):
            Diagnosis(verdict=Verdict.PAGE, confidence=1.5)
