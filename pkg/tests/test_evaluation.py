import json

import pytest

from opsloop.bundled import engine_factory, load_bundle
from opsloop.core import canonical_dumps
from opsloop.errors import DatasetError, DomainError, ScriptError
from opsloop.evaluation import (
    EvalCase,
    EvalDataset,
    GroundTruth,
    PassAtKReport,
    production_report,
    run_correction_rounds,
    run_drift_experiment,
    run_pass_at_k,
)

from conftest import diag_payload, make_engine, make_event, make_spec


def small_dataset(n_alert=4, n_insp=3):
    cases = []
    for i in range(n_alert):
        ev = make_event(event_id=f"a{i}", module="recall", at_hours=1 + i)
        cases.append(
            EvalCase(case_ref=f"alert-{i}", event=ev, ground_truth=GroundTruth("page", "recall"), scenario_kind="alert")
        )
    for i in range(n_insp):
        ev = make_event(event_id=f"i{i}", kind="inspection", metric_family=None, module="ranking", at_hours=10 + i)
        cases.append(
            EvalCase(case_ref=f"insp-{i}", event=ev, ground_truth=GroundTruth("healthy"), scenario_kind="inspection")
        )
    return EvalDataset(dataset_id="small", cases=cases)


def all_success_script():
    return {
        "defaults": {
            "generate_skill": {"sequence": [{"outcome": "template"}]},
            "distill": {"sequence": [{"outcome": "entries", "entries": []}]},
        },
        "cases": {
            **{f"alert-{i}": {"diagnose": {"sequence": [diag_payload("page", module="recall")]}} for i in range(4)},
            **{f"insp-{i}": {"diagnose": {"sequence": [diag_payload("healthy")]}} for i in range(3)},
        },
    }


def factory_with(script, tmp_path, **kw):
    def build():
        return make_engine(spec=make_spec(), script=script, tmp_path=tmp_path, **kw)

    return build


class TestPassAtK:
    def test_all_success_gives_100_percent_everywhere(self, tmp_path):
        report = run_pass_at_k(small_dataset(), factory_with(all_success_script(), tmp_path), k=5)
        assert report.counts("overall") == [7, 7, 7, 7, 7]
        assert report.percentages("overall") == ["100.0%"] * 5

    def test_monotone_non_decreasing_enforced(self):
        with pytest.raises(ValueError):
            PassAtKReport(
                dataset_id="x", mode="full", k=2, seed=0, kinds={"alert": {"total": 3, "cumulative": [2, 1]}}, per_case={}
            )

    def test_dataset_scenario_mismatch_raises(self, tmp_path):
        ds = small_dataset()
        bad = EvalDataset(
            dataset_id="bad",
            cases=ds.cases
            + [
                EvalCase(
                    case_ref="ghost",
                    event=make_event(event_id="g", module="recall", business="ecom-search", at_hours=1).from_dict(
                        {**make_event(event_id="g", at_hours=1).to_dict(), "module": "ghost-module"}
                    ),
                    ground_truth=GroundTruth("page", "ghost-module"),
                    scenario_kind="alert",
                )
            ],
        )
        with pytest.raises(DatasetError):
            run_pass_at_k(bad, factory_with(all_success_script(), tmp_path), k=1)

    def test_kind_mismatch_rejected(self):
        ev = make_event(event_id="x")
        with pytest.raises(DatasetError):
            EvalDataset(
                dataset_id="bad",
                cases=[EvalCase(case_ref="c", event=ev, ground_truth=GroundTruth("page"), scenario_kind="inspection")],
            )

    def test_duplicate_refs_rejected(self):
        ev = make_event(event_id="x")
        case = EvalCase(case_ref="c", event=ev, ground_truth=GroundTruth("page", "recall"), scenario_kind="alert")
        with pytest.raises(DatasetError):
            EvalDataset(dataset_id="bad", cases=[case, case])

    def test_temperature_threaded_to_reasoner(self, tmp_path):
        captured = []

        def factory():
            engine = make_engine(spec=make_spec(), script=all_success_script(), tmp_path=tmp_path)
            original = engine.reasoner.backend.call

            def spy(request):
                captured.append((request.kind.value, request.sampling.temperature))
                return original(request)

            engine.reasoner.backend.call = spy
            return engine

        run_pass_at_k(small_dataset(1, 0), factory, k=2)
        assert all(t == 0.3 for kind, t in captured if kind == "diagnose")

    def test_attempt_isolation_rolls_back_generated_skills(self, tmp_path):
        # case fails at attempt 1, passes at 2; each attempt regenerates
        script = all_success_script()
        script["cases"]["alert-0"] = {
            "diagnose": {"sequence": [diag_payload("suppress"), diag_payload("page", module="recall")]}
        }
        engines = []

        def factory():
            engine = make_engine(spec=make_spec(), script=script, tmp_path=tmp_path)
            engines.append(engine)
            return engine

        report = run_pass_at_k(small_dataset(1, 0), factory, k=5)
        assert report.per_case["alert-0"]["first_pass"] == 2
        engine = engines[0]
        assert engine.pool.size() == 0  # rolled back after each attempt
        gen_calls = engine.reasoner.calls(kind="generate_skill", case_ref="alert-0")
        assert len(gen_calls) == 2  # one generation per attempt


class TestCorrectionRounds:
    def test_zero_failed_cases_is_identity(self, tmp_path):
        ds = small_dataset()
        baseline = run_pass_at_k(ds, factory_with(all_success_script(), tmp_path), k=5)
        engines = []

        def factory():
            engine = make_engine(spec=make_spec(), script=all_success_script(), tmp_path=tmp_path)
            engines.append(engine)
            return engine

        report = run_correction_rounds(ds, [], 3, {"cases": {}}, factory, baseline=baseline)
        assert report.end_to_end.counts("overall") == [7, 7, 7]
        engine = engines[0]
        assert engine.reasoner.calls(kind="classify_feedback") == []  # no feedback submitted

    def test_script_missing_case_raises(self, tmp_path):
        ds = small_dataset()
        with pytest.raises(ScriptError):
            run_correction_rounds(ds, ["alert-0"], 2, {"cases": {}}, factory_with(all_success_script(), tmp_path))

    def test_unknown_failed_ref_raises(self, tmp_path):
        ds = small_dataset()
        with pytest.raises(DatasetError):
            run_correction_rounds(ds, ["ghost"], 2, {"cases": {"ghost": {}}}, factory_with(all_success_script(), tmp_path))


class TestDrift:
    def test_single_day_arms_equal(self):
        bundle = load_bundle("bundled-13day")
        on = run_drift_experiment(engine_factory(bundle, "full", seed=3), days=1, feedback_enabled=True, seed=3)
        off = run_drift_experiment(engine_factory(bundle, "full", seed=3), days=1, feedback_enabled=False, seed=3)
        assert len(on.days) == 1
        assert on.days == off.days  # no feedback has acted yet

    def test_scenario_without_drift_schedule_rejected(self, tmp_path):
        def factory():
            return make_engine(spec=make_spec(), tmp_path=tmp_path)

        with pytest.raises(DatasetError):
            run_drift_experiment(factory, days=2, feedback_enabled=True)

    def test_plot_data_file(self, tmp_path):
        bundle = load_bundle("bundled-13day")
        report = run_drift_experiment(engine_factory(bundle, "full", seed=3), days=2, feedback_enabled=False, seed=3)
        out = tmp_path / "drift.csv"
        report.write_plot_data(out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "day,total,correct,accuracy"
        assert len(lines) == 3


class TestProductionReport:
    def test_paper_values(self):
        report = production_report(0.25, 0.80, 0.15)
        assert report.compound == 0.046875
        assert "~5%" in report.to_dict()["compound_display"]
        assert "0.047" in report.to_dict()["compound_display"]

    def test_identity(self):
        for x in (0.2, 0.5, 1.0):
            assert production_report(1.0, x, x).compound == pytest.approx(1.0)

    def test_direct_arithmetic(self):
        assert production_report(0.5, 0.5, 0.25).compound == pytest.approx(0.25)

    def test_domain_errors(self):
        for bad in ((0.0, 0.8, 0.15), (0.25, -0.1, 0.15), (0.25, 0.8, 1.5)):
            with pytest.raises(DomainError):
                production_report(*bad)


class TestReportShape:
    def test_format_table_mirrors_paper_layout(self, tmp_path):
        report = run_pass_at_k(small_dataset(), factory_with(all_success_script(), tmp_path), k=2)
        table = report.format_table()
        lines = table.splitlines()
        assert lines[0].startswith("Scenario")
        assert lines[1].startswith("Alert")
        assert lines[2].startswith("Inspection")
        assert lines[3].startswith("Overall")

    def test_report_round_trips_canonical_json(self, tmp_path):
        report = run_pass_at_k(small_dataset(), factory_with(all_success_script(), tmp_path), k=2)
        doc = canonical_dumps(report.to_dict())
        assert json.loads(doc)["kinds"]["overall"]["total"] == 7
