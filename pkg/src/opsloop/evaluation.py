"""Evaluation protocols: pass@k replay, human-correction rounds, the
feedback-drift experiment, and production-metric report arithmetic.

pass@k counts a case as passed at k when at least one of its first k
independent attempts produced a diagnosis matching the annotated ground
truth (verdict equality, plus root-cause module equality when the ground
truth names one). Each run starts from a clean-seed skill pool; each attempt
rolls back the skills it generated so attempts stay independent.
"""

from __future__ import annotations

import csv
import hashlib
import json
from fractions import Fraction
from dataclasses import dataclass
from typing import Callable, Optional

from .core import CaseRecord, Diagnosis, EventKind, Feedback, OperationalEvent
from .engine import Engine
from .errors import DatasetError, DomainError, ScriptError

PASS_AT_K_TEMPERATURE = 0.3


# ---------------------------------------------------------------------------
# dataset


@dataclass(frozen=True)
class GroundTruth:
    verdict: str
    root_cause_module: Optional[str] = None
    root_cause_change_ref: Optional[str] = None

    def to_dict(self) -> dict:
        root = (
            {"module": self.root_cause_module, "change_ref": self.root_cause_change_ref}
            if self.root_cause_module
            else None
        )
        return {"verdict": self.verdict, "root_cause": root}

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        root = d.get("root_cause") or {}
        return cls(
            verdict=d["verdict"],
            root_cause_module=root.get("module"),
            root_cause_change_ref=root.get("change_ref"),
        )


@dataclass(frozen=True)
class EvalCase:
    case_ref: str
    event: OperationalEvent
    ground_truth: GroundTruth
    scenario_kind: str  # alert | inspection

    def to_dict(self) -> dict:
        return {
            "case_ref": self.case_ref,
            "event": self.event.to_dict(),
            "ground_truth": self.ground_truth.to_dict(),
            "scenario_kind": self.scenario_kind,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalCase":
        return cls(
            case_ref=d["case_ref"],
            event=OperationalEvent.from_dict(d["event"]),
            ground_truth=GroundTruth.from_dict(d["ground_truth"]),
            scenario_kind=d["scenario_kind"],
        )


@dataclass
class EvalDataset:
    dataset_id: str
    cases: list[EvalCase]
    scenario_ref: str = ""
    mock_script_ref: str = ""

    def __post_init__(self) -> None:
        refs = [c.case_ref for c in self.cases]
        if len(refs) != len(set(refs)):
            raise DatasetError(f"dataset {self.dataset_id}: duplicate case_refs")
        for c in self.cases:
            if c.scenario_kind not in ("alert", "inspection"):
                raise DatasetError(f"case {c.case_ref}: unknown scenario_kind {c.scenario_kind}")
            if c.event.kind.value != c.scenario_kind:
                raise DatasetError(
                    f"case {c.case_ref}: scenario_kind {c.scenario_kind} != event kind {c.event.kind.value}"
                )

    def validate_against(self, engine: Engine) -> None:
        modules = engine.spec.module_names()
        for c in self.cases:
            if c.event.module not in modules:
                raise DatasetError(f"case {c.case_ref}: module {c.event.module} not in scenario topology")

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "dataset_id": self.dataset_id,
            "scenario_ref": self.scenario_ref,
            "mock_script_ref": self.mock_script_ref,
            "cases": [c.to_dict() for c in self.cases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalDataset":
        return cls(
            dataset_id=d["dataset_id"],
            cases=[EvalCase.from_dict(c) for c in d["cases"]],
            scenario_ref=d.get("scenario_ref", ""),
            mock_script_ref=d.get("mock_script_ref", ""),
        )

    @classmethod
    def from_file(cls, path) -> "EvalDataset":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def matches_ground_truth(diagnosis: Diagnosis, truth: GroundTruth) -> bool:
    if diagnosis.verdict.value != truth.verdict:
        return False
    if truth.root_cause_module is not None:
        return diagnosis.root_cause is not None and diagnosis.root_cause.module == truth.root_cause_module
    return True


# ---------------------------------------------------------------------------
# pass@k report


def _pct(count: int, total: int) -> str:
    return f"{100.0 * count / total:.1f}%" if total else "0.0%"


@dataclass
class PassAtKReport:
    dataset_id: str
    mode: str
    k: int
    seed: int
    kinds: dict[str, dict]  # kind -> {"total": int, "cumulative": [..]}
    per_case: dict[str, dict]  # case_ref -> {"first_pass": int|None, "attempts": [...]}
    pool_digest_seed: str = ""
    pool_digest_after: str = ""

    def __post_init__(self) -> None:
        totals = sum(row["total"] for k, row in self.kinds.items() if k != "overall")
        if "overall" not in self.kinds:
            cumulative = [0] * self.k
            for kind, row in self.kinds.items():
                for i, c in enumerate(row["cumulative"]):
                    cumulative[i] += c
            self.kinds["overall"] = {"total": totals, "cumulative": cumulative}
        for row in self.kinds.values():
            cum = row["cumulative"]
            if any(cum[i] > cum[i + 1] for i in range(len(cum) - 1)):
                raise ValueError("pass@k must be non-decreasing in k")

    def counts(self, kind: str = "overall") -> list[int]:
        return list(self.kinds[kind]["cumulative"])

    def percentages(self, kind: str = "overall") -> list[str]:
        row = self.kinds[kind]
        return [_pct(c, row["total"]) for c in row["cumulative"]]

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "report": "pass_at_k",
            "dataset_id": self.dataset_id,
            "mode": self.mode,
            "k": self.k,
            "seed": self.seed,
            "kinds": self.kinds,
            "per_case": self.per_case,
            "pool_digest_seed": self.pool_digest_seed,
            "pool_digest_after": self.pool_digest_after,
        }

    def format_table(self) -> str:
        headers = ["Scenario", "Total"] + [f"pass@{i}" for i in range(1, self.k + 1)]
        rows = []
        order = [k for k in ("alert", "inspection") if k in self.kinds]
        order += [k for k in sorted(self.kinds) if k not in order and k != "overall"]
        for kind in order + ["overall"]:
            row = self.kinds[kind]
            cells = [kind.capitalize(), str(row["total"])]
            cells += [f"{c} ({_pct(c, row['total'])})" for c in row["cumulative"]]
            rows.append(cells)
        widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(len(headers))]
        lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
        for r in rows:
            lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(r)))
        return "\n".join(lines)


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# pass@k protocol


def run_pass_at_k(
    dataset: EvalDataset,
    engine_factory: Callable[[], Engine],
    k: int = 5,
    seed: int = 0,
    mode: str = "full",
) -> PassAtKReport:
    """Clean-seed pass@k over every dataset case.

    Each attempt runs the full pipeline with temperature 0.3 and its
    attempt_index threaded to the reasoner; skills generated during an
    attempt are rolled back afterwards so attempts sample independently. The
    full pool reset happens once per run, by constructing a fresh engine.
    """
    if k < 1:
        raise DatasetError("k must be >= 1")
    engine = engine_factory()
    dataset.validate_against(engine)
    digest_seed = _digest(engine.pool.snapshot())

    kinds: dict[str, dict] = {}
    per_case: dict[str, dict] = {}
    for case in dataset.cases:
        watermark = engine.pool.watermark()
        first_pass: Optional[int] = None
        attempts = []
        for attempt in range(1, k + 1):
            record = engine.run_event(
                case.event,
                case_ref=case.case_ref,
                attempt_index=attempt,
                temperature=PASS_AT_K_TEMPERATURE,
            )
            passed = matches_ground_truth(record.diagnosis, case.ground_truth)
            attempts.append(
                {
                    "attempt": attempt,
                    "passed": passed,
                    "verdict": record.diagnosis.verdict.value,
                    "root_cause_module": record.diagnosis.root_cause.module if record.diagnosis.root_cause else None,
                }
            )
            engine.pool.rollback(watermark)
            if passed:
                first_pass = attempt
                break
        per_case[case.case_ref] = {"first_pass": first_pass, "attempts": attempts}
        row = kinds.setdefault(case.scenario_kind, {"total": 0, "cumulative": [0] * k})
        row["total"] += 1
        if first_pass is not None:
            for i in range(first_pass - 1, k):
                row["cumulative"][i] += 1

    return PassAtKReport(
        dataset_id=dataset.dataset_id,
        mode=mode,
        k=k,
        seed=seed,
        kinds=kinds,
        per_case=per_case,
        pool_digest_seed=digest_seed,
        pool_digest_after=_digest(engine.pool.snapshot()),
    )


# ---------------------------------------------------------------------------
# correction rounds


@dataclass
class CorrectionReport:
    dataset_id: str
    rounds: int
    failed_refs: list[str]
    standalone: PassAtKReport  # totals over the corrected subset, per round
    end_to_end: Optional[PassAtKReport] = None  # baseline + corrections, per round

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "report": "correction_rounds",
            "dataset_id": self.dataset_id,
            "rounds": self.rounds,
            "failed_refs": self.failed_refs,
            "standalone": self.standalone.to_dict(),
            "end_to_end": self.end_to_end.to_dict() if self.end_to_end else None,
        }


def run_correction_rounds(
    dataset: EvalDataset,
    failed_refs: list[str],
    rounds: int,
    correction_script: dict,
    engine_factory: Callable[[], Engine],
    baseline: Optional[PassAtKReport] = None,
    k_baseline: int = 5,
    seed: int = 0,
) -> CorrectionReport:
    """Targeted natural-language correction of cases that failed at pass@k.

    Per round, each still-failing case gets scripted practitioner feedback
    routed through the feedback router (classification + skill update), then
    the case re-runs; it passes once the re-run matches ground truth. The
    standalone report covers the corrected subset; when a baseline report is
    supplied an end-to-end view over the whole dataset is included.
    """
    by_ref = {c.case_ref: c for c in dataset.cases}
    unknown = [r for r in failed_refs if r not in by_ref]
    if unknown:
        raise DatasetError(f"failed cases not in dataset: {unknown}")
    script_cases = correction_script.get("cases", {})
    missing = [r for r in failed_refs if r not in script_cases]
    if missing:
        raise ScriptError(f"correction script missing cases: {missing}")

    engine = engine_factory()
    state: dict[str, dict] = {}
    for ref in failed_refs:
        case = by_ref[ref]
        record = engine.run_event(
            case.event, case_ref=ref, attempt_index=k_baseline, temperature=PASS_AT_K_TEMPERATURE
        )
        state[ref] = {"record": record, "fixed_round": None}

    for rnd in range(1, rounds + 1):
        for ref in failed_refs:
            if state[ref]["fixed_round"] is not None:
                continue
            case = by_ref[ref]
            feedbacks = script_cases[ref].get("feedbacks", [])
            fb_spec = feedbacks[min(rnd, len(feedbacks)) - 1] if feedbacks else {"text": "diagnosis incorrect"}
            record: CaseRecord = state[ref]["record"]
            feedback = Feedback(
                feedback_id=f"fb-{ref}-r{rnd}",
                case_id=record.case_id,
                author=fb_spec.get("author", "sre-oncall"),
                text=fb_spec["text"],
                submitted_at=record.event.timestamp,
            )
            decision = engine.router.route(record, feedback, case_ref=ref)
            engine.router.execute(decision, record, feedback)
            rerun = engine.run_event(
                case.event, case_ref=ref, attempt_index=k_baseline + rnd, temperature=PASS_AT_K_TEMPERATURE
            )
            state[ref]["record"] = rerun
            if matches_ground_truth(rerun.diagnosis, case.ground_truth):
                state[ref]["fixed_round"] = rnd

    def cumulative_for(refs: list[str], base_counts: dict[str, int], totals: dict[str, int]) -> dict[str, dict]:
        kinds: dict[str, dict] = {
            kind: {"total": totals[kind], "cumulative": [base_counts.get(kind, 0)] * rounds} for kind in totals
        }
        for ref in refs:
            fixed = state[ref]["fixed_round"]
            if fixed is None:
                continue
            kind = by_ref[ref].scenario_kind
            for i in range(fixed - 1, rounds):
                kinds[kind]["cumulative"][i] += 1
        return kinds

    failed_totals: dict[str, int] = {}
    for ref in failed_refs:
        failed_totals[by_ref[ref].scenario_kind] = failed_totals.get(by_ref[ref].scenario_kind, 0) + 1
    standalone = PassAtKReport(
        dataset_id=dataset.dataset_id,
        mode="correction",
        k=rounds,
        seed=seed,
        kinds=cumulative_for(failed_refs, {}, failed_totals),
        per_case={ref: {"fixed_round": state[ref]["fixed_round"]} for ref in failed_refs},
    )

    end_to_end = None
    if baseline is not None:
        base_counts = {
            kind: row["cumulative"][-1] for kind, row in baseline.kinds.items() if kind != "overall"
        }
        totals = {kind: row["total"] for kind, row in baseline.kinds.items() if kind != "overall"}
        end_to_end = PassAtKReport(
            dataset_id=dataset.dataset_id,
            mode="end_to_end",
            k=rounds,
            seed=seed,
            kinds=cumulative_for(failed_refs, base_counts, totals),
            per_case={ref: {"fixed_round": state[ref]["fixed_round"]} for ref in failed_refs},
        )

    return CorrectionReport(
        dataset_id=dataset.dataset_id,
        rounds=rounds,
        failed_refs=list(failed_refs),
        standalone=standalone,
        end_to_end=end_to_end,
    )


# ---------------------------------------------------------------------------
# drift experiment


@dataclass
class DriftReport:
    scenario_id: str
    feedback_enabled: bool
    days: list[dict]  # {"day", "total", "correct", "accuracy"}

    def accuracies(self) -> list[float]:
        return [d["accuracy"] for d in self.days]

    def moving_average(self, window: int = 3) -> list[float]:
        acc = self.accuracies()
        return [sum(acc[i : i + window]) / window for i in range(len(acc) - window + 1)]

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "report": "drift",
            "scenario_id": self.scenario_id,
            "feedback_enabled": self.feedback_enabled,
            "days": self.days,
        }

    def write_plot_data(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["day", "total", "correct", "accuracy"])
            for row in self.days:
                writer.writerow([row["day"], row["total"], row["correct"], f"{row['accuracy']:.4f}"])


def run_drift_experiment(
    engine_factory: Callable[[], Engine],
    days: int,
    feedback_enabled: bool,
    seed: int = 0,
) -> DriftReport:
    """Day-bucketed alert replay under traffic drift.

    Ground truth for every drift-scenario alert is page + its own module
    (faults are injected per pattern by construction). With feedback enabled,
    each day's incorrect diagnoses receive scripted practitioner feedback at
    end of day, driving prompt revisions before the next day's traffic.
    """
    if days < 1:
        raise DatasetError("days must be >= 1")
    engine = engine_factory()
    if not engine.spec.drift_schedule:
        raise DatasetError(f"scenario {engine.spec.scenario_id} has no drift schedule")
    alerts = [e for e in engine.spec.event_schedule if e.kind is EventKind.ALERT]
    by_day: dict[int, list[OperationalEvent]] = {}
    for event in alerts:
        by_day.setdefault(engine.spec.day_of(event.timestamp), []).append(event)

    day_rows: list[dict] = []
    for day in range(1, days + 1):
        events = sorted(by_day.get(day, []), key=lambda e: (e.timestamp, e.event_id))
        incorrect: list[CaseRecord] = []
        correct = 0
        for event in events:
            record = engine.run_event(event)
            good = (
                record.diagnosis.verdict.value == "page"
                and record.diagnosis.root_cause is not None
                and record.diagnosis.root_cause.module == event.module
            )
            if good:
                correct += 1
            else:
                incorrect.append(record)
        total = len(events)
        day_rows.append(
            {"day": day, "total": total, "correct": correct, "accuracy": correct / total if total else 0.0}
        )
        if feedback_enabled:
            for record in incorrect:
                feedback = Feedback(
                    feedback_id=f"fb-{record.case_id}",
                    case_id=record.case_id,
                    author="sre-oncall",
                    text=(
                        f"The {record.event.module} diagnosis missed the known remediation playbook; "
                        "revise the analysis steps."
                    ),
                    submitted_at=record.event.timestamp,
                )
                decision = engine.router.route(record, feedback)
                engine.router.execute(decision, record, feedback)
    return DriftReport(scenario_id=engine.spec.scenario_id, feedback_enabled=feedback_enabled, days=day_rows)


# ---------------------------------------------------------------------------
# production report arithmetic


@dataclass(frozen=True)
class ProductionReport:
    fired_relative: float
    nonactionable_pre: float
    nonactionable_post: float
    compound: float

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "report": "production",
            "rows": [
                {"metric": "fired alerts (relative)", "pre": 1.0, "post": self.fired_relative},
                {"metric": "non-actionable ratio among fired alerts", "pre": self.nonactionable_pre, "post": self.nonactionable_post},
                {"metric": "non-actionable alerts, absolute (relative)", "pre": 1.0, "post": self.compound},
            ],
            "compound": self.compound,
            "compound_display": f"~{round(self.compound * 100)}% (= {round(self.compound, 3)})",
        }

    def format_table(self) -> str:
        lines = [
            "Metric                                        Pre        Post",
            f"Fired alerts (relative)                       100%       {self.fired_relative * 100:.0f}%",
            f"Non-actionable ratio among fired alerts       {self.nonactionable_pre * 100:.0f}%        {self.nonactionable_post * 100:.0f}%",
            f"Non-actionable alerts, absolute (relative)    100%       ~{round(self.compound * 100)}% (= {round(self.compound, 3)})",
        ]
        return "\n".join(lines)


def production_report(fired_rel: float, nonactionable_pre: float, nonactionable_post: float) -> ProductionReport:
    """Compound pager-load arithmetic: the two published ratios share the
    fired-alert denominator, so the absolute non-actionable volume is
    fired x post-ratio / pre-ratio."""
    for name, value in (
        ("fired_rel", fired_rel),
        ("nonactionable_pre", nonactionable_pre),
        ("nonactionable_post", nonactionable_post),
    ):
        if not 0.0 < value <= 1.0:
            raise DomainError(f"{name} must be in (0, 1], got {value}")
    # exact rational arithmetic on the decimal inputs: 0.25 x 0.15 / 0.80
    # must come out as exactly 0.046875, not its float-rounding neighbor
    compound = float(
        Fraction(str(fired_rel)) * Fraction(str(nonactionable_post)) / Fraction(str(nonactionable_pre))
    )
    return ProductionReport(
        fired_relative=fired_rel,
        nonactionable_pre=nonactionable_pre,
        nonactionable_post=nonactionable_post,
        compound=compound,
    )
