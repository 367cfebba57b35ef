"""Command-line front door mirroring the HTTP API.

Exit codes: 0 success, 1 domain error, 2 usage error. ``--format structured``
emits the same canonical JSON payloads the gateway serves.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import views
from .bundled import engine_factory, load_bundle
from .core import CaseRecord, OperationalEvent, canonical_dumps
from .dataplane import ScenarioSpec
from .engine import Engine, EngineConfig
from .errors import NotFound, OpsLoopError
from .evaluation import (
    production_report,
    run_correction_rounds,
    run_drift_experiment,
    run_pass_at_k,
)
from .memory import MemoryConfig
from .skills import Skill, SkillPool


def _emit(payload: dict, text: str, fmt: str) -> None:
    if fmt == "structured":
        sys.stdout.write(canonical_dumps(payload))
    else:
        print(text)


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _engine_from_args(args, mode: str = "full") -> Engine:
    bundle = load_bundle(args.bundle)
    return engine_factory(bundle, mode, seed=getattr(args, "seed", 0))()


# ---------------------------------------------------------------------------
# subcommand handlers


def cmd_serve(args) -> int:
    from .gateway import serve

    cfg = _load_json(args.config) if args.config else {}
    scenario_cfg = cfg.get("scenario", {})
    if "bundle" in scenario_cfg:
        bundle = load_bundle(scenario_cfg["bundle"])
        spec = bundle.scenario()
        defaults = {
            "mock_script_path": bundle.script_path("full"),
            "seed_skills_dir": bundle.dir("seed_skills"),
            "handbook_dir": bundle.dir("handbook"),
            "capabilities_dir": bundle.dir("capabilities"),
        }
    else:
        spec = ScenarioSpec.from_dict(_load_json(scenario_cfg["path"]))
        defaults = {}
    reasoner_cfg = cfg.get("reasoner", {})
    memory_cfg = cfg.get("memory", {})
    engine = Engine(
        EngineConfig(
            scenario=spec,
            seed=int(reasoner_cfg.get("seed", 0)),
            reasoner_backend=reasoner_cfg.get("backend", "mock"),
            mock_script_path=reasoner_cfg.get("script", defaults.get("mock_script_path")),
            http_endpoint=reasoner_cfg.get("http", {}).get("endpoint"),
            http_timeout_ms=int(reasoner_cfg.get("http", {}).get("timeout_ms", 30000)),
            pool_dir=cfg.get("pool", {}).get("dir"),
            seed_skills_dir=cfg.get("pool", {}).get("seed_dir", defaults.get("seed_skills_dir")),
            handbook_dir=cfg.get("knowledge", {}).get("seed_dir", defaults.get("handbook_dir")),
            capabilities_dir=cfg.get("capabilities", {}).get("dir", defaults.get("capabilities_dir")),
            memory=MemoryConfig(**memory_cfg) if memory_cfg else MemoryConfig(),
            archive_path=cfg.get("archive", {}).get("path"),
            wall_clock=bool(cfg.get("wall_clock", False)),
        )
    )
    serve(engine, port=args.port or int(cfg.get("server", {}).get("port", 8080)), static_dir=args.static)
    return 0


def cmd_simulate(args) -> int:
    out_dir = Path(args.out) if args.out else None
    archive = None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        archive = str(out_dir / "cases.log")
        Path(archive).write_text("")
    bundle = load_bundle(args.scenario)
    engine = engine_factory(bundle, "full", seed=args.seed, archive_path=archive)()
    verdicts: dict[str, int] = {}
    for event in sorted(engine.spec.event_schedule, key=lambda e: (e.timestamp, e.event_id)):
        case = engine.run_event(event)
        verdicts[case.diagnosis.verdict.value] = verdicts.get(case.diagnosis.verdict.value, 0) + 1
    payload = {
        "scenario_id": engine.spec.scenario_id,
        "seed": args.seed,
        "events_processed": len(engine.spec.event_schedule),
        "verdicts": dict(sorted(verdicts.items())),
        "stores": engine.store_sizes(),
        "archive": archive,
    }
    text = (
        f"scenario {payload['scenario_id']} seed {args.seed}: {payload['events_processed']} events\n"
        + "\n".join(f"  {k}: {v}" for k, v in payload["verdicts"].items())
        + (f"\narchive: {archive}" if archive else "")
    )
    _emit(payload, text, args.format)
    return 0


def cmd_eval_run(args) -> int:
    bundle = load_bundle(args.dataset)
    dataset = bundle.dataset()
    mode = {"full": "full", "static": "static", "noknow": "noknow"}[args.mode]
    report = run_pass_at_k(dataset, engine_factory(bundle, mode, seed=args.seed), k=args.k, seed=args.seed, mode=mode)
    if args.out:
        Path(args.out).write_text(canonical_dumps(report.to_dict()), encoding="utf-8")
    _emit(report.to_dict(), report.format_table(), args.format)
    return 0


def cmd_eval_correct(args) -> int:
    bundle = load_bundle(args.dataset)
    dataset = bundle.dataset()
    baseline = run_pass_at_k(
        dataset, engine_factory(bundle, "full", seed=args.seed), k=args.k, seed=args.seed, mode="full"
    )
    failed = [ref for ref, st in baseline.per_case.items() if st["first_pass"] is None]
    report = run_correction_rounds(
        dataset,
        failed,
        args.rounds,
        bundle.corrections(),
        engine_factory(bundle, "full", seed=args.seed),
        baseline=baseline,
        k_baseline=args.k,
        seed=args.seed,
    )
    text = (
        f"correction rounds on {len(failed)} cases failing pass@{args.k}\n\n"
        + report.standalone.format_table()
        + "\n\nend-to-end over the full dataset\n\n"
        + report.end_to_end.format_table()
    )
    _emit(report.to_dict(), text, args.format)
    return 0


def cmd_eval_drift(args) -> int:
    bundle = load_bundle(args.scenario)
    enabled = args.feedback == "on"
    report = run_drift_experiment(
        engine_factory(bundle, "full", seed=args.seed), days=args.days, feedback_enabled=enabled, seed=args.seed
    )
    if args.out:
        report.write_plot_data(args.out)
    text_lines = [f"drift experiment: feedback {'enabled' if enabled else 'disabled'}"]
    for row in report.days:
        bar = "#" * int(round(20 * row["accuracy"]))
        text_lines.append(f"  day {row['day']:>2}: {row['accuracy']:.2f} {bar}")
    _emit(report.to_dict(), "\n".join(text_lines), args.format)
    return 0


def cmd_report_production(args) -> int:
    report = production_report(args.fired, args.pre, args.post)
    _emit(report.to_dict(), report.format_table(), args.format)
    return 0


def cmd_skill_list(args) -> int:
    pool = SkillPool(directory=args.dir) if args.dir else _engine_from_args(args).pool
    payload = views.skill_summary(pool)
    text = "\n".join(f"{s['skill_id']} v{s['version']}  tags={','.join(s['tags'])}" for s in payload["skills"]) or "(empty pool)"
    _emit(payload, text, args.format)
    return 0


def cmd_skill_show(args) -> int:
    pool = SkillPool(directory=args.dir) if args.dir else _engine_from_args(args).pool
    payload = views.skill_detail(pool, args.id, args.version)
    _emit(payload, canonical_dumps(payload).rstrip(), args.format)
    return 0


def cmd_skill_validate(args) -> int:
    engine = _engine_from_args(args)
    skill = Skill.from_dict(_load_json(args.skill_file))
    event = OperationalEvent.from_dict(_load_json(args.event_file))
    report = engine.lifecycle.validate(skill, event)
    payload = report.to_dict()
    text = f"verdict: {report.verdict}" + (f"\n{report.error_summary}" if report.error_summary else "")
    _emit(payload, text, args.format)
    return 0 if report.verdict == "valid" else 1


def cmd_skill_generate(args) -> int:
    engine = _engine_from_args(args)
    event = OperationalEvent.from_dict(_load_json(args.event_file))
    skill = engine.lifecycle.generate(event, seed=args.seed)
    payload = skill.to_dict()
    _emit(payload, f"generated {skill.meta.skill_id} v{skill.meta.version}", args.format)
    return 0


def cmd_knowledge_search(args) -> int:
    engine = _engine_from_args(args)
    params = {
        k: v
        for k, v in {
            "business": args.business,
            "scenario": args.scenario,
            "subject": args.subject,
            "object": args.object,
            "metric": args.metric,
            "q": args.q,
            "top_k": args.top_k,
        }.items()
        if v is not None
    }
    payload = views.knowledge_search(engine.knowledge, args.mode, params)
    lines = []
    for r in payload["results"]:
        entry = r["entry"] if "entry" in r else r
        suffix = f"  (cosine {r['cosine']})" if "cosine" in r else ""
        lines.append(f"{entry['entry_id']} [{entry['kind']}] {entry['text']}{suffix}")
    _emit(payload, "\n".join(lines) or "(no results)", args.format)
    return 0


def cmd_knowledge_show(args) -> int:
    engine = _engine_from_args(args)
    entry = engine.knowledge.get(args.id)
    if entry is None:
        raise NotFound(f"knowledge entry {args.id} not found")
    payload = entry.to_dict()
    _emit(payload, canonical_dumps(payload).rstrip(), args.format)
    return 0


def cmd_knowledge_consolidate(args) -> int:
    engine = _engine_from_args(args)
    report = engine.knowledge.consolidate(engine.now())
    payload = report.to_dict()
    _emit(payload, f"merged={report.merged} pruned={report.pruned} contradictions={report.contradictions_resolved}", args.format)
    return 0


def _read_archive(path: str) -> list[CaseRecord]:
    """Current-state view of the append-only log: a case re-appended on its
    feedback transition keeps only its latest record."""
    by_id: dict[str, CaseRecord] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                case = CaseRecord.from_dict(json.loads(line))
                by_id[case.case_id] = case
    return list(by_id.values())


def cmd_cases_list(args) -> int:
    cases = _read_archive(args.archive)
    if args.business:
        cases = [c for c in cases if c.event.business == args.business]
    if args.module:
        cases = [c for c in cases if c.event.module == args.module]
    if args.kind:
        cases = [c for c in cases if c.event.kind.value == args.kind]
    cases = cases[-args.limit :]
    payload = {"cases": [views.case_summary(c) for c in cases]}
    text = "\n".join(
        f"{s['case_id']}  {s['kind']:<10} {s['business']}/{s['module']}  -> {s['verdict']}" for s in payload["cases"]
    )
    _emit(payload, text or "(no cases)", args.format)
    return 0


def cmd_cases_show(args) -> int:
    for case in _read_archive(args.archive):
        if case.case_id == args.id:
            payload = case.to_dict()
            _emit(payload, canonical_dumps(payload).rstrip(), args.format)
            return 0
    raise NotFound(f"case {args.id} not in archive {args.archive}")


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opsloop", description="agentic O&M orchestration engine")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_format(p):
        p.add_argument("--format", choices=["text", "structured"], default="text")

    p = sub.add_parser("serve", help="run the HTTP gateway")
    p.add_argument("--config", help="engine config file (canonical JSON)")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--static", help="directory with the operator console build", default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("simulate", help="replay a scenario's event schedule")
    p.add_argument("--scenario", required=True, help="bundle name (e.g. bundled-13day) or bundle path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for the archival log")
    add_format(p)
    p.set_defaults(func=cmd_simulate)

    p_eval = sub.add_parser("eval", help="evaluation protocols")
    eval_sub = p_eval.add_subparsers(dest="eval_command", required=True)

    p = eval_sub.add_parser("run", help="pass@k over a dataset")
    p.add_argument("--dataset", default="table3-replay")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["full", "static", "noknow"], default="full")
    p.add_argument("--out", help="write the report JSON here")
    add_format(p)
    p.set_defaults(func=cmd_eval_run)

    p = eval_sub.add_parser("correct", help="correction rounds on pass@k failures")
    p.add_argument("--dataset", default="table3-replay")
    p.add_argument("--rounds", type=int, default=5)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    add_format(p)
    p.set_defaults(func=cmd_eval_correct)

    p = eval_sub.add_parser("drift", help="feedback-drift experiment")
    p.add_argument("--scenario", default="bundled-13day")
    p.add_argument("--days", type=int, default=13)
    p.add_argument("--feedback", choices=["on", "off"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write plot-ready CSV here")
    add_format(p)
    p.set_defaults(func=cmd_eval_drift)

    p_report = sub.add_parser("report", help="report arithmetic")
    report_sub = p_report.add_subparsers(dest="report_command", required=True)
    p = report_sub.add_parser("production", help="compound alert-reduction arithmetic")
    p.add_argument("--fired", type=float, required=True)
    p.add_argument("--pre", type=float, required=True)
    p.add_argument("--post", type=float, required=True)
    add_format(p)
    p.set_defaults(func=cmd_report_production)

    p_skill = sub.add_parser("skill", help="skill pool inspection and lifecycle")
    skill_sub = p_skill.add_subparsers(dest="skill_command", required=True)
    p = skill_sub.add_parser("list")
    p.add_argument("--dir", help="pool directory (skills/<id>/v<version>.json)")
    p.add_argument("--bundle", default="table3-replay")
    add_format(p)
    p.set_defaults(func=cmd_skill_list)
    p = skill_sub.add_parser("show")
    p.add_argument("--dir")
    p.add_argument("--bundle", default="table3-replay")
    p.add_argument("--id", required=True)
    p.add_argument("--version", type=int, default=None)
    add_format(p)
    p.set_defaults(func=cmd_skill_show)
    p = skill_sub.add_parser("validate")
    p.add_argument("--bundle", default="table3-replay")
    p.add_argument("--skill-file", required=True)
    p.add_argument("--event-file", required=True)
    add_format(p)
    p.set_defaults(func=cmd_skill_validate)
    p = skill_sub.add_parser("generate")
    p.add_argument("--bundle", default="table3-replay")
    p.add_argument("--event-file", required=True)
    p.add_argument("--seed", type=int, default=0)
    add_format(p)
    p.set_defaults(func=cmd_skill_generate)

    p_kn = sub.add_parser("knowledge", help="knowledge base queries")
    kn_sub = p_kn.add_subparsers(dest="knowledge_command", required=True)
    p = kn_sub.add_parser("search")
    p.add_argument("--bundle", default="table3-replay")
    p.add_argument("--mode", choices=["kv", "kkv", "vector"], required=True)
    p.add_argument("--business")
    p.add_argument("--scenario")
    p.add_argument("--subject")
    p.add_argument("--object")
    p.add_argument("--metric")
    p.add_argument("--q")
    p.add_argument("--top-k", type=int, default=5)
    add_format(p)
    p.set_defaults(func=cmd_knowledge_search)
    p = kn_sub.add_parser("show")
    p.add_argument("--bundle", default="table3-replay")
    p.add_argument("--id", required=True)
    add_format(p)
    p.set_defaults(func=cmd_knowledge_show)
    p = kn_sub.add_parser("consolidate")
    p.add_argument("--bundle", default="table3-replay")
    add_format(p)
    p.set_defaults(func=cmd_knowledge_consolidate)

    p_cases = sub.add_parser("cases", help="browse archived case records")
    cases_sub = p_cases.add_subparsers(dest="cases_command", required=True)
    p = cases_sub.add_parser("list")
    p.add_argument("--archive", required=True)
    p.add_argument("--business")
    p.add_argument("--module")
    p.add_argument("--kind")
    p.add_argument("--limit", type=int, default=50)
    add_format(p)
    p.set_defaults(func=cmd_cases_list)
    p = cases_sub.add_parser("show")
    p.add_argument("--archive", required=True)
    p.add_argument("--id", required=True)
    add_format(p)
    p.set_defaults(func=cmd_cases_show)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OpsLoopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
