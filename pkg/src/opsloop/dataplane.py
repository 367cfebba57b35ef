"""Simulated operational signal plane.

Registers data sources for a service topology, generates metric/log/change
rows, injects labeled faults, and answers source queries. All output is a
pure function of (scenario spec, seed): noise is derived per (source, minute)
from a keyed hash, so parallel queries are order-independent and repeated
runs are bit-identical.

Fault propagation: a fault on module M perturbs M at full magnitude, direct
dependents at 50%, second-degree dependents at 25%, and nothing deeper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Any, Optional

from .core import (
    EventKind,
    MetricFamily,
    OperationalEvent,
    format_instant,
    parse_instant,
    to_utc_ms,
    SCHEMA_VERSION,
)
from .errors import ParamError, RegistryConflict, SpecError, UnknownSource, ValidationFailure
from .reasoner import derived_unit

LOG_LINE_CAP = 200
MINUTE = timedelta(minutes=1)

_FAULT_METRIC_KEYWORDS = {
    "latency_spike": ("latency",),
    "error_burst": ("error", "coredump"),
    "capacity_drain": ("capacity",),
    "bad_release": ("latency", "error"),
}

PROPAGATION = {0: 1.0, 1: 0.5, 2: 0.25}


@dataclass(frozen=True)
class SourceDescriptor:
    source_id: str
    kind: str  # metric_series | log_lines | change_events
    param_schema: tuple[dict, ...]
    field_schema: tuple[str, ...]
    description: str = ""

    def __post_init__(self) -> None:
        if not self.field_schema:
            raise ValidationFailure(f"source {self.source_id}: field_schema must be non-empty")

    def to_dict(self) -> dict:
        return {
            "source_id": self.source_id,
            "kind": self.kind,
            "param_schema": [dict(p) for p in self.param_schema],
            "field_schema": list(self.field_schema),
            "description": self.description,
        }


@dataclass(frozen=True)
class Fault:
    fault_id: str
    start: datetime
    duration_minutes: int
    module: str
    kind: str
    magnitude: float
    root_cause_module: str
    root_cause_change_ref: Optional[str] = None

    @property
    def end(self) -> datetime:
        return self.start + timedelta(minutes=self.duration_minutes)

    def to_dict(self) -> dict:
        return {
            "fault_id": self.fault_id,
            "start": format_instant(self.start),
            "duration_minutes": self.duration_minutes,
            "module": self.module,
            "kind": self.kind,
            "magnitude": self.magnitude,
            "ground_truth_root_cause": {
                "module": self.root_cause_module,
                "change_ref": self.root_cause_change_ref,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Fault":
        gt = d.get("ground_truth_root_cause", {})
        return cls(
            fault_id=d["fault_id"],
            start=parse_instant(d["start"]),
            duration_minutes=int(d["duration_minutes"]),
            module=d["module"],
            kind=d["kind"],
            magnitude=float(d["magnitude"]),
            root_cause_module=gt.get("module", d["module"]),
            root_cause_change_ref=gt.get("change_ref"),
        )


@dataclass
class ScenarioSpec:
    """Declarative description of one simulated operational world."""

    scenario_id: str
    start: datetime
    end: datetime
    topology: list[dict]  # {"module", "business", "depends_on": [...]}
    baselines: list[dict]  # {"module", "metric", "mean", "noise", "period_minutes"}
    injected_faults: list[Fault] = field(default_factory=list)
    event_schedule: list[OperationalEvent] = field(default_factory=list)
    drift_schedule: dict[int, list[dict]] = field(default_factory=dict)
    drift_applied: bool = False

    def __post_init__(self) -> None:
        self.start = to_utc_ms(self.start)
        self.end = to_utc_ms(self.end)
        modules = self.module_names()
        if len(modules) != len(self.topology):
            raise SpecError(f"scenario {self.scenario_id}: duplicate module in topology")
        for node in self.topology:
            for dep in node.get("depends_on", []):
                if dep not in modules:
                    raise SpecError(f"module {node['module']} depends on unknown module {dep}")
        for b in self.baselines:
            if b["module"] not in modules:
                raise SpecError(f"baseline references unknown module {b['module']}")
        for f in self.injected_faults:
            if f.module not in modules:
                raise SpecError(f"fault {f.fault_id} targets unknown module {f.module}")
            if f.root_cause_module not in modules:
                raise SpecError(f"fault {f.fault_id} root cause names unknown module {f.root_cause_module}")
        for e in self.event_schedule:
            if not self.start <= e.timestamp <= self.end:
                raise SpecError(f"event {e.event_id} at {format_instant(e.timestamp)} outside scenario range")

    def module_names(self) -> set[str]:
        return {node["module"] for node in self.topology}

    def businesses(self) -> list[str]:
        return sorted({node["business"] for node in self.topology})

    def metrics_of(self, module: str) -> list[str]:
        return [b["metric"] for b in self.baselines if b["module"] == module]

    def baseline_for(self, module: str, metric: str) -> Optional[dict]:
        for b in self.baselines:
            if b["module"] == module and b["metric"] == metric:
                return b
        return None

    def day_of(self, ts: datetime) -> int:
        """1-based day bucket of an instant within the scenario range."""
        return (to_utc_ms(ts) - self.start).days + 1

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "scenario_id": self.scenario_id,
            "start": format_instant(self.start),
            "end": format_instant(self.end),
            "topology": self.topology,
            "baselines": self.baselines,
            "injected_faults": [f.to_dict() for f in self.injected_faults],
            "event_schedule": [e.to_dict() for e in self.event_schedule],
            "drift_schedule": {str(day): entries for day, entries in self.drift_schedule.items()},
            "drift_applied": self.drift_applied,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        return cls(
            scenario_id=d["scenario_id"],
            start=parse_instant(d["start"]),
            end=parse_instant(d["end"]),
            topology=[dict(n) for n in d["topology"]],
            baselines=[dict(b) for b in d["baselines"]],
            injected_faults=[Fault.from_dict(f) for f in d.get("injected_faults", [])],
            event_schedule=[OperationalEvent.from_dict(e) for e in d.get("event_schedule", [])],
            drift_schedule={int(k): v for k, v in d.get("drift_schedule", {}).items()},
            drift_applied=d.get("drift_applied", False),
        )


@dataclass(frozen=True)
class QueryResult:
    rows: tuple[dict, ...]
    status: str  # ok | empty | error
    truncated: bool = False


def metric_source_id(module: str, metric: str) -> str:
    return f"metric:{module}:{metric}"


def log_source_id(module: str) -> str:
    return f"log:{module}"


def change_source_id(business: str) -> str:
    return f"changes:{business}"


class SignalSimulator:
    """Deterministic query server over one scenario.

    Registration happens at construction; tests may add custom descriptors
    with handlers through :meth:`register_custom` before issuing queries.
    """

    def __init__(self, spec: ScenarioSpec, seed: int):
        self.spec = spec
        self.seed = seed
        self._descriptors: dict[str, SourceDescriptor] = {}
        self._custom_handlers: dict[str, Any] = {}
        self.query_log: list[dict] = []
        self._dependents = self._dependent_map()
        self.register_sources(spec)

    # -- registration -------------------------------------------------------

    def register_sources(self, spec: ScenarioSpec) -> list[SourceDescriptor]:
        """One metric source per (module, metric), one log source per module,
        one change source per business line."""
        created: list[SourceDescriptor] = []
        for node in spec.topology:
            module = node["module"]
            for metric in spec.metrics_of(module):
                created.append(
                    SourceDescriptor(
                        source_id=metric_source_id(module, metric),
                        kind="metric_series",
                        param_schema=({"name": "agg", "type": "string", "required": False},),
                        field_schema=("ts", "value", "module", "metric"),
                        description=f"1-minute {metric} series for module {module}",
                    )
                )
            created.append(
                SourceDescriptor(
                    source_id=log_source_id(module),
                    kind="log_lines",
                    param_schema=(
                        {"name": "level", "type": "string", "required": False},
                        {"name": "contains", "type": "string", "required": False},
                    ),
                    field_schema=("ts", "level", "module", "message"),
                    description=f"structured log stream for module {module}",
                )
            )
        for business in spec.businesses():
            created.append(
                SourceDescriptor(
                    source_id=change_source_id(business),
                    kind="change_events",
                    param_schema=({"name": "module", "type": "string", "required": False},),
                    field_schema=("ts", "business", "module", "change_ref", "author", "description"),
                    description=f"release/change feed for business line {business}",
                )
            )
        for desc in created:
            if desc.source_id in self._descriptors:
                raise RegistryConflict(f"source {desc.source_id} already registered")
            self._descriptors[desc.source_id] = desc
        return list(self._descriptors.values())

    def register_custom(self, descriptor: SourceDescriptor, handler) -> None:
        if descriptor.source_id in self._descriptors:
            raise RegistryConflict(f"source {descriptor.source_id} already registered")
        self._descriptors[descriptor.source_id] = descriptor
        self._custom_handlers[descriptor.source_id] = handler

    def descriptors(self) -> list[SourceDescriptor]:
        return sorted(self._descriptors.values(), key=lambda d: d.source_id)

    def descriptor(self, source_id: str) -> SourceDescriptor:
        if source_id not in self._descriptors:
            raise UnknownSource(f"unknown source {source_id}")
        return self._descriptors[source_id]

    # -- querying -----------------------------------------------------------

    def query_source(self, source_id: str, params: dict, window: tuple[datetime, datetime]) -> QueryResult:
        descriptor = self.descriptor(source_id)
        self._check_params(descriptor, params)
        self.query_log.append(
            {"source_id": source_id, "params": dict(params), "window": (format_instant(window[0]), format_instant(window[1]))}
        )
        if source_id in self._custom_handlers:
            return self._custom_handlers[source_id](params, window)
        if descriptor.kind == "metric_series":
            return self._query_metric(source_id, params, window)
        if descriptor.kind == "log_lines":
            return self._query_logs(source_id, params, window)
        return self._query_changes(source_id, params, window)

    def _check_params(self, descriptor: SourceDescriptor, params: dict) -> None:
        known = {p["name"] for p in descriptor.param_schema}
        for name in params:
            if name not in known:
                raise ParamError(f"source {descriptor.source_id}: unknown param {name!r}")
        for p in descriptor.param_schema:
            if p.get("required") and p["name"] not in params:
                raise ParamError(f"source {descriptor.source_id}: missing required param {p['name']!r}")

    def _minutes(self, window: tuple[datetime, datetime]) -> list[datetime]:
        lo = max(to_utc_ms(window[0]), self.spec.start)
        hi = min(to_utc_ms(window[1]), self.spec.end)
        if hi <= lo:
            return []
        # align to whole minutes from scenario start
        offset = (lo - self.spec.start) % MINUTE
        t = lo if offset == timedelta(0) else lo + (MINUTE - offset)
        out = []
        while t < hi:
            out.append(t)
            t += MINUTE
        return out

    def _fault_factor(self, module: str, ts: datetime) -> list[tuple[Fault, float]]:
        hits = []
        for fault in self.spec.injected_faults:
            if not fault.start <= ts < fault.end:
                continue
            depth = self._dependents.get(fault.module, {}).get(module)
            if depth is None:
                continue
            factor = PROPAGATION.get(depth, 0.0)
            if factor > 0:
                hits.append((fault, factor))
        return hits

    def _dependent_map(self) -> dict[str, dict[str, int]]:
        """For each module: map of perturbed module -> dependency depth (0 = itself)."""
        dependents: dict[str, list[str]] = {node["module"]: [] for node in self.spec.topology}
        for node in self.spec.topology:
            for dep in node.get("depends_on", []):
                dependents[dep].append(node["module"])
        out: dict[str, dict[str, int]] = {}
        for origin in dependents:
            depths = {origin: 0}
            frontier = [origin]
            for depth in (1, 2):
                nxt = []
                for m in frontier:
                    for d in dependents[m]:
                        if d not in depths:
                            depths[d] = depth
                            nxt.append(d)
                frontier = nxt
            out[origin] = depths
        return out

    def _query_metric(self, source_id: str, params: dict, window) -> QueryResult:
        _, module, metric = source_id.split(":", 2)
        baseline = self.spec.baseline_for(module, metric)
        if baseline is None:
            return QueryResult(rows=(), status="empty")
        rows = []
        for ts in self._minutes(window):
            rows.append(
                {
                    "ts": format_instant(ts),
                    "value": self._metric_value(source_id, module, metric, baseline, ts),
                    "module": module,
                    "metric": metric,
                }
            )
        agg = params.get("agg")
        if agg in ("max", "mean") and rows:
            values = [r["value"] for r in rows]
            value = max(values) if agg == "max" else round(sum(values) / len(values), 3)
            rows = [{"ts": rows[-1]["ts"], "value": value, "module": module, "metric": metric}]
        return QueryResult(rows=tuple(rows), status="ok" if rows else "empty")

    def _metric_value(self, source_id: str, module: str, metric: str, baseline: dict, ts: datetime) -> float:
        mean = float(baseline["mean"])
        noise = float(baseline.get("noise", 0.0))
        period = float(baseline.get("period_minutes", 1440))
        minute_index = int((ts - self.spec.start) / MINUTE)
        seasonal = 0.5 * noise * math.sin(2 * math.pi * minute_index / period) if period else 0.0
        jitter = noise * (2 * derived_unit(self.seed, source_id, minute_index) - 1)
        value = mean + seasonal + jitter
        for fault, factor in self._fault_factor(module, ts):
            keywords = _FAULT_METRIC_KEYWORDS.get(fault.kind, ())
            affected = [m for m in self.spec.metrics_of(module) if any(k in m for k in keywords)]
            if metric in affected or not affected:
                value += factor * fault.magnitude * mean
        return round(value, 3)

    def _query_logs(self, source_id: str, params: dict, window) -> QueryResult:
        module = source_id.split(":", 1)[1]
        rows = []
        for ts in self._minutes(window):
            minute_index = int((ts - self.spec.start) / MINUTE)
            rps = 900 + int(200 * derived_unit(self.seed, source_id, minute_index, "rps"))
            rows.append(
                {"ts": format_instant(ts), "level": "INFO", "module": module, "message": f"heartbeat ok rps={rps}"}
            )
            for fault, factor in self._fault_factor(module, ts):
                if fault.kind not in ("error_burst", "bad_release"):
                    continue
                for i in range(max(1, int(round(3 * factor * fault.magnitude)))):
                    rows.append(
                        {
                            "ts": format_instant(ts),
                            "level": "ERROR",
                            "module": module,
                            "message": f"request failed: upstream timeout (code=504) shard={i}",
                        }
                    )
        if "level" in params:
            rows = [r for r in rows if r["level"] == params["level"]]
        if "contains" in params:
            rows = [r for r in rows if params["contains"] in r["message"]]
        truncated = len(rows) > LOG_LINE_CAP
        if truncated:
            rows = rows[-LOG_LINE_CAP:]  # oldest lines dropped first
        return QueryResult(rows=tuple(rows), status="ok" if rows else "empty", truncated=truncated)

    def _change_rows(self, business: str) -> list[dict]:
        rows = []
        for event in self.spec.event_schedule:
            if event.kind is EventKind.RELEASE and event.business == business:
                rows.append(
                    {
                        "ts": format_instant(event.timestamp),
                        "business": business,
                        "module": event.module,
                        "change_ref": str(event.payload.get("version", "")),
                        "author": str(event.payload.get("author", "release-bot")),
                        "description": f"deploy {event.payload.get('version', '')} to {event.module}",
                    }
                )
        node_business = {n["module"]: n["business"] for n in self.spec.topology}
        for fault in self.spec.injected_faults:
            if fault.kind != "bad_release" or node_business.get(fault.root_cause_module) != business:
                continue
            ts = max(fault.start - timedelta(minutes=5), self.spec.start)
            rows.append(
                {
                    "ts": format_instant(ts),
                    "business": business,
                    "module": fault.root_cause_module,
                    "change_ref": fault.root_cause_change_ref or fault.fault_id,
                    "author": "release-bot",
                    "description": f"deploy {fault.root_cause_change_ref or fault.fault_id} to {fault.root_cause_module}",
                }
            )
        rows.sort(key=lambda r: (r["ts"], r["change_ref"]))
        return rows

    def _query_changes(self, source_id: str, params: dict, window) -> QueryResult:
        business = source_id.split(":", 1)[1]
        lo, hi = format_instant(window[0]), format_instant(window[1])
        rows = [r for r in self._change_rows(business) if lo <= r["ts"] < hi]
        if "module" in params:
            rows = [r for r in rows if r["module"] == params["module"]]
        return QueryResult(rows=tuple(rows), status="ok" if rows else "empty")


# ---------------------------------------------------------------------------
# drift injection


def inject_drift(spec: ScenarioSpec, schedule: dict[int, list[dict]]) -> ScenarioSpec:
    """Materialize a drift schedule into a scenario.

    Each schedule entry introduces a fault pattern at its day: alert events
    for the pattern's module are emitted daily from that day through the end
    of the scenario, backed by a matching injected fault. Entries flagged
    ``new_module`` extend the topology (optionally attached to an existing
    module); entries on existing modules must name one, otherwise SpecError.
    """
    if not schedule:
        return spec
    doc = spec.to_dict()
    doc["drift_schedule"] = {str(k): v for k, v in schedule.items()}
    doc["drift_applied"] = True
    out = ScenarioSpec.from_dict(doc)
    total_days = max(1, (out.end - out.start).days)
    modules = out.module_names()
    default_business = out.businesses()[0] if out.businesses() else "ops"

    for day in sorted(schedule):
        for entry in schedule[day]:
            module = entry["module"]
            business = entry.get("business", default_business)
            if entry.get("new_module", False):
                if module not in modules:
                    attach = entry.get("attach_to")
                    if attach is not None and attach not in modules:
                        raise SpecError(f"drift entry for {module}: attach_to {attach} unknown")
                    out.topology.append(
                        {"module": module, "business": business, "depends_on": [attach] if attach else []}
                    )
                    modules.add(module)
                    for metric, mean in (("latency_p99", 120.0), ("error_rate", 1.0)):
                        out.baselines.append(
                            {"module": module, "metric": metric, "mean": mean, "noise": mean * 0.05, "period_minutes": 1440}
                        )
            elif module not in modules:
                raise SpecError(f"drift schedule references unknown module {module}")

            family = entry.get("metric_family", "availability")
            fault_kind = entry.get("fault_kind", "error_burst")
            day_start = out.start + timedelta(days=day - 1)
            out.injected_faults.append(
                Fault(
                    fault_id=f"drift-{module}-d{day}",
                    start=day_start,
                    duration_minutes=(total_days - day + 1) * 1440,
                    module=module,
                    kind=fault_kind,
                    magnitude=float(entry.get("magnitude", 3.0)),
                    root_cause_module=module,
                    root_cause_change_ref=f"drift-{module}" if fault_kind == "bad_release" else None,
                )
            )
            per_day = int(entry.get("events_per_day", 3))
            for d in range(day, total_days + 1):
                for j in range(per_day):
                    ts = out.start + timedelta(days=d - 1, hours=8 + 2 * j, minutes=11)
                    out.event_schedule.append(
                        OperationalEvent(
                            event_id=f"drift-{module}-d{d}-{j}",
                            kind=EventKind.ALERT,
                            business=business,
                            module=module,
                            metric_family=MetricFamily(family),
                            timestamp=ts,
                            payload={"rule_id": f"drift-{module}", "fired_value": 9.9, "threshold": 3.0},
                        )
                    )
    out.event_schedule.sort(key=lambda e: (e.timestamp, e.event_id))
    return ScenarioSpec.from_dict(out.to_dict())  # revalidate
