"""opsloop: agentic operations-and-maintenance orchestration engine.

Routes operational events (releases, alerts, inspections) to scenario
agents, assembles per-event data and knowledge through evolvable skill
documents, produces structured diagnoses via a pluggable reasoner, and
self-evolves from practitioner feedback along two parallel pathways.
"""

from .core import (
    CaseRecord,
    Diagnosis,
    EventKind,
    Feedback,
    FeedbackClass,
    MetricFamily,
    OperationalEvent,
    RetrievedData,
    Verdict,
    normalize_tag,
)
from .dataplane import ScenarioSpec, SignalSimulator, SourceDescriptor, inject_drift
from .engine import Engine, EngineConfig
from .evaluation import (
    EvalDataset,
    PassAtKReport,
    production_report,
    run_correction_rounds,
    run_drift_experiment,
    run_pass_at_k,
)
from .knowledge import KnowledgeBase, KnowledgeEntry, embed
from .memory import CaseMemory, MemoryConfig
from .reasoner import HttpReasoner, MockReasoner, MockScript, ReasonerRequest, RequestKind, Sampling
from .skills import Skill, SkillPool

__version__ = "0.1.0"

__all__ = [
    "CaseRecord",
    "CaseMemory",
    "Diagnosis",
    "Engine",
    "EngineConfig",
    "EvalDataset",
    "EventKind",
    "Feedback",
    "FeedbackClass",
    "HttpReasoner",
    "KnowledgeBase",
    "KnowledgeEntry",
    "MemoryConfig",
    "MetricFamily",
    "MockReasoner",
    "MockScript",
    "OperationalEvent",
    "PassAtKReport",
    "ReasonerRequest",
    "RequestKind",
    "RetrievedData",
    "Sampling",
    "ScenarioSpec",
    "SignalSimulator",
    "Skill",
    "SkillPool",
    "SourceDescriptor",
    "Verdict",
    "embed",
    "inject_drift",
    "normalize_tag",
    "production_report",
    "run_correction_rounds",
    "run_drift_experiment",
    "run_pass_at_k",
    "__version__",
]
