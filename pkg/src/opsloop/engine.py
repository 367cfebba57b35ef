"""Composition root: wires the stores, the reasoner, and the agent runtime
for one scenario, with a simulated clock and a daily consolidation trigger.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional

from .agents import AgentRuntime
from .core import OperationalEvent, utc_now
from .dataplane import ScenarioSpec, SignalSimulator, inject_drift
from .feedback import FeedbackRouter
from .knowledge import KnowledgeBase
from .lifecycle import SkillLifecycle
from .memory import CaseMemory, MemoryConfig
from .reasoner import HttpReasoner, MockReasoner, MockScript, RecordingReasoner
from .skills import SkillPool

logger = logging.getLogger(__name__)


@dataclass
class EngineConfig:
    """Everything needed to stand up one engine instance."""

    scenario: ScenarioSpec
    seed: int = 0
    mock_script_path: Optional[str] = None
    mock_script: Optional[MockScript] = None
    reasoner_backend: str = "mock"  # mock | http
    http_endpoint: Optional[str] = None
    http_timeout_ms: int = 30000
    pool_dir: Optional[str] = None
    seed_skills_dir: Optional[str] = None
    handbook_dir: Optional[str] = None
    capabilities_dir: Optional[str] = None
    transcripts_dir: Optional[str] = None
    archive_path: Optional[str] = None
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    generation_enabled: bool = True
    knowledge_enabled: bool = True
    wall_clock: bool = False


class Engine:
    """One scenario-bound engine: agents, stores, feedback loop, clock."""

    def __init__(self, config: EngineConfig):
        self.config = config
        self.spec = config.scenario
        if self.spec.drift_schedule and not self.spec.drift_applied:
            self.spec = inject_drift(self.spec, self.spec.drift_schedule)
        self.simulator = SignalSimulator(self.spec, seed=config.seed)

        self._sim_now: datetime = self.spec.start
        self._consolidated_through_day = 0

        backend = self._build_backend(config)
        self.reasoner = RecordingReasoner(backend)

        self.pool = SkillPool(directory=config.pool_dir)
        if config.seed_skills_dir:
            self.pool.reset_to_seed(config.seed_skills_dir)
        self.knowledge = KnowledgeBase(clock=self.now)
        if config.handbook_dir:
            self.knowledge.seed_from_handbook(config.handbook_dir)
        self.memory = CaseMemory(
            config=config.memory,
            knowledge=self.knowledge,
            reasoner=self.reasoner,
            archive_path=config.archive_path,
            clock=self.now,
        )
        self.lifecycle = SkillLifecycle(
            pool=self.pool,
            simulator=self.simulator,
            knowledge=self.knowledge,
            reasoner=self.reasoner,
            capabilities_dir=config.capabilities_dir,
            transcripts_dir=config.transcripts_dir,
        )
        self.runtime = AgentRuntime(
            pool=self.pool,
            simulator=self.simulator,
            knowledge=self.knowledge,
            memory=self.memory,
            lifecycle=self.lifecycle,
            reasoner=self.reasoner,
            generation_enabled=config.generation_enabled,
            knowledge_enabled=config.knowledge_enabled,
            seed=config.seed,
            working_memory_k=config.memory.working_memory_k,
            clock_advance=self.advance_to,
        )
        self.router = FeedbackRouter(
            memory=self.memory, lifecycle=self.lifecycle, reasoner=self.reasoner, seed=config.seed
        )
        self.eval_reports: dict[str, dict] = {}

    @staticmethod
    def _build_backend(config: EngineConfig):
        if config.reasoner_backend == "http":
            if not config.http_endpoint:
                raise ValueError("http reasoner backend requires an endpoint")
            return HttpReasoner(config.http_endpoint, timeout_ms=config.http_timeout_ms)
        if config.mock_script is not None:
            return MockReasoner(config.mock_script)
        script = MockScript.from_file(config.mock_script_path) if config.mock_script_path else MockScript()
        return MockReasoner(script)

    # -- clock -----------------------------------------------------------

    def now(self) -> datetime:
        if self.config.wall_clock:
            return utc_now()
        return self._sim_now

    def advance_to(self, ts: datetime) -> None:
        """Move the simulated clock forward and run daily consolidation for
        every completed simulated day."""
        if self.config.wall_clock:
            return
        if ts > self._sim_now:
            self._sim_now = ts
        day = self.spec.day_of(self._sim_now)
        while self._consolidated_through_day < day - 1:
            self._consolidated_through_day += 1
            report = self.knowledge.consolidate(self._sim_now)
            logger.debug(
                "daily consolidation for day %d: %s", self._consolidated_through_day, report.to_dict()
            )

    # -- convenience -----------------------------------------------------

    def run_event(self, event: OperationalEvent, **kwargs):
        return self.runtime.run(event, **kwargs)

    def store_sizes(self) -> dict:
        return {
            "skills": self.pool.size(),
            "knowledge_live": len(self.knowledge.live_entries()),
            "cases": self.memory.size(),
        }
