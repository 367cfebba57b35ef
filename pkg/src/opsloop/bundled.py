"""Access to the bundled desk-scale benchmarks and engine factories for the
evaluation protocols."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from .dataplane import ScenarioSpec
from .engine import Engine, EngineConfig
from .errors import DatasetError
from .evaluation import EvalDataset
from .memory import MemoryConfig

BUNDLED_ROOT = Path(__file__).parent / "bundled"

_ALIASES = {
    "table3-replay": "benchmark",
    "table4-replay": "benchmark",
    "table5-replay": "benchmark",
    "ablation": "benchmark",
    "benchmark": "benchmark",
    "benchmark-104": "benchmark",
    "bundled-13day": "drift13",
    "drift13": "drift13",
    "drift-13day": "drift13",
}

_MODE_SCRIPTS = {"full": "mock_full.json", "static": "mock_static.json", "noknow": "mock_noknow.json"}


@dataclass(frozen=True)
class Bundle:
    root: Path

    def scenario(self) -> ScenarioSpec:
        with open(self.root / "scenario.json", "r", encoding="utf-8") as fh:
            return ScenarioSpec.from_dict(json.load(fh))

    def dataset(self) -> EvalDataset:
        path = self.root / "dataset.json"
        if not path.exists():
            raise DatasetError(f"bundle {self.root.name} ships no eval dataset (scenario-only bundle)")
        return EvalDataset.from_file(path)

    def script_path(self, mode: str = "full") -> Optional[str]:
        candidates = [_MODE_SCRIPTS.get(mode, ""), "mock.json"]
        for name in candidates:
            if name and (self.root / name).exists():
                return str(self.root / name)
        return None

    def corrections(self) -> dict:
        with open(self.root / "corrections.json", "r", encoding="utf-8") as fh:
            return json.load(fh)

    def dir(self, name: str) -> Optional[str]:
        path = self.root / name
        return str(path) if path.exists() else None


def load_bundle(name_or_path: str) -> Bundle:
    """Resolve a bundled benchmark by alias (``table3-replay``,
    ``bundled-13day``) or by filesystem path."""
    if name_or_path in _ALIASES:
        root = BUNDLED_ROOT / _ALIASES[name_or_path]
    else:
        root = Path(name_or_path)
    if not (root / "scenario.json").exists():
        raise DatasetError(f"no bundle at {root} (known: {sorted(set(_ALIASES))})")
    return Bundle(root=root)


def engine_factory(
    bundle: Bundle,
    mode: str = "full",
    seed: int = 0,
    *,
    archive_path: Optional[str] = None,
    transcripts_dir: Optional[str] = None,
    memory: Optional[MemoryConfig] = None,
) -> Callable[[], Engine]:
    """Factory for fresh engines bound to a bundle.

    ``static`` disables skill generation and swaps in the hand-authored seed
    pool; ``noknow`` disables knowledge and working-memory retrieval. Each
    call constructs a brand new engine, which is what gives eval runs their
    clean-seed reset.
    """
    if mode not in ("full", "static", "noknow"):
        raise DatasetError(f"unknown mode {mode!r}")
    seeds = "seed_skills_static" if mode == "static" else "seed_skills"

    def build() -> Engine:
        config = EngineConfig(
            scenario=bundle.scenario(),
            seed=seed,
            mock_script_path=bundle.script_path(mode),
            seed_skills_dir=bundle.dir(seeds),
            handbook_dir=bundle.dir("handbook"),
            capabilities_dir=bundle.dir("capabilities"),
            generation_enabled=(mode != "static"),
            knowledge_enabled=(mode != "noknow"),
            archive_path=archive_path,
            transcripts_dir=transcripts_dir,
            memory=memory or MemoryConfig(),
        )
        return Engine(config)

    return build
