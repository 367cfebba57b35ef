"""Versioned Skill documents and the event-to-skill keyword matcher.

A Skill binds three components: a LoadDataSchema declaring what to retrieve,
a PromptTemplate declaring how to reason over it, and Meta carrying the tags
used for matching. Skills are stored append-only per (skill_id, version);
matching always sees a consistent snapshot of the latest versions.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .core import OperationalEvent, SCHEMA_VERSION, canonical_dumps, normalize_tag
from .errors import NotFound, SeedError, StaleVersion, ValidationFailure

_PLACEHOLDER_RE = re.compile(r"\{(data|knowledge)\.([^}]+)\}")

# Composition considers at most this many matched skills, best first. Feeding
# every match would dilute the prompt, which is the failure mode the skill
# mechanism exists to prevent.
COMPOSITION_CAP = 3


@dataclass(frozen=True)
class SourceCall:
    source_id: str
    params: dict = field(default_factory=dict)
    window: dict = field(default_factory=lambda: {"minutes_before": 30, "minutes_after": 0})
    mandatory: bool = True
    expected_fields: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "source_id": self.source_id,
            "params": dict(self.params),
            "window": dict(self.window),
            "mandatory": self.mandatory,
            "expected_fields": list(self.expected_fields),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SourceCall":
        return cls(
            source_id=d["source_id"],
            params=dict(d.get("params", {})),
            window=dict(d.get("window", {"minutes_before": 30, "minutes_after": 0})),
            mandatory=bool(d.get("mandatory", True)),
            expected_fields=tuple(d.get("expected_fields", [])),
        )


@dataclass(frozen=True)
class KnowledgeQuery:
    index: str  # kv | kkv | vector
    key_parts: dict = field(default_factory=dict)
    query_text: str = ""
    top_k: int = 5
    mandatory: bool = False

    def __post_init__(self) -> None:
        if self.index not in ("kv", "kkv", "vector"):
            raise ValidationFailure(f"unknown knowledge index {self.index!r}")
        if not 1 <= self.top_k <= 20:
            raise ValidationFailure(f"knowledge query top_k {self.top_k} outside [1, 20]")

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "key_parts": dict(self.key_parts),
            "query_text": self.query_text,
            "top_k": self.top_k,
            "mandatory": self.mandatory,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnowledgeQuery":
        return cls(
            index=d["index"],
            key_parts=dict(d.get("key_parts", {})),
            query_text=d.get("query_text", ""),
            top_k=int(d.get("top_k", 5)),
            mandatory=bool(d.get("mandatory", False)),
        )


@dataclass(frozen=True)
class LoadDataSchema:
    source_calls: tuple[SourceCall, ...]
    knowledge_queries: tuple[KnowledgeQuery, ...] = ()

    def __post_init__(self) -> None:
        if not self.source_calls:
            raise ValidationFailure("load_data_schema needs at least one source_call")

    def to_dict(self) -> dict:
        return {
            "source_calls": [c.to_dict() for c in self.source_calls],
            "knowledge_queries": [q.to_dict() for q in self.knowledge_queries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LoadDataSchema":
        return cls(
            source_calls=tuple(SourceCall.from_dict(c) for c in d.get("source_calls", [])),
            knowledge_queries=tuple(KnowledgeQuery.from_dict(q) for q in d.get("knowledge_queries", [])),
        )


@dataclass(frozen=True)
class PromptTemplate:
    steps: tuple[str, ...]
    output_contract: str = "verdict, root_cause, evidence, actions, confidence"

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValidationFailure("prompt needs at least one step")

    def placeholders(self) -> list[tuple[str, str]]:
        found = []
        for step in self.steps:
            found.extend(_PLACEHOLDER_RE.findall(step))
        return found

    def to_dict(self) -> dict:
        return {"steps": list(self.steps), "output_contract": self.output_contract}

    @classmethod
    def from_dict(cls, d: dict) -> "PromptTemplate":
        return cls(steps=tuple(d.get("steps", [])), output_contract=d.get("output_contract", ""))


@dataclass(frozen=True)
class SkillMeta:
    skill_id: str
    name: str
    version: int
    description: str
    tags: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.skill_id:
            raise ValidationFailure("skill_id must be non-empty")
        if self.version < 1:
            raise ValidationFailure(f"skill {self.skill_id}: version must be >= 1")
        if not self.tags:
            raise ValidationFailure(f"skill {self.skill_id}: tags must be non-empty")
        object.__setattr__(self, "tags", tuple(sorted({normalize_tag(t) for t in self.tags})))

    def to_dict(self) -> dict:
        return {
            "skill_id": self.skill_id,
            "name": self.name,
            "version": self.version,
            "description": self.description,
            "tags": list(self.tags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SkillMeta":
        return cls(
            skill_id=d["skill_id"],
            name=d.get("name", d["skill_id"]),
            version=int(d["version"]),
            description=d.get("description", ""),
            tags=tuple(d.get("tags", [])),
        )


@dataclass(frozen=True)
class Skill:
    meta: SkillMeta
    load_data_schema: LoadDataSchema
    prompt: PromptTemplate

    def __post_init__(self) -> None:
        declared_sources = {c.source_id for c in self.load_data_schema.source_calls}
        declared_indices = {q.index for q in self.load_data_schema.knowledge_queries}
        for kind, name in self.prompt.placeholders():
            if kind == "data" and name not in declared_sources:
                raise ValidationFailure(
                    f"skill {self.meta.skill_id}: prompt references undeclared source {name!r}"
                )
            if kind == "knowledge" and name not in declared_indices:
                raise ValidationFailure(
                    f"skill {self.meta.skill_id}: prompt references undeclared knowledge index {name!r}"
                )

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "meta": self.meta.to_dict(),
            "load_data_schema": self.load_data_schema.to_dict(),
            "prompt": self.prompt.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Skill":
        return cls(
            meta=SkillMeta.from_dict(d["meta"]),
            load_data_schema=LoadDataSchema.from_dict(d["load_data_schema"]),
            prompt=PromptTemplate.from_dict(d["prompt"]),
        )

    def component_bytes(self, component: str) -> str:
        """Canonical encoding of one component, for byte-identity checks."""
        if component == "load_data_schema":
            return canonical_dumps(self.load_data_schema.to_dict())
        if component == "prompt":
            return canonical_dumps(self.prompt.to_dict())
        raise ValueError(f"unknown component {component}")

    def with_version(self, version: int) -> "Skill":
        meta = SkillMeta(
            skill_id=self.meta.skill_id,
            name=self.meta.name,
            version=version,
            description=self.meta.description,
            tags=self.meta.tags,
        )
        return Skill(meta=meta, load_data_schema=self.load_data_schema, prompt=self.prompt)


def match_score(event: OperationalEvent, skill: Skill) -> int:
    return len(set(skill.meta.tags) & event.tag_set())


class SkillPool:
    """Append-only versioned store with keyword matching.

    When ``directory`` is set, each version is mirrored to
    ``<dir>/<skill_id>/v<version>.json`` in the canonical serialization.
    """

    def __init__(self, directory: Optional[str] = None):
        self._lock = threading.RLock()
        self._versions: dict[str, dict[int, Skill]] = {}
        self.directory = Path(directory) if directory else None
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)
            self._load_directory()

    # -- storage ----------------------------------------------------------

    def _load_directory(self) -> None:
        for skill_dir in sorted(self.directory.iterdir()):
            if not skill_dir.is_dir():
                continue
            for path in sorted(skill_dir.glob("v*.json")):
                with open(path, "r", encoding="utf-8") as fh:
                    skill = Skill.from_dict(json.load(fh))
                self._versions.setdefault(skill.meta.skill_id, {})[skill.meta.version] = skill

    def _persist(self, skill: Skill) -> None:
        if not self.directory:
            return
        target = self.directory / skill.meta.skill_id
        target.mkdir(parents=True, exist_ok=True)
        with open(target / f"v{skill.meta.version}.json", "w", encoding="utf-8") as fh:
            fh.write(canonical_dumps(skill.to_dict()))

    def put(self, skill: Skill) -> tuple[str, int]:
        with self._lock:
            history = self._versions.get(skill.meta.skill_id)
            if history is None:
                if skill.meta.version != 1:
                    raise StaleVersion(
                        f"skill {skill.meta.skill_id} is new; first version must be 1, got {skill.meta.version}"
                    )
                self._versions[skill.meta.skill_id] = {1: skill}
            else:
                head = max(history)
                if skill.meta.version != head + 1:
                    raise StaleVersion(
                        f"skill {skill.meta.skill_id}: expected version {head + 1}, got {skill.meta.version}"
                    )
                history[skill.meta.version] = skill
            self._persist(skill)
            return skill.meta.skill_id, skill.meta.version

    def get(self, skill_id: str, version: Optional[int] = None) -> Skill:
        with self._lock:
            history = self._versions.get(skill_id)
            if not history:
                raise NotFound(f"skill {skill_id} not found")
            if version is None:
                return history[max(history)]
            if version not in history:
                raise NotFound(f"skill {skill_id} has no version {version}")
            return history[version]

    def latest_version(self, skill_id: str) -> Optional[int]:
        with self._lock:
            history = self._versions.get(skill_id)
            return max(history) if history else None

    def heads(self) -> list[Skill]:
        with self._lock:
            return [history[max(history)] for _, history in sorted(self._versions.items())]

    def size(self) -> int:
        with self._lock:
            return len(self._versions)

    def reset_to_seed(self, seed_dir) -> int:
        """Drop everything and load the seed documents at version 1."""
        seed_path = Path(seed_dir)
        loaded: list[Skill] = []
        for path in sorted(seed_path.glob("*.json")):
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    doc = json.load(fh)
                doc["meta"] = dict(doc["meta"], version=1)
                loaded.append(Skill.from_dict(doc))
            except SeedError:
                raise
            except Exception as exc:
                raise SeedError(path, str(exc)) from exc
        with self._lock:
            self._versions = {}
            if self.directory:
                import shutil

                for child in self.directory.iterdir():
                    if child.is_dir():
                        shutil.rmtree(child)
            for skill in loaded:
                if skill.meta.skill_id in self._versions:
                    raise SeedError(seed_path, f"duplicate skill_id {skill.meta.skill_id} in seed")
                self._versions[skill.meta.skill_id] = {1: skill}
                self._persist(skill)
            return len(loaded)

    # -- matching ----------------------------------------------------------

    def match(self, event: OperationalEvent) -> list[Skill]:
        """Skills whose tags cover the event's business and module, best first.

        Score is the tag-set intersection with {business, module, kind,
        metric family}; ties break by version desc then skill_id asc. Only the
        latest version of each skill_id is eligible. A pure function of pool
        contents and event.
        """
        heads = self.heads()
        required = {event.business, event.module}
        matched = [s for s in heads if required <= set(s.meta.tags)]
        matched.sort(key=lambda s: (-match_score(event, s), -s.meta.version, s.meta.skill_id))
        return matched

    # -- snapshots (eval isolation) -----------------------------------------

    def snapshot(self) -> str:
        """Canonical serialization of the entire pool, all versions."""
        with self._lock:
            doc = {
                sid: {str(v): history[v].to_dict() for v in sorted(history)}
                for sid, history in sorted(self._versions.items())
            }
        return canonical_dumps(doc)

    def watermark(self) -> dict[str, int]:
        with self._lock:
            return {sid: max(history) for sid, history in self._versions.items()}

    def rollback(self, watermark: dict[str, int]) -> None:
        """Drop skills and versions created after the watermark (per-attempt
        isolation in eval runs)."""
        with self._lock:
            for sid in list(self._versions):
                if sid not in watermark:
                    del self._versions[sid]
                    continue
                history = self._versions[sid]
                for version in [v for v in history if v > watermark[sid]]:
                    del history[version]
            if self.directory:
                import shutil

                for child in self.directory.iterdir():
                    if child.is_dir() and child.name not in watermark:
                        shutil.rmtree(child)
                    elif child.is_dir():
                        for vfile in child.glob("v*.json"):
                            if int(vfile.stem[1:]) > watermark[child.name]:
                                vfile.unlink()


# ---------------------------------------------------------------------------
# structural diff (gateway + console)


def _flatten(prefix: str, value) -> dict[str, object]:
    if isinstance(value, dict):
        out = {}
        for k in sorted(value):
            out.update(_flatten(f"{prefix}.{k}" if prefix else str(k), value[k]))
        return out
    if isinstance(value, list):
        out = {}
        for i, item in enumerate(value):
            out.update(_flatten(f"{prefix}[{i}]", item))
        return out
    return {prefix: value}


def diff_components(old: Skill, new: Skill) -> dict[str, list[dict]]:
    """Field-level structural diff between two skill versions, grouped by
    component. Unchanged components map to empty lists."""
    result: dict[str, list[dict]] = {}
    for component in ("meta", "load_data_schema", "prompt"):
        before = _flatten("", old.to_dict()[component])
        after = _flatten("", new.to_dict()[component])
        changes = []
        for path in sorted(set(before) | set(after)):
            b, a = before.get(path), after.get(path)
            if b != a:
                changes.append({"path": path, "before": b, "after": a})
        result[component] = changes
    return result
