"""Long-term operational knowledge with KV, KKV, and vector indices.

Definitive entries are keyed by (business, scenario); relational entries by a
directional (subject module, object module, metric) triple; semantic entries
are retrieved by cosine over a 256-dim feature-hashed embedding. The vector
backend is an exact scan: at desk scale it is both correct and its own
oracle, so no ANN service is involved.
"""

from __future__ import annotations

import hashlib
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Callable, Optional

import numpy as np

from .core import SCHEMA_VERSION, format_instant, normalize_tag, parse_instant, to_utc_ms, utc_now
from .errors import EmbedError, ParamError, SeedError, ValidationFailure

EMBED_DIM = 256
MERGE_COSINE = 0.95
PRUNE_AGE_DAYS = 30

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def embed(text: str) -> np.ndarray:
    """Deterministic unit-norm embedding: signed feature hashing of lowercase
    word unigrams and bigrams into 256 buckets."""
    if not text or not text.strip():
        raise EmbedError("cannot embed empty text")
    tokens = _TOKEN_RE.findall(text.lower())
    if not tokens:
        raise EmbedError(f"no tokens in {text!r}")
    features = list(tokens) + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
    vec = np.zeros(EMBED_DIM, dtype=np.float64)
    for feat in features:
        digest = hashlib.blake2b(feat.encode("utf-8"), digest_size=8).digest()
        h = int.from_bytes(digest, "big")
        bucket = h % EMBED_DIM
        sign = 1.0 if (h >> 8) & 1 else -1.0
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise EmbedError(f"degenerate embedding for {text!r}")
    return vec / norm


@dataclass
class KnowledgeEntry:
    """One unit of distilled or handbook operational knowledge."""

    entry_id: str
    kind: str  # definitive | relational | semantic
    text: str
    key: Optional[dict] = None
    provenance: str = "handbook_seed"  # handbook_seed | distilled
    source_case_id: Optional[str] = None
    created_at: datetime = field(default_factory=utc_now)
    last_hit_at: Optional[datetime] = None
    hit_count: int = 0
    tombstoned: bool = False
    flagged: bool = False  # marked contradicted; tombstoned at next consolidation

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValidationFailure(f"entry {self.entry_id}: text must be non-empty")
        if self.kind not in ("definitive", "relational", "semantic"):
            raise ValidationFailure(f"entry {self.entry_id}: unknown kind {self.kind}")
        if self.provenance not in ("handbook_seed", "distilled"):
            raise ValidationFailure(f"entry {self.entry_id}: unknown provenance {self.provenance}")
        if self.provenance == "distilled" and not self.source_case_id:
            raise ValidationFailure(f"entry {self.entry_id}: distilled entries need source_case_id")
        self.created_at = to_utc_ms(self.created_at)
        if self.last_hit_at is not None:
            self.last_hit_at = to_utc_ms(self.last_hit_at)
        if self.kind == "definitive":
            if not self.key or set(self.key) != {"business", "scenario"}:
                raise ValidationFailure(f"entry {self.entry_id}: definitive key needs business+scenario")
            self.key = {k: normalize_tag(v) for k, v in self.key.items()}
        elif self.kind == "relational":
            if not self.key or set(self.key) != {"subject", "object", "metric"}:
                raise ValidationFailure(f"entry {self.entry_id}: relational key needs subject+object+metric")
            self.key = {k: normalize_tag(v) for k, v in self.key.items()}
        elif self.key is not None:
            raise ValidationFailure(f"entry {self.entry_id}: semantic entries carry no key")

    def key_tuple(self) -> Optional[tuple]:
        if self.kind == "definitive":
            return ("kv", self.key["business"], self.key["scenario"])
        if self.kind == "relational":
            return ("kkv", self.key["subject"], self.key["object"], self.key["metric"])
        return None

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "entry_id": self.entry_id,
            "kind": self.kind,
            "key": self.key,
            "text": self.text,
            "provenance": self.provenance,
            "source_case_id": self.source_case_id,
            "created_at": format_instant(self.created_at),
            "last_hit_at": format_instant(self.last_hit_at) if self.last_hit_at else None,
            "hit_count": self.hit_count,
            "tombstoned": self.tombstoned,
            "flagged": self.flagged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnowledgeEntry":
        return cls(
            entry_id=d["entry_id"],
            kind=d["kind"],
            key=dict(d["key"]) if d.get("key") else None,
            text=d["text"],
            provenance=d.get("provenance", "handbook_seed"),
            source_case_id=d.get("source_case_id"),
            created_at=parse_instant(d["created_at"]) if d.get("created_at") else utc_now(),
            last_hit_at=parse_instant(d["last_hit_at"]) if d.get("last_hit_at") else None,
            hit_count=int(d.get("hit_count", 0)),
            tombstoned=bool(d.get("tombstoned", False)),
            flagged=bool(d.get("flagged", False)),
        )


@dataclass(frozen=True)
class ConsolidationReport:
    merged: int
    pruned: int
    contradictions_resolved: int

    def to_dict(self) -> dict:
        return {
            "merged": self.merged,
            "pruned": self.pruned,
            "contradictions_resolved": self.contradictions_resolved,
        }


def _recency_order(entries: list[KnowledgeEntry]) -> list[KnowledgeEntry]:
    return sorted(entries, key=lambda e: (-e.created_at.timestamp(), e.entry_id))


class KnowledgeBase:
    """Thread-safe in-memory store behind the three query surfaces.

    Queries never return tombstoned entries and bump each returned entry's
    hit count exactly once per query (``count_hits=False`` gives the
    read-only view that skill validation uses).
    """

    def __init__(self, clock: Callable[[], datetime] = utc_now):
        self._entries: dict[str, KnowledgeEntry] = {}
        self._vectors: dict[str, np.ndarray] = {}
        self._lock = threading.RLock()
        self._clock = clock

    # -- writes ---------------------------------------------------------

    def put_entry(self, entry: KnowledgeEntry) -> str:
        with self._lock:
            if entry.kind == "semantic":
                self._vectors[entry.entry_id] = embed(entry.text)
            self._entries[entry.entry_id] = entry
        return entry.entry_id

    def flag_for_tombstone(self, entry_id: str) -> None:
        """Mark an entry contradicted; it stays queryable until the next
        consolidation run tombstones it."""
        with self._lock:
            if entry_id in self._entries:
                self._entries[entry_id].flagged = True

    def seed_from_handbook(self, directory) -> int:
        """Load entry documents; entry_ids already present are left untouched
        so consolidation tombstones are never resurrected by a reload."""
        from pathlib import Path

        count = 0
        for path in sorted(Path(directory).glob("*.json")):
            try:
                import json

                with open(path, "r", encoding="utf-8") as fh:
                    entry = KnowledgeEntry.from_dict(json.load(fh))
            except Exception as exc:
                raise SeedError(path, str(exc)) from exc
            with self._lock:
                if entry.entry_id in self._entries:
                    continue
                self.put_entry(entry)
                count += 1
        return count

    # -- queries --------------------------------------------------------

    def _record_hits(self, entries: list[KnowledgeEntry], count_hits: bool) -> None:
        if not count_hits:
            return
        now = self._clock()
        for e in entries:
            e.hit_count += 1
            e.last_hit_at = now

    def query_kv(self, business: str, scenario: str, count_hits: bool = True) -> list[KnowledgeEntry]:
        key = ("kv", normalize_tag(business), normalize_tag(scenario))
        with self._lock:
            live = [e for e in self._entries.values() if not e.tombstoned and e.key_tuple() == key]
            out = _recency_order(live)
            self._record_hits(out, count_hits)
            return out

    def query_kkv(self, subject: str, object_: str, metric: str, count_hits: bool = True) -> list[KnowledgeEntry]:
        key = ("kkv", normalize_tag(subject), normalize_tag(object_), normalize_tag(metric))
        with self._lock:
            live = [e for e in self._entries.values() if not e.tombstoned and e.key_tuple() == key]
            out = _recency_order(live)
            self._record_hits(out, count_hits)
            return out

    def query_vector(
        self, query_text: str, top_k: int, count_hits: bool = True
    ) -> list[tuple[KnowledgeEntry, float]]:
        if not 1 <= top_k <= 20:
            raise ParamError(f"top_k {top_k} outside [1, 20]")
        qvec = embed(query_text)
        with self._lock:
            live = [e for e in self._entries.values() if not e.tombstoned and e.kind == "semantic"]
            scored = [(e, float(np.dot(qvec, self._vectors[e.entry_id]))) for e in live]
            scored.sort(key=lambda pair: (-pair[1], pair[0].entry_id))
            out = scored[:top_k]
            self._record_hits([e for e, _ in out], count_hits)
            return out

    def get(self, entry_id: str) -> Optional[KnowledgeEntry]:
        with self._lock:
            return self._entries.get(entry_id)

    def live_entries(self) -> list[KnowledgeEntry]:
        with self._lock:
            return [e for e in self._entries.values() if not e.tombstoned]

    def snapshot(self) -> list[dict]:
        """Canonical view of the full store, for purity and isolation tests."""
        with self._lock:
            return [self._entries[k].to_dict() for k in sorted(self._entries)]

    # -- consolidation ----------------------------------------------------

    def consolidate(self, now: Optional[datetime] = None) -> ConsolidationReport:
        """Daily dedup/prune pass: flagged entries and same-key duplicates are
        resolved newest-wins, near-identical semantic entries merged, and
        never-hit entries older than the TTL pruned. Idempotent."""
        now = to_utc_ms(now) if now else self._clock()
        merged = pruned = contradictions = 0
        with self._lock:
            live = [e for e in self._entries.values() if not e.tombstoned]

            for e in live:
                if e.flagged:
                    e.tombstoned = True
                    e.flagged = False
                    contradictions += 1
            live = [e for e in live if not e.tombstoned]

            by_key: dict[tuple, list[KnowledgeEntry]] = {}
            for e in live:
                kt = e.key_tuple()
                if kt is not None:
                    by_key.setdefault(kt, []).append(e)
            for entries in by_key.values():
                ordered = _recency_order(entries)
                for stale in ordered[1:]:
                    stale.tombstoned = True
                    contradictions += 1
            live = [e for e in live if not e.tombstoned]

            semantic = _recency_order([e for e in live if e.kind == "semantic"])
            kept: list[np.ndarray] = []
            for e in semantic:
                vec = self._vectors[e.entry_id]
                if any(float(np.dot(vec, k)) >= MERGE_COSINE for k in kept):
                    e.tombstoned = True
                    merged += 1
                else:
                    kept.append(vec)
            live = [e for e in live if not e.tombstoned]

            ttl = timedelta(days=PRUNE_AGE_DAYS)
            for e in live:
                if e.hit_count == 0 and now - e.created_at > ttl:
                    e.tombstoned = True
                    pruned += 1

        return ConsolidationReport(merged=merged, pruned=pruned, contradictions_resolved=contradictions)
