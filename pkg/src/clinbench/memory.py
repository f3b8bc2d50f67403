"""Patient memory store and four-signal retrieval (semantic, recency, importance, emotion)."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

from .affect import EMOTIONS, N_EMOTIONS

UNIT_NORM_TOL = 1e-6

Embedder = Callable[[str], np.ndarray]


class MemoryStoreError(ValueError):
    """Invalid memory record or store operation."""


def _unit_vector(v) -> np.ndarray:
    arr = np.array(v, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass
class MemoryRecord:
    memory_id: str
    text: str
    embedding: np.ndarray
    emotions: np.ndarray  # unit-range form, one entry per EMOTIONS
    importance: float
    created_at: datetime
    last_accessed: datetime | None = None

    def __post_init__(self):
        if not self.memory_id:
            raise MemoryStoreError("memory_id is empty")
        self.embedding = _unit_vector(self.embedding)
        self.emotions = _unit_vector(self.emotions)
        if self.embedding.ndim != 1:
            raise MemoryStoreError(f"{self.memory_id}: embedding must be 1-D")
        norm = float(np.linalg.norm(self.embedding))
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise MemoryStoreError(f"{self.memory_id}: embedding norm {norm:.8f} is not 1")
        if self.emotions.shape != (N_EMOTIONS,):
            raise MemoryStoreError(f"{self.memory_id}: expected {N_EMOTIONS} emotion components")
        if np.any(self.emotions < 0) or np.any(self.emotions > 1):
            raise MemoryStoreError(f"{self.memory_id}: emotion components must lie in [0, 1]")
        if not 0.0 <= self.importance <= 1.0:
            raise MemoryStoreError(f"{self.memory_id}: importance {self.importance} outside [0, 1]")
        if self.last_accessed is None:
            self.last_accessed = self.created_at
        if self.last_accessed < self.created_at:
            raise MemoryStoreError(f"{self.memory_id}: last_accessed precedes created_at")


@dataclass(frozen=True)
class RetrievalWeights:
    w_semantic: float = 1.0
    w_recency: float = 1.0
    w_importance: float = 1.0
    w_emotion: float = 1.0
    decay_rate: float = 0.995
    half_life_unit: timedelta = timedelta(hours=1)

    def __post_init__(self):
        ws = (self.w_semantic, self.w_recency, self.w_importance, self.w_emotion)
        if any(w < 0 for w in ws) or sum(ws) <= 0:
            raise MemoryStoreError("weights must be nonnegative with a positive sum")
        if not 0.0 < self.decay_rate < 1.0:
            raise MemoryStoreError(f"decay_rate {self.decay_rate} outside (0, 1)")
        if self.half_life_unit <= timedelta(0):
            raise MemoryStoreError("half_life_unit must be positive")

    def scaled(self, factor: float) -> "RetrievalWeights":
        return replace(
            self,
            w_semantic=self.w_semantic * factor,
            w_recency=self.w_recency * factor,
            w_importance=self.w_importance * factor,
            w_emotion=self.w_emotion * factor,
        )


def semantic_score(query: np.ndarray, m: MemoryRecord) -> float:
    """Cosine similarity of unit vectors mapped from [-1, 1] onto [0, 1]."""
    query = np.asarray(query, dtype=float)
    if query.shape != m.embedding.shape:
        raise MemoryStoreError(f"dimension mismatch: query {query.shape} vs memory {m.embedding.shape}")
    cos = float(np.clip(query @ m.embedding, -1.0, 1.0))
    return (1.0 + cos) / 2.0


def recency_score(now: datetime, m: MemoryRecord, decay_rate: float, unit: timedelta = timedelta(hours=1)) -> float:
    if now < m.last_accessed:
        raise MemoryStoreError(f"{m.memory_id}: now precedes last_accessed")
    return decay_rate ** ((now - m.last_accessed) / unit)


def importance_score(m: MemoryRecord) -> float:
    return m.importance


@dataclass
class MemoryStore:
    records: list[MemoryRecord] = field(default_factory=list)

    def __post_init__(self):
        ids = [r.memory_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise MemoryStoreError("duplicate memory_id in store")
        self._ids = set(ids)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[MemoryRecord]:
        return iter(self.records)

    def __contains__(self, memory_id: str) -> bool:
        return memory_id in self._ids

    def get(self, memory_id: str) -> MemoryRecord:
        for r in self.records:
            if r.memory_id == memory_id:
                return r
        raise KeyError(memory_id)

    def ids(self) -> set[str]:
        return set(self._ids)

    def copy(self) -> "MemoryStore":
        # embeddings/emotions are read-only arrays and can be shared
        return MemoryStore([replace(r) for r in self.records])


def add_memory(store: MemoryStore, record: MemoryRecord) -> MemoryStore:
    if record.memory_id in store:
        raise MemoryStoreError(f"duplicate memory_id {record.memory_id!r}")
    store.records.append(record)
    store._ids.add(record.memory_id)
    return store


def retrieve(
    store: MemoryStore,
    query: np.ndarray,
    mood: np.ndarray,
    now: datetime,
    k: int,
    weights: RetrievalWeights = RetrievalWeights(),
) -> list[tuple[MemoryRecord, float]]:
    """Top-``k`` memories by the weighted four-signal score.

    Ties go to the newer ``created_at``, then the smaller ``memory_id``.
    Returned records have ``last_accessed`` set to ``now``.
    """
    if k < 1:
        raise MemoryStoreError("k must be >= 1")
    records = store.records
    if not records:
        return []
    query = np.asarray(query, dtype=float)
    mood = np.asarray(mood, dtype=float)

    emb = np.stack([r.embedding for r in records])
    if emb.shape[1] != query.shape[0]:
        raise MemoryStoreError(f"dimension mismatch: query {query.shape} vs memories {emb.shape[1]}")
    emo = np.stack([r.emotions for r in records])
    elapsed = np.array([(now - r.last_accessed) / weights.half_life_unit for r in records])
    if np.any(elapsed < 0):
        raise MemoryStoreError("now precedes a memory's last_accessed")
    importance = np.array([r.importance for r in records])

    # row-wise sums rather than BLAS mat-vec: identical records must get bitwise-identical
    # scores so that ties are decided by the tie-break keys, not by their position
    semantic = (1.0 + np.clip((emb * query).sum(axis=1), -1.0, 1.0)) / 2.0
    recency = weights.decay_rate**elapsed
    dot = (emo * mood).sum(axis=1)
    denom = (emo * emo).sum(axis=1) + float(mood @ mood) - dot
    zero = denom == 0.0
    emotion = np.where(zero, 1.0, dot / np.where(zero, 1.0, denom))

    score = (
        weights.w_semantic * semantic
        + weights.w_recency * recency
        + weights.w_importance * importance
        + weights.w_emotion * emotion
    )

    created = np.array([r.created_at.timestamp() for r in records])
    id_rank = np.empty(len(records), dtype=int)
    id_rank[sorted(range(len(records)), key=lambda i: records[i].memory_id)] = np.arange(len(records))
    # lexsort: last key is primary
    order = np.lexsort((id_rank, -created, -score))[:k]

    out = []
    for i in order:
        records[i].last_accessed = now
        out.append((records[i], float(score[i])))
    return out


# -- embedders -----------------------------------------------------------------

_TOKEN = re.compile(r"[a-z0-9]+")


class HashEmbedder:
    """Deterministic bag-of-words feature-hashing embedder producing unit vectors.

    Texts with no tokens fall back to a pseudo-random direction seeded by the
    text itself, so every input maps to a valid unit vector.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def _digest(self, token: str) -> bytes:
        return hashlib.sha256(f"{self.seed}|{token}".encode()).digest()

    def __call__(self, text: str) -> np.ndarray:
        v = np.zeros(self.dim)
        for tok in _TOKEN.findall(text.lower()):
            d = self._digest(tok)
            idx = int.from_bytes(d[:4], "little") % self.dim
            v[idx] += 1.0 if d[4] & 1 else -1.0
        norm = np.linalg.norm(v)
        if norm == 0.0:
            rng = np.random.default_rng(int.from_bytes(self._digest("\0" + text)[:8], "little"))
            v = rng.standard_normal(self.dim)
            norm = np.linalg.norm(v)
        return v / norm


class EmbeddingError(RuntimeError):
    def __init__(self, text: str, cause: Exception):
        super().__init__(f"embedder failed on {text[:80]!r}: {cause}")
        self.text = text


def embed(embedder: Embedder, text: str) -> np.ndarray:
    try:
        v = np.asarray(embedder(text), dtype=float)
    except Exception as exc:
        raise EmbeddingError(text, exc) from exc
    return v


# -- dump format -----------------------------------------------------------------


def dump_memories(store: Iterable[MemoryRecord], path: str | Path) -> tuple[Path, Path]:
    """Write one JSON line per record plus a sidecar text file of embeddings (one row per record)."""
    path = Path(path)
    sidecar = path.with_suffix(path.suffix + ".emb.txt")
    records = list(store)
    with path.open("w", encoding="utf-8") as fh:
        for r in records:
            row = {
                "memory_id": r.memory_id,
                "created_at": r.created_at.isoformat(),
                "last_accessed": r.last_accessed.isoformat(),
                "importance": r.importance,
                "emotions": dict(zip(EMOTIONS, (float(x) for x in r.emotions))),
                "text": r.text,
            }
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    with sidecar.open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(" ".join(repr(float(x)) for x in r.embedding) + "\n")
    return path, sidecar


def load_memories(path: str | Path) -> MemoryStore:
    path = Path(path)
    sidecar = path.with_suffix(path.suffix + ".emb.txt")
    rows = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    vectors = [[float(x) for x in line.split()] for line in sidecar.read_text(encoding="utf-8").splitlines() if line.strip()]
    if len(rows) != len(vectors):
        raise MemoryStoreError(f"{sidecar}: {len(vectors)} embeddings for {len(rows)} records")
    return MemoryStore(
        [
            MemoryRecord(
                memory_id=row["memory_id"],
                text=row["text"],
                embedding=np.array(vec),
                emotions=np.array([row["emotions"][name] for name in EMOTIONS]),
                importance=row["importance"],
                created_at=datetime.fromisoformat(row["created_at"]),
                last_accessed=datetime.fromisoformat(row["last_accessed"]),
            )
            for row, vec in zip(rows, vectors)
        ]
    )
