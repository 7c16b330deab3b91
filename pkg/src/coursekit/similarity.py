"""Pluggable similarity backend over precomputed vectors.

Stands in for the neural encoders used elsewhere: cosine similarity over a
vector store keyed by surface form, with an exact-match lexical backend as
the zero-dependency fallback. Scores are clamped to [0, 1]; missing keys
score ``default_score`` (0 by default) so unknown tokens never inflate
faithfulness.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

EXACT = "exact"
VECTOR = "vector"

_WS_RE = re.compile(r"\s+")


def normalize_mention_text(text: str) -> str:
    """Lowercase, collapse whitespace, strip trailing punctuation."""
    collapsed = _WS_RE.sub(" ", text.lower()).strip()
    return collapsed.rstrip(".,;:!?")


class VectorStore:
    """Immutable map from key to a fixed-dimension vector."""

    def __init__(self, dim: int, entries: Mapping[str, Sequence[float]]):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self._entries: dict[str, np.ndarray] = {}
        for key, values in entries.items():
            vec = np.asarray(values, dtype=float)
            if vec.shape != (dim,):
                raise ValueError(f"vector for {key!r} has length {vec.shape}, expected {dim}")
            self._entries[key] = vec

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> np.ndarray | None:
        return self._entries.get(key)

    @classmethod
    def load(cls, path: str | Path) -> "VectorStore":
        """Read the sidecar format: first line ``dim <N>``, then ``key\\tv1 v2 ...``."""
        with open(path, encoding="utf-8") as handle:
            header = handle.readline().split()
            if len(header) != 2 or header[0] != "dim":
                raise ValueError("sidecar must start with 'dim <N>'")
            dim = int(header[1])
            entries = {}
            for line in handle:
                line = line.rstrip("\n")
                if not line:
                    continue
                key, _, raw = line.partition("\t")
                entries[key] = [float(v) for v in raw.split()]
        return cls(dim, entries)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(f"dim {self.dim}\n")
            for key in sorted(self._entries):
                values = " ".join(repr(float(v)) for v in self._entries[key])
                handle.write(f"{key}\t{values}\n")


@dataclass(frozen=True)
class SimilarityBackend:
    kind: str = EXACT
    store: VectorStore | None = None
    default_score: float = 0.0

    def __post_init__(self):
        if self.kind == VECTOR and self.store is None:
            raise ValueError("vector backend requires a store")


def exact_backend() -> SimilarityBackend:
    return SimilarityBackend(EXACT)


def vector_backend(store: VectorStore, default_score: float = 0.0) -> SimilarityBackend:
    return SimilarityBackend(VECTOR, store, default_score)


def clamped_cosine(a: np.ndarray, b: np.ndarray) -> float:
    denom = float(np.linalg.norm(a) * np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(min(1.0, max(0.0, float(np.dot(a, b)) / denom)))


def token_sim(backend: SimilarityBackend, a: str, b: str) -> float:
    if backend.kind == EXACT:
        return 1.0 if a == b else 0.0
    va = backend.store.get(a)
    vb = backend.store.get(b)
    if va is None or vb is None:
        return backend.default_score
    return clamped_cosine(va, vb)


def greedy_precision(backend: SimilarityBackend, hyp: Sequence[str], refs: Sequence[str]) -> float:
    """Mean over hypothesis tokens of the best match against the reference tokens."""
    if not hyp:
        raise ValueError("hypothesis must be non-empty")
    if not refs:
        return 0.0
    if backend.kind == EXACT:
        vocabulary = set(refs)
        return sum(1.0 for token in hyp if token in vocabulary) / len(hyp)
    unique_refs = list(dict.fromkeys(refs))
    total = 0.0
    for token in hyp:
        total += max(token_sim(backend, token, ref) for ref in unique_refs)
    return total / len(hyp)


def mention_sim(backend: SimilarityBackend, m1: str, m2: str) -> float:
    """Similarity of two mention strings; exact normalized-text match scores 1."""
    a = normalize_mention_text(m1)
    b = normalize_mention_text(m2)
    if a == b:
        return 1.0
    if backend.kind == EXACT:
        return 0.0
    va = backend.store.get(a)
    vb = backend.store.get(b)
    if va is None or vb is None:
        return backend.default_score
    return clamped_cosine(va, vb)
