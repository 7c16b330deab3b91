"""Extractive baselines and oracles: Random, LexRank, Oracle Top-K, Oracle
Gain, Oracle Sent-Align, Oracle Retrieval (BM25), and the Sent-Align +
Retrieval ensemble, plus the per-strategy ROUGE scoring report."""
from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .corpus import Sentence
from .entities import STOPWORDS
from .lexical import r12, rouge_n

SOURCE = "source"
TRAIN_REFERENCE = "train_reference"

STRATEGY_RANDOM = "random"
STRATEGY_LEXRANK = "lexrank"
STRATEGY_TOP_K = "topk"
STRATEGY_GAIN = "gain"
STRATEGY_SENT_ALIGN = "sent-align"
STRATEGY_RETRIEVAL = "retrieval"
STRATEGY_ENSEMBLE = "ensemble"

BM25_K1 = 1.2
BM25_B = 0.75
LEXRANK_DAMPING = 0.85
LEXRANK_SIM_THRESHOLD = 0.1
LEXRANK_TOL = 1e-10
LEXRANK_MAX_ITER = 200


@dataclass(frozen=True)
class SelectedSentence:
    origin: tuple  # (SOURCE, note_id, index) or (TRAIN_REFERENCE, admission_id, index)
    text: str
    tokens: tuple[str, ...]


@dataclass
class ExtractiveSummary:
    selected: list[SelectedSentence]
    budget: int | None
    strategy: str
    info: dict = field(default_factory=dict)

    @property
    def tokens(self) -> list[str]:
        return [t for s in self.selected for t in s.tokens]


def _source_entry(sentence: Sentence) -> SelectedSentence:
    return SelectedSentence((SOURCE, sentence.doc_ref, sentence.index), sentence.text, sentence.tokens)


def _take_within_budget(
    ranked: Sequence[Sentence], budget: int, strategy: str
) -> ExtractiveSummary:
    """Walk the ranked list, dropping duplicates, stopping at the first sentence
    that does not fit the remaining token budget."""
    chosen: list[SelectedSentence] = []
    seen: set[tuple[str, ...]] = set()
    used = 0
    for sentence in ranked:
        if sentence.tokens in seen:
            continue
        if used + len(sentence.tokens) > budget:
            break
        chosen.append(_source_entry(sentence))
        seen.add(sentence.tokens)
        used += len(sentence.tokens)
    return ExtractiveSummary(chosen, budget, strategy)


def oracle_top_k(
    source_sentences: Sequence[Sentence], reference_tokens: Sequence[str], budget: int
) -> ExtractiveSummary:
    """Sentences ranked by R12 against the reference, taken while budget permits."""
    ranked = sorted(
        enumerate(source_sentences),
        key=lambda pair: (-r12(list(pair[1].tokens), list(reference_tokens)), pair[0]),
    )
    return _take_within_budget([s for _, s in ranked], budget, STRATEGY_TOP_K)


def oracle_gain(
    source_sentences: Sequence[Sentence], reference_tokens: Sequence[str]
) -> ExtractiveSummary:
    """Greedy marginal-R12 extraction; stops when the best gain is non-positive."""
    reference = list(reference_tokens)
    pool = list(source_sentences)
    chosen: list[SelectedSentence] = []
    seen: set[tuple[str, ...]] = set()
    tokens: list[str] = []
    score = 0.0
    while pool:
        best, best_gain, best_pos = None, 0.0, -1
        for position, sentence in enumerate(pool):
            if sentence.tokens in seen:
                continue
            gain = r12(tokens + list(sentence.tokens), reference) - score
            if gain > best_gain:
                best, best_gain, best_pos = sentence, gain, position
        if best is None:
            break
        chosen.append(_source_entry(best))
        seen.add(best.tokens)
        tokens.extend(best.tokens)
        score += best_gain
        pool.pop(best_pos)
    return ExtractiveSummary(chosen, None, STRATEGY_GAIN)


def oracle_sent_align(
    source_sentences: Sequence[Sentence], reference_sentences: Sequence[Sentence]
) -> ExtractiveSummary:
    """Best source sentence per reference sentence; duplicates collapsed in
    reference order."""
    chosen: list[SelectedSentence] = []
    seen: set[tuple[str, ...]] = set()
    for ref in reference_sentences:
        best = _best_by_r12(source_sentences, ref.tokens)
        if best is not None and best.tokens not in seen:
            chosen.append(_source_entry(best))
            seen.add(best.tokens)
    return ExtractiveSummary(chosen, None, STRATEGY_SENT_ALIGN)


def _best_by_r12(sentences: Sequence[Sentence], reference: Sequence[str]) -> Sentence | None:
    best, best_score = None, -1.0
    for sentence in sentences:
        score = r12(list(sentence.tokens), list(reference))
        if score > best_score:
            best, best_score = sentence, score
    return best


class Bm25Index:
    """Okapi BM25 with the standard idf floored at zero."""

    def __init__(
        self,
        documents: Sequence[tuple[Hashable, Sequence[str]]],
        k1: float = BM25_K1,
        b: float = BM25_B,
    ):
        if not documents:
            raise ValueError("index requires at least one document")
        self.k1 = k1
        self.b = b
        self.documents = [(key, tuple(tokens)) for key, tokens in documents]
        self.avgdl = sum(len(tokens) for _, tokens in self.documents) / len(self.documents)
        df: Counter = Counter()
        for _, tokens in self.documents:
            df.update(set(tokens))
        n = len(self.documents)
        self.idf = {
            term: max(0.0, math.log((n - count + 0.5) / (count + 0.5)))
            for term, count in df.items()
        }

    def score(self, query: Sequence[str], tokens: Sequence[str]) -> float:
        counts = Counter(tokens)
        dl = len(tokens)
        total = 0.0
        for term in query:
            tf = counts.get(term, 0)
            if tf == 0:
                continue
            idf = self.idf.get(term, 0.0)
            denom = tf + self.k1 * (1 - self.b + self.b * dl / self.avgdl) if self.avgdl else tf
            total += idf * tf * (self.k1 + 1) / denom
        return total

    def top(self, query: Sequence[str]) -> tuple[Hashable, tuple[str, ...], float]:
        """Highest-scoring document; ties take the lowest key."""
        ranked = sorted(
            ((self.score(query, tokens), key, tokens) for key, tokens in self.documents),
            key=lambda item: (-item[0], item[1]),
        )
        score, key, tokens = ranked[0]
        return key, tokens, score


def oracle_retrieval(
    reference_sentences: Sequence[Sentence], train_index: Bm25Index
) -> ExtractiveSummary:
    """Top-BM25 train-reference sentence per reference sentence."""
    chosen: list[SelectedSentence] = []
    seen: set[tuple[str, ...]] = set()
    for ref in reference_sentences:
        key, tokens, _ = train_index.top(list(ref.tokens))
        if tokens not in seen:
            chosen.append(SelectedSentence((TRAIN_REFERENCE, *key), " ".join(tokens), tokens))
            seen.add(tokens)
    return ExtractiveSummary(chosen, None, STRATEGY_RETRIEVAL)


def oracle_sa_plus_retrieval(
    source_sentences: Sequence[Sentence],
    reference_sentences: Sequence[Sentence],
    train_index: Bm25Index,
) -> ExtractiveSummary:
    """Per reference sentence, the better of the Sent-Align and Retrieval
    candidates by R12; ties keep the source-grounded candidate."""
    chosen: list[SelectedSentence] = []
    seen: set[tuple[str, ...]] = set()
    for ref in reference_sentences:
        ref_tokens = list(ref.tokens)
        entries: list[tuple[float, int, SelectedSentence]] = []
        aligned = _best_by_r12(source_sentences, ref.tokens)
        if aligned is not None:
            entries.append((r12(list(aligned.tokens), ref_tokens), 0, _source_entry(aligned)))
        key, tokens, _ = train_index.top(ref_tokens)
        entries.append(
            (r12(list(tokens), ref_tokens), 1, SelectedSentence((TRAIN_REFERENCE, *key), " ".join(tokens), tokens))
        )
        entries.sort(key=lambda e: (-e[0], e[1]))
        winner = entries[0][2]
        if winner.tokens not in seen:
            chosen.append(winner)
            seen.add(winner.tokens)
    summary = ExtractiveSummary(chosen, None, STRATEGY_ENSEMBLE)
    retrievals = sum(1 for s in chosen if s.origin[0] == TRAIN_REFERENCE)
    summary.info["retrieval_share"] = retrievals / len(chosen) if chosen else 0.0
    return summary


def _tfidf_vectors(sentences: Sequence[Sentence]) -> list[dict[str, float]]:
    df: Counter = Counter()
    docs = []
    for sentence in sentences:
        terms = [t for t in sentence.tokens if t not in STOPWORDS]
        docs.append(terms)
        df.update(set(terms))
    n = len(sentences)
    vectors = []
    for terms in docs:
        tf = Counter(terms)
        raw = {
            term: count * (math.log((1 + n) / (1 + df[term])) + 1.0) for term, count in tf.items()
        }
        norm = math.sqrt(sum(v * v for v in raw.values()))
        vectors.append({t: v / norm for t, v in raw.items()} if norm else {})
    return vectors


def lexrank_scores(
    sentences: Sequence[Sentence],
    damping: float = LEXRANK_DAMPING,
    sim_threshold: float = LEXRANK_SIM_THRESHOLD,
    tol: float = LEXRANK_TOL,
    max_iter: int = LEXRANK_MAX_ITER,
) -> np.ndarray:
    """Stationary distribution over the TF-IDF-cosine sentence graph.

    Similarities below the threshold are zeroed; if that empties the graph the
    continuous weights are used unchanged. Scores sum to 1.
    """
    n = len(sentences)
    if n == 0:
        return np.zeros(0)
    vectors = _tfidf_vectors(sentences)
    sims = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            vi, vj = vectors[i], vectors[j]
            if len(vj) < len(vi):
                vi, vj = vj, vi
            sims[i, j] = sims[j, i] = sum(w * vj.get(t, 0.0) for t, w in vi.items())
    weights = np.where(sims >= sim_threshold, sims, 0.0)
    if weights.sum() == 0.0:
        weights = sims
    row_sums = weights.sum(axis=1)
    transition = np.full((n, n), 1.0 / n)
    nonzero = row_sums > 0
    transition[nonzero] = weights[nonzero] / row_sums[nonzero, None]
    scores = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        updated = (1 - damping) / n + damping * transition.T @ scores
        if np.abs(updated - scores).max() < tol:
            scores = updated
            break
        scores = updated
    return scores / scores.sum()


def lexrank(
    source_sentences: Sequence[Sentence],
    budget: int,
    damping: float = LEXRANK_DAMPING,
    sim_threshold: float = LEXRANK_SIM_THRESHOLD,
) -> ExtractiveSummary:
    if not source_sentences:
        return ExtractiveSummary([], budget, STRATEGY_LEXRANK)
    scores = lexrank_scores(source_sentences, damping, sim_threshold)
    ranked = sorted(enumerate(source_sentences), key=lambda pair: (-scores[pair[0]], pair[0]))
    summary = _take_within_budget([s for _, s in ranked], budget, STRATEGY_LEXRANK)
    summary.info["scores"] = [float(s) for s in scores]
    return summary


def random_baseline(
    source_sentences: Sequence[Sentence], budget: int, seed: int
) -> ExtractiveSummary:
    order = list(source_sentences)
    random.Random(seed).shuffle(order)
    summary = _take_within_budget(order, budget, STRATEGY_RANDOM)
    summary.budget = budget
    return summary


def score_summary(summary: ExtractiveSummary, reference_tokens: Sequence[str]) -> dict:
    """ROUGE-1/2 precision/recall/F1 of one extractive summary."""
    out = {}
    for n in (1, 2):
        score = rouge_n(summary.tokens, list(reference_tokens), n)
        out[f"rouge{n}"] = {
            "precision": score.precision,
            "recall": score.recall,
            "f1": score.f1,
        }
    return out
