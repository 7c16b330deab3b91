"""Entity mentions, synonym classification, Entity Synonym Groups, salience,
reference-support classification, and the entity-overlap metric suite
(SGR / HR / FaR / novelty), plus entity grids and transition matrices."""
from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .corpus import (
    OTHER,
    PROBLEM,
    REFERENCE,
    TEST,
    TREATMENT,
    AdmissionRecord,
    EntityMention,
    Sentence,
    note_sentences,
    tokenize,
)
from .similarity import SimilarityBackend, greedy_precision, mention_sim, normalize_mention_text

log = logging.getLogger(__name__)

CODE_OVERLAP_THRESHOLD = 0.4
EMBED_OVERLAP_THRESHOLD = 0.75
AGG_OVERLAP_THRESHOLD = 0.4
SUPPORT_PRECISION_THRESHOLD = 0.75

SynonymPredicate = Callable[[EntityMention, EntityMention], bool]

STOPWORDS = frozenset(
    """a an and are as at be but by for from has have in is it of on or that the
    this to was were with without no not other""".split()
)


def code_overlap(x: EntityMention, y: EntityMention) -> float:
    """|c_x ∩ c_y| / (|c_x| + |c_y|); zero when either code set is empty."""
    if not x.codes or not y.codes:
        return 0.0
    return len(x.codes & y.codes) / (len(x.codes) + len(y.codes))


class TfidfIndex:
    """TF-IDF vectors over mention texts, stopwords removed, l2-normalized."""

    def __init__(self, texts: Iterable[str]):
        docs = [self._terms(t) for t in texts]
        self.n_docs = max(len(docs), 1)
        df: Counter = Counter()
        for terms in docs:
            df.update(set(terms))
        self._df = dict(df)

    @staticmethod
    def _terms(text: str) -> list[str]:
        return [t for t in tokenize(text) if t not in STOPWORDS]

    def _idf(self, term: str) -> float:
        return math.log((1 + self.n_docs) / (1 + self._df.get(term, 0))) + 1.0

    def vector(self, text: str) -> dict[str, float]:
        tf = Counter(self._terms(text))
        raw = {term: count * self._idf(term) for term, count in tf.items()}
        norm = math.sqrt(sum(v * v for v in raw.values()))
        if norm == 0.0:
            return {}
        return {term: v / norm for term, v in raw.items()}

    def overlap(self, t1: str, t2: str) -> float:
        v1 = self.vector(t1)
        v2 = self.vector(t2)
        return sum(weight * v2.get(term, 0.0) for term, weight in v1.items())


def build_tfidf_index(mentions: Iterable[EntityMention]) -> TfidfIndex:
    return TfidfIndex(m.text for m in mentions)


def classify_synonyms(
    x: EntityMention,
    y: EntityMention,
    backend: SimilarityBackend,
    tfidf_index: TfidfIndex,
    *,
    code_threshold: float = CODE_OVERLAP_THRESHOLD,
    embed_threshold: float = EMBED_OVERLAP_THRESHOLD,
    agg_threshold: float = AGG_OVERLAP_THRESHOLD,
) -> bool:
    """Synonyms iff CodeOverlap >= 0.4, EmbedOverlap >= 0.75, or AggOverlap >= 0.4.

    For mentions without codes the code term is dropped from the aggregate and
    the code threshold never fires.
    """
    embed = mention_sim(backend, x.text, y.text)
    if embed >= embed_threshold:
        return True
    tfidf = tfidf_index.overlap(x.text, y.text)
    if x.codes and y.codes:
        code = code_overlap(x, y)
        if code >= code_threshold:
            return True
        agg = (code + embed + tfidf) / 3
    else:
        agg = (embed + tfidf) / 2
    return agg >= agg_threshold


def classify_synonyms_embedding_only(
    x: EntityMention,
    y: EntityMention,
    backend: SimilarityBackend,
    threshold: float = EMBED_OVERLAP_THRESHOLD,
) -> bool:
    """Synonyms iff cosine >= threshold or exact text match after normalization."""
    if normalize_mention_text(x.text) == normalize_mention_text(y.text):
        return True
    return mention_sim(backend, x.text, y.text) >= threshold


@dataclass
class EntitySynonymGroup:
    esg_id: str
    members: frozenset[str]
    source_salient: bool = False


def build_esgs(
    mentions: Iterable[EntityMention], synonym_predicate: SynonymPredicate
) -> list[EntitySynonymGroup]:
    """Connected components of the synonym graph; always a partition of the input."""
    ordered = sorted(mentions, key=lambda m: m.mention_id)
    parent = {m.mention_id: m.mention_id for m in ordered}

    def find(a: str) -> str:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            if rb < ra:
                ra, rb = rb, ra
            parent[rb] = ra

    for i, x in enumerate(ordered):
        for y in ordered[i + 1 :]:
            if synonym_predicate(x, y):
                union(x.mention_id, y.mention_id)

    components: dict[str, set[str]] = defaultdict(set)
    for m in ordered:
        components[find(m.mention_id)].add(m.mention_id)
    groups = []
    for k, root in enumerate(sorted(components)):
        groups.append(EntitySynonymGroup(f"esg-{k:04d}", frozenset(components[root])))
    return groups


@dataclass(frozen=True)
class EsgIndex:
    mentions: Mapping[str, EntityMention]
    groups: tuple[EntitySynonymGroup, ...]
    esg_of: Mapping[str, str]

    def group(self, esg_id: str) -> EntitySynonymGroup:
        for g in self.groups:
            if g.esg_id == esg_id:
                return g
        raise KeyError(esg_id)

    def members_of(self, esg_id: str) -> list[EntityMention]:
        return sorted(
            (self.mentions[mid] for mid in self.group(esg_id).members),
            key=lambda m: m.mention_id,
        )

    def salient_groups(self) -> list[EntitySynonymGroup]:
        return [g for g in self.groups if g.source_salient]


def build_esg_index(
    mentions: Iterable[EntityMention], synonym_predicate: SynonymPredicate
) -> EsgIndex:
    by_id = {m.mention_id: m for m in mentions}
    groups = build_esgs(by_id.values(), synonym_predicate)
    esg_of = {mid: g.esg_id for g in groups for mid in g.members}
    return EsgIndex(by_id, tuple(groups), esg_of)


def label_salience(
    index: EsgIndex,
    reference_mentions: Sequence[EntityMention],
    synonym_predicate: SynonymPredicate,
) -> float:
    """Mark a source ESG salient iff >= 1 member is a synonym of >= 1 reference
    mention; returns the salient fraction."""
    for group in index.groups:
        group.source_salient = any(
            synonym_predicate(index.mentions[mid], ref)
            for mid in sorted(group.members)
            for ref in reference_mentions
        )
    if not index.groups:
        return 0.0
    return sum(1 for g in index.groups if g.source_salient) / len(index.groups)


@dataclass(frozen=True)
class SupportVerdict:
    sentence_index: int
    unsupported_mentions: tuple[str, ...]
    soft_precision: float
    supported: bool


def support_verdict(
    ref_sentence: Sentence,
    aligned_source: Sequence[Sentence],
    sentence_mentions: Sequence[EntityMention],
    source_mentions: Sequence[EntityMention],
    backend: SimilarityBackend,
    synonym_predicate: SynonymPredicate | None = None,
    precision_threshold: float = SUPPORT_PRECISION_THRESHOLD,
) -> SupportVerdict:
    """Supported iff the sentence has zero unsupported mentions and its soft
    precision against the aligned source is >= the threshold."""
    predicate = synonym_predicate or (
        lambda a, b: classify_synonyms_embedding_only(a, b, backend)
    )
    unsupported = tuple(
        m.mention_id
        for m in sentence_mentions
        if not any(predicate(m, sm) for sm in source_mentions)
    )
    aligned_tokens = [t for s in aligned_source for t in s.tokens]
    precision = greedy_precision(backend, ref_sentence.tokens, aligned_tokens) if ref_sentence.tokens else 0.0
    return SupportVerdict(
        sentence_index=ref_sentence.index,
        unsupported_mentions=unsupported,
        soft_precision=precision,
        supported=not unsupported and precision >= precision_threshold,
    )


def best_source_esg(
    mention: EntityMention,
    index: EsgIndex,
    backend: SimilarityBackend,
    synonym_predicate: SynonymPredicate,
) -> str | None:
    """ESG of the best-matching synonymous source mention, or None."""
    best: tuple[float, str, str] | None = None  # (-sim, esg_id, mention_id)
    for mid in sorted(index.mentions):
        source = index.mentions[mid]
        if not synonym_predicate(mention, source):
            continue
        sim = mention_sim(backend, mention.text, source.text)
        key = (-sim, index.esg_of[mid], mid)
        if best is None or key < best:
            best = key
    return best[1] if best else None


def align_mentions_to_source_esgs(
    mentions: Sequence[EntityMention],
    index: EsgIndex,
    backend: SimilarityBackend,
    synonym_predicate: SynonymPredicate,
) -> set[str]:
    aligned = set()
    for mention in mentions:
        esg = best_source_esg(mention, index, backend, synonym_predicate)
        if esg is not None:
            aligned.add(esg)
    return aligned


def sgr(reference_aligned_esgs: set[str], model_aligned_esgs: set[str]) -> float | None:
    """Source-grounded recall; None when no reference ESG aligns to the source."""
    if not reference_aligned_esgs:
        return None
    return len(reference_aligned_esgs & model_aligned_esgs) / len(reference_aligned_esgs)


def hallucination_rate(
    model_mentions: Sequence[EntityMention],
    source_mentions: Sequence[EntityMention],
    synonym_predicate: SynonymPredicate,
) -> float:
    """Fraction of generated mentions with no synonymous source mention."""
    if not model_mentions:
        log.warning("hallucination_rate: no generated mentions, reporting 0")
        return 0.0
    unmatched = sum(
        1
        for m in model_mentions
        if not any(synonym_predicate(m, sm) for sm in source_mentions)
    )
    return unmatched / len(model_mentions)


def faithful_adjusted_recall(
    reference_mentions: Sequence[EntityMention],
    model_mentions: Sequence[EntityMention],
    source_mentions: Sequence[EntityMention],
    synonym_predicate: SynonymPredicate,
) -> float:
    """Among reference mentions with a source synonym, the fraction that also
    have a synonym in the model summary."""
    grounded = [
        m
        for m in reference_mentions
        if any(synonym_predicate(m, sm) for sm in source_mentions)
    ]
    if not grounded:
        log.warning("faithful_adjusted_recall: no source-grounded reference mentions")
        return 0.0
    covered = sum(
        1 for m in grounded if any(synonym_predicate(m, gm) for gm in model_mentions)
    )
    return covered / len(grounded)


def entity_novelty(reference_count: int, supported_count: int) -> float:
    """(|reference mentions| - |supported|) / |reference mentions|."""
    if reference_count <= 0:
        raise ValueError("reference_count must be positive")
    return (reference_count - supported_count) / reference_count


@dataclass(frozen=True)
class EntityGrid:
    esg_ids: tuple[str, ...]
    matrix: np.ndarray  # sentences x ESGs, boolean
    singleton_fraction: float
    adjacent_chain_fraction: float


def entity_grid(n_sentences: int, esgs_per_sentence: Sequence[Iterable[str]]) -> EntityGrid:
    """Boolean sentence-by-ESG grid plus lexical-chain statistics.

    singleton_fraction: share of entities appearing in exactly one sentence.
    adjacent_chain_fraction: among multi-sentence entities, the share with at
    least one pair of mentions in adjacent sentences.
    """
    if len(esgs_per_sentence) != n_sentences:
        raise ValueError("esgs_per_sentence must have one entry per sentence")
    esg_ids = tuple(sorted({e for row in esgs_per_sentence for e in row}))
    column = {e: i for i, e in enumerate(esg_ids)}
    matrix = np.zeros((n_sentences, len(esg_ids)), dtype=bool)
    for row, esgs in enumerate(esgs_per_sentence):
        for e in esgs:
            matrix[row, column[e]] = True
    appearances = matrix.sum(axis=0)
    singles = int((appearances == 1).sum())
    multi = [i for i in range(len(esg_ids)) if appearances[i] > 1]
    adjacent = 0
    for i in multi:
        rows = np.flatnonzero(matrix[:, i])
        if np.any(np.diff(rows) == 1):
            adjacent += 1
    return EntityGrid(
        esg_ids=esg_ids,
        matrix=matrix,
        singleton_fraction=singles / len(esg_ids) if esg_ids else 0.0,
        adjacent_chain_fraction=adjacent / len(multi) if multi else 0.0,
    )


TRANSITION_TYPES = (PROBLEM, TREATMENT, TEST)


def transition_matrix(mentions_in_order: Sequence[EntityMention]) -> np.ndarray:
    """Row-normalized counts of consecutive semantic-type pairs over
    PROBLEM/TREATMENT/TEST; OTHER mentions are skipped."""
    row_of = {t: i for i, t in enumerate(TRANSITION_TYPES)}
    sequence = [m.semantic_type for m in mentions_in_order if m.semantic_type in row_of]
    counts = np.zeros((3, 3), dtype=float)
    for a, b in zip(sequence, sequence[1:]):
        counts[row_of[a], row_of[b]] += 1
    if counts.sum() == 0:
        log.warning("transition_matrix: no consecutive typed mention pairs")
        return counts
    sums = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        normalized = np.where(sums > 0, counts / sums, 0.0)
    return normalized


def locate_mentions(
    admission: AdmissionRecord,
    mentions: Sequence[EntityMention] | None = None,
) -> dict[str, tuple[str, int]]:
    """Map each source mention to its (note_id, sentence index) by char span."""
    locations: dict[str, tuple[str, int]] = {}
    targets = mentions if mentions is not None else admission.source_mentions()
    by_note: dict[str, list[Sentence]] = {}
    for mention in targets:
        if mention.doc_ref == REFERENCE:
            continue
        if mention.doc_ref not in by_note:
            by_note[mention.doc_ref] = note_sentences(admission.note(mention.doc_ref))
        mid = (mention.start + mention.end) / 2
        for sentence in by_note[mention.doc_ref]:
            if sentence.start <= mid < sentence.end:
                locations[mention.mention_id] = (mention.doc_ref, sentence.index)
                break
    return locations


def mentions_in_span(
    mentions: Sequence[EntityMention], doc_ref: str, start: int, end: int
) -> list[EntityMention]:
    """Mentions of ``doc_ref`` whose span midpoint falls inside [start, end)."""
    inside = [
        m
        for m in mentions
        if m.doc_ref == doc_ref and start <= (m.start + m.end) / 2 < end
    ]
    return sorted(inside, key=lambda m: m.start)
