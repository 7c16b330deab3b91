"""Source-summary alignment.

Implements the greedy importance-weighted aligner (soft precision with a
coverage-tracking importance vector, improvement-filtered) and the wider
alignment-method family used for metric evaluation: ROUGE-Gain, ROUGE-TopK,
BS-TopK, BS-Gain, Entity-Chain, Top-Section, and Full.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .corpus import (
    REFERENCE,
    AdmissionRecord,
    EntityMention,
    Sentence,
    note_sentences,
    tokenize,
)
from .entities import EsgIndex, SynonymPredicate, mentions_in_span
from .lexical import r12, rouge_l, rouge_n
from .similarity import SimilarityBackend, mention_sim, token_sim

log = logging.getLogger(__name__)

ROUGE_GAIN = "rouge-gain"
BS_GAIN = "bs-gain"
ROUGE_TOPK = "rouge-topk"
BS_TOPK = "bs-topk"
TOP_SECTION = "top-section"
ENTITY_CHAIN = "entity-chain"
FULL = "full"

METHOD_KINDS = (ROUGE_GAIN, BS_GAIN, ROUGE_TOPK, BS_TOPK, TOP_SECTION, ENTITY_CHAIN, FULL)

DEFAULT_MAX_STEPS = 5
DEFAULT_AVG_THRESHOLD = 0.01
DEFAULT_MAX_THRESHOLD = 0.05
DEFAULT_TOKEN_BUDGET = 1024


@dataclass(frozen=True)
class AlignmentMethod:
    kind: str
    k: int = 5
    token_budget: int = DEFAULT_TOKEN_BUDGET

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ValueError(f"unknown alignment method {self.kind!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.token_budget < 1:
            raise ValueError("token_budget must be >= 1")


@dataclass(frozen=True)
class AlignmentResult:
    summary_sentence_index: int
    aligned: tuple[tuple[str, int], ...]
    importance_history: tuple[tuple[float, ...], ...] = ()
    method: str = BS_GAIN
    dropped: tuple[tuple[str, int], ...] = ()
    skipped_concepts: tuple[str, ...] = ()


def _alignment_vector(
    backend: SimilarityBackend, ref_tokens: Sequence[str], sentence: Sentence
) -> list[float]:
    """align(x_k, s): best similarity of each reference token within s."""
    out = []
    for token in ref_tokens:
        best = 0.0
        for other in sentence.tokens:
            best = max(best, token_sim(backend, token, other))
            if best == 1.0:
                break
        out.append(best)
    return out


def greedy_weighted_align(
    ref_sentence: Sentence,
    source: Sequence[Sentence],
    backend: SimilarityBackend,
    max_steps: int = DEFAULT_MAX_STEPS,
    avg_threshold: float = DEFAULT_AVG_THRESHOLD,
    max_threshold: float = DEFAULT_MAX_THRESHOLD,
) -> AlignmentResult:
    """Greedy importance-weighted alignment of one summary sentence.

    At each step the remaining source sentence maximizing the importance-weighted
    soft precision is extracted and the importance vector is lowered to
    ``min(w, 1 - align)``, de-prioritizing covered tokens. Extractions whose
    per-token coverage improvement fails both thresholds are dropped afterwards.
    """
    if not ref_sentence.tokens:
        raise ValueError("reference sentence has no tokens")
    if not source:
        raise ValueError("source is empty")
    k = len(ref_sentence.tokens)
    weights = [1.0] * k
    history = [tuple(weights)]
    vectors = {s.location: _alignment_vector(backend, ref_sentence.tokens, s) for s in source}
    pool = list(source)
    picks: list[tuple[Sentence, float, float]] = []  # sentence, avg/max improvement
    for _ in range(max_steps):
        if not pool:
            break
        total_weight = sum(weights)
        if total_weight == 0.0:
            break
        best_sentence = None
        best_score = -1.0
        for s in pool:
            vec = vectors[s.location]
            score = sum(w * a for w, a in zip(weights, vec)) / total_weight
            if score > best_score:
                best_score = score
                best_sentence = s
        vec = vectors[best_sentence.location]
        new_weights = [min(w, 1.0 - a) for w, a in zip(weights, vec)]
        improvement = [w - nw for w, nw in zip(weights, new_weights)]
        picks.append((best_sentence, sum(improvement) / k, max(improvement)))
        weights = new_weights
        history.append(tuple(weights))
        pool.remove(best_sentence)
    kept = []
    dropped = []
    for sentence, avg_gain, max_gain in picks:
        if avg_gain >= avg_threshold or max_gain >= max_threshold:
            kept.append(sentence.location)
        else:
            dropped.append(sentence.location)
    return AlignmentResult(
        summary_sentence_index=ref_sentence.index,
        aligned=tuple(kept),
        importance_history=tuple(history),
        method=BS_GAIN,
        dropped=tuple(dropped),
    )


def augment_for_entities(
    result: AlignmentResult,
    ref_mentions: Sequence[EntityMention],
    source_mentions: Sequence[EntityMention],
    mention_locations: Mapping[str, tuple[str, int]],
    esg_index: EsgIndex,
    backend: SimilarityBackend,
) -> AlignmentResult:
    """Append, per uncovered reference concept, the source sentence holding its
    closest same-ESG mention; concepts absent from the source are reported."""
    aligned = list(result.aligned)
    aligned_set = set(aligned)
    skipped = list(result.skipped_concepts)
    by_id = {m.mention_id: m for m in source_mentions}
    for ref_mention in sorted(ref_mentions, key=lambda m: m.start):
        esg_id = esg_index.esg_of.get(ref_mention.mention_id)
        if esg_id is None:
            skipped.append(ref_mention.text)
            continue
        members = [
            by_id[mid]
            for mid in sorted(esg_index.group(esg_id).members)
            if mid in by_id and mid in mention_locations
        ]
        if not members:
            skipped.append(ref_mention.text)
            continue
        if any(mention_locations[m.mention_id] in aligned_set for m in members):
            continue
        best = min(
            members,
            key=lambda m: (
                -mention_sim(backend, ref_mention.text, m.text),
                mention_locations[m.mention_id],
            ),
        )
        location = mention_locations[best.mention_id]
        aligned.append(location)
        aligned_set.add(location)
    return replace(result, aligned=tuple(aligned), skipped_concepts=tuple(skipped))


def _sentence_mentions(
    summary_sentence: Sentence, admission: AdmissionRecord
) -> list[EntityMention]:
    if summary_sentence.doc_ref != REFERENCE:
        return []
    return mentions_in_span(
        admission.reference_mentions(), REFERENCE, summary_sentence.start, summary_sentence.end
    )


def align(
    method: AlignmentMethod,
    summary_sentence: Sentence,
    admission: AdmissionRecord,
    backend: SimilarityBackend,
    esg_index: EsgIndex | None = None,
    sentence_mentions: Sequence[EntityMention] | None = None,
) -> AlignmentResult:
    """Dispatch over the alignment-method family."""
    source = [s for note in admission.notes for s in note_sentences(note)]
    sent_tokens = list(summary_sentence.tokens)

    if method.kind == BS_GAIN:
        result = greedy_weighted_align(summary_sentence, source, backend)
        return replace(result, method=BS_GAIN)

    if method.kind == ROUGE_GAIN:
        chosen: list[Sentence] = []
        pool = list(source)
        current_tokens: list[str] = []
        current_score = 0.0
        while pool:
            best, best_gain = None, 0.0
            for s in pool:
                gain = r12(current_tokens + list(s.tokens), sent_tokens) - current_score
                if gain > best_gain:
                    best, best_gain = s, gain
            if best is None:
                break
            chosen.append(best)
            current_tokens.extend(best.tokens)
            current_score += best_gain
            pool.remove(best)
        return AlignmentResult(
            summary_sentence.index, tuple(s.location for s in chosen), method=ROUGE_GAIN
        )

    if method.kind in (ROUGE_TOPK, BS_TOPK):
        if method.kind == ROUGE_TOPK:
            scored = [(r12(list(s.tokens), sent_tokens), s) for s in source]
        else:
            from .similarity import greedy_precision

            scored = [
                (greedy_precision(backend, sent_tokens, list(s.tokens)) if s.tokens else 0.0, s)
                for s in source
            ]
        ranked = sorted(
            enumerate(scored), key=lambda pair: (-pair[1][0], pair[0])
        )  # score desc, source order on ties
        top = [s.location for _, (_, s) in ranked[: method.k]]
        return AlignmentResult(summary_sentence.index, tuple(top), method=method.kind)

    if method.kind == TOP_SECTION:
        best_key = None
        best_sents: list[Sentence] = []
        for note in admission.notes:
            sentences = note_sentences(note)
            for section, start, end in note.section_spans():
                body_tokens = tokenize(section.body)
                score = (
                    rouge_n(body_tokens, sent_tokens, 1).f1
                    + rouge_n(body_tokens, sent_tokens, 2).f1
                    + rouge_l(body_tokens, sent_tokens).f1
                ) / 3
                if best_key is None or score > best_key:
                    best_key = score
                    best_sents = [s for s in sentences if start <= s.start < end]
        return AlignmentResult(
            summary_sentence.index, tuple(s.location for s in best_sents), method=TOP_SECTION
        )

    if method.kind == ENTITY_CHAIN:
        if esg_index is None:
            raise ValueError("entity-chain alignment requires an ESG index")
        from .entities import locate_mentions

        mentions = sentence_mentions
        if mentions is None:
            mentions = _sentence_mentions(summary_sentence, admission)
        summary_esgs = {
            esg_index.esg_of[m.mention_id]
            for m in mentions
            if m.mention_id in esg_index.esg_of
        }
        if not summary_esgs:
            return AlignmentResult(summary_sentence.index, (), method=ENTITY_CHAIN)
        locations = locate_mentions(admission)
        per_sentence_esgs: dict[tuple[str, int], set[str]] = {}
        for mid, location in locations.items():
            if mid in esg_index.esg_of:
                per_sentence_esgs.setdefault(location, set()).add(esg_index.esg_of[mid])
        aligned = [
            s.location
            for s in source
            if per_sentence_esgs.get(s.location, set()) & summary_esgs
        ]
        return AlignmentResult(summary_sentence.index, tuple(aligned), method=ENTITY_CHAIN)

    if method.kind == FULL:
        scored = [
            ((rouge_n(list(s.tokens), sent_tokens, 1).f1 + rouge_n(list(s.tokens), sent_tokens, 2).f1) / 2, s)
            for s in source
        ]
        ranked = sorted(enumerate(scored), key=lambda pair: (-pair[1][0], pair[0]))
        chosen = []
        used = 0
        for _, (_, s) in ranked:
            if used + len(s.tokens) > method.token_budget:
                break
            chosen.append(s.location)
            used += len(s.tokens)
        return AlignmentResult(summary_sentence.index, tuple(chosen), method=FULL)

    raise ValueError(f"unknown alignment method {method.kind!r}")
