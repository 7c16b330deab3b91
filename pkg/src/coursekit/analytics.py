"""Corpus-level exploratory statistics: fragment length by rank, note-ordering
coverage curves, lead-bias histograms, mention-frequency vs salience, and
error rate by sentence position. Pure functions of (corpus, indices); outputs
are JSON-ready for external plotting."""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Mapping, Sequence

from .calibration import herr
from .corpus import REFERENCE, AdmissionRecord, note_sentences, tokenize
from .entities import EsgIndex
from .lexical import extractive_fragments

log = logging.getLogger(__name__)

FORWARD = "FORWARD"
BACKWARD = "BACKWARD"
GREEDY_ORACLE = "GREEDY_ORACLE"

N_DECILES = 10


@dataclass(frozen=True)
class OrderingCurve:
    strategy: str
    points: tuple[tuple[int, float], ...]  # (decile 1..10, cumulative covered fraction)


def fragment_length_by_rank(corpus: Sequence[AdmissionRecord]) -> list[tuple[int, float]]:
    """Mean fragment token length grouped by the fragment's order within each
    reference summary."""
    lengths_by_rank: dict[int, list[int]] = defaultdict(list)
    for admission in corpus:
        source_tokens = [t for note in admission.notes for s in note_sentences(note) for t in s.tokens]
        summary_tokens = tokenize(admission.reference)
        stats = extractive_fragments(summary_tokens, source_tokens)
        for rank, fragment in enumerate(stats.fragments, start=1):
            lengths_by_rank[rank].append(fragment.length)
    return [
        (rank, sum(lengths) / len(lengths))
        for rank, lengths in sorted(lengths_by_rank.items())
    ]


def _salient_esgs_by_note(admission: AdmissionRecord, index: EsgIndex) -> dict[str, set[str]]:
    salient = {g.esg_id for g in index.salient_groups()}
    by_note: dict[str, set[str]] = {note.note_id: set() for note in admission.notes}
    for mention in admission.source_mentions():
        esg = index.esg_of.get(mention.mention_id)
        if esg in salient and mention.doc_ref in by_note:
            by_note[mention.doc_ref].add(esg)
    return by_note


def _decile_of(position: int, total: int) -> int:
    return math.ceil(N_DECILES * position / total)


def _curve(strategy: str, ordered_esgs: Sequence[set[str]], target: set[str]) -> OrderingCurve:
    n = len(ordered_esgs)
    fraction_after: list[float] = []
    covered: set[str] = set()
    for esgs in ordered_esgs:
        covered |= esgs & target
        fraction_after.append(len(covered) / len(target) if target else 1.0)
    points = []
    value = 0.0 if target else 1.0
    for decile in range(1, N_DECILES + 1):
        for position in range(1, n + 1):
            if _decile_of(position, n) <= decile:
                value = fraction_after[position - 1]
        points.append((decile, value))
    return OrderingCurve(strategy, tuple(points))


def ordering_curves(
    admission: AdmissionRecord, index: EsgIndex
) -> tuple[OrderingCurve, OrderingCurve, OrderingCurve]:
    """FORWARD (chronological), BACKWARD, and GREEDY_ORACLE coverage curves of
    the reference-covered (salient) ESGs, binned into note deciles."""
    if not admission.notes:
        raise ValueError("admission has no notes")
    by_note = _salient_esgs_by_note(admission, index)
    target = set().union(*by_note.values()) if by_note else set()
    forward_sets = [by_note[note.note_id] for note in admission.notes]
    backward_sets = list(reversed(forward_sets))
    remaining = list(range(len(admission.notes)))
    covered: set[str] = set()
    greedy_sets: list[set[str]] = []
    while remaining:
        best = min(remaining, key=lambda i: (-len((forward_sets[i] & target) - covered), i))
        greedy_sets.append(forward_sets[best])
        covered |= forward_sets[best] & target
        remaining.remove(best)
    return (
        _curve(FORWARD, forward_sets, target),
        _curve(BACKWARD, backward_sets, target),
        _curve(GREEDY_ORACLE, greedy_sets, target),
    )


def lead_bias_histogram(
    admission: AdmissionRecord, index: EsgIndex, bins: int = 10
) -> list[float] | None:
    """Histogram of reference-covered mention positions (char midpoints
    normalized by note length); None when the admission has no such mentions."""
    salient = {g.esg_id for g in index.salient_groups()}
    counts = [0] * bins
    total = 0
    for mention in admission.source_mentions():
        if index.esg_of.get(mention.mention_id) not in salient:
            continue
        length = len(admission.note(mention.doc_ref).full_text)
        if length == 0:
            continue
        position = ((mention.start + mention.end) / 2) / length
        counts[min(bins - 1, int(position * bins))] += 1
        total += 1
    if total == 0:
        log.warning("lead_bias_histogram: no reference-covered mentions in %s", admission.admission_id)
        return None
    return [c / total for c in counts]


def frequency_salience_curve(indices: Sequence[EsgIndex]) -> list[tuple[int, float]]:
    """P(ESG is salient | number of source mentions), bucketed by raw count."""
    totals: dict[int, int] = defaultdict(int)
    salient_counts: dict[int, int] = defaultdict(int)
    for index in indices:
        for group in index.groups:
            source_members = [
                mid for mid in group.members if index.mentions[mid].doc_ref != REFERENCE
            ]
            if not source_members:
                continue
            bucket = len(source_members)
            totals[bucket] += 1
            if group.source_salient:
                salient_counts[bucket] += 1
    return [(count, salient_counts[count] / totals[count]) for count in sorted(totals)]


def error_rate_by_position(
    summaries: Sequence[Sequence[Sequence[str]]],
) -> list[tuple[int, float]]:
    """Mean per-sentence summary-element error fraction at each sentence
    position; sentences without summary elements are excluded."""
    rates_by_position: dict[int, list[float]] = defaultdict(list)
    for summary in summaries:
        for position, se_labels in enumerate(summary):
            rate = herr(se_labels)
            if rate is not None:
                rates_by_position[position].append(rate)
    return [
        (position, sum(rates) / len(rates))
        for position, rates in sorted(rates_by_position.items())
    ]
