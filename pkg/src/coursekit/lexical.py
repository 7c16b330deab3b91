"""Reference and reference-free lexical statistics.

ROUGE-1/2/L, the R12 aggregate, extractive fragments (coverage/density per
Grusky et al.), self-BLEU, section salience targets, and compression ratio.
All functions operate on pre-tokenized input (see ``corpus.tokenize``);
lowercasing happens at tokenization time, no stemming or stopword removal.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

Tokens = Sequence[str]

BLEU_EPSILON = 1e-9


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, match: int, candidate_total: int, reference_total: int) -> "RougeScore":
        p = match / candidate_total if candidate_total else 0.0
        r = match / reference_total if reference_total else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f)


ZERO_ROUGE = RougeScore(0.0, 0.0, 0.0)


def ngram_counts(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: Tokens, reference: Tokens, n: int) -> RougeScore:
    """Clipped n-gram multiset overlap."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = ngram_counts(candidate, n)
    ref = ngram_counts(reference, n)
    match = sum(min(count, ref[gram]) for gram, count in cand.items())
    return RougeScore.from_counts(match, sum(cand.values()), sum(ref.values()))


def lcs_length(a: Tokens, b: Tokens) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def rouge_l(candidate: Tokens, reference: Tokens) -> RougeScore:
    """Longest-common-subsequence precision/recall/F1 (sentence-level LCS)."""
    return RougeScore.from_counts(lcs_length(candidate, reference), len(candidate), len(reference))


def r12(candidate: Tokens, reference: Tokens) -> float:
    """Mean of ROUGE-1 and ROUGE-2 F1, the lexical-overlap workhorse."""
    return (rouge_n(candidate, reference, 1).f1 + rouge_n(candidate, reference, 2).f1) / 2


@dataclass(frozen=True)
class Fragment:
    source_start: int
    summary_start: int
    length: int


@dataclass(frozen=True)
class FragmentStats:
    coverage: float
    density: float
    fragments: tuple[Fragment, ...]


def extractive_fragments(summary: Tokens, source: Tokens) -> FragmentStats:
    """Greedy left-to-right maximal shared-fragment decomposition of the summary.

    Ties between maximal matches of equal length take the earliest source start.
    """
    fragments: list[Fragment] = []
    i = 0
    while i < len(summary):
        best_len = 0
        best_src = -1
        j = 0
        while j < len(source):
            if summary[i] == source[j]:
                k = 0
                while i + k < len(summary) and j + k < len(source) and summary[i + k] == source[j + k]:
                    k += 1
                if k > best_len:
                    best_len, best_src = k, j
                j += k
            else:
                j += 1
        if best_len > 0:
            fragments.append(Fragment(best_src, i, best_len))
        i += max(best_len, 1)
    total = len(summary)
    covered = sum(f.length for f in fragments)
    squared = sum(f.length**2 for f in fragments)
    return FragmentStats(
        coverage=covered / total if total else 0.0,
        density=squared / total if total else 0.0,
        fragments=tuple(fragments),
    )


def bleu(hypothesis: Tokens, reference: Tokens, max_order: int = 4) -> float:
    """Single-reference BLEU, uniform weights up to ``max_order``, brevity penalty.

    Zero n-gram precisions are floored at BLEU_EPSILON; orders longer than the
    hypothesis are skipped so identical short texts still score 1.0.
    """
    if not hypothesis:
        return 0.0
    log_sum = 0.0
    orders = 0
    for n in range(1, min(max_order, len(hypothesis)) + 1):
        hyp = ngram_counts(hypothesis, n)
        ref = ngram_counts(reference, n)
        match = sum(min(count, ref[gram]) for gram, count in hyp.items())
        precision = match / sum(hyp.values()) if hyp else 0.0
        log_sum += math.log(precision if precision > 0 else BLEU_EPSILON)
        orders += 1
    score = math.exp(log_sum / orders)
    if len(hypothesis) < len(reference):
        score *= math.exp(1 - len(reference) / len(hypothesis))
    return score


def self_bleu(candidates: Sequence[Tokens]) -> float:
    """Mean BLEU over ordered pairs (i != j), each candidate scored against one other."""
    if len(candidates) < 2:
        raise ValueError("self_bleu requires at least 2 candidates")
    scores = [
        bleu(candidates[i], candidates[j])
        for i in range(len(candidates))
        for j in range(len(candidates))
        if i != j
    ]
    return sum(scores) / len(scores)


def section_salience_target(section: Tokens, reference: Tokens) -> float:
    """Mean of ROUGE-1 and ROUGE-2 recall of the reference against the section.

    Orders where the reference has no n-grams are skipped so a fully covered
    one-token reference still scores 1.0.
    """
    recalls = []
    for n in (1, 2):
        if len(reference) >= n:
            recalls.append(rouge_n(section, reference, n).recall)
    return sum(recalls) / len(recalls) if recalls else 0.0


def compression_ratio(source_tokens: int, summary_tokens: int) -> float:
    if summary_tokens <= 0:
        raise ValueError("summary has no tokens")
    return source_tokens / summary_tokens
