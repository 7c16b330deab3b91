"""Synthetic hallucination construction and revision-data assembly.

Entity swaps (intrinsic/extrinsic at rate s), span deletion at mask rate m,
distractor sets, denoising-input encoding with swap codes, revision training
tuples, revision-intensity codes, and the contrastive loss value.
"""
from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass
from math import floor, log
from typing import Mapping, Sequence

from .corpus import EntityMention, Sentence
from .similarity import SimilarityBackend, greedy_precision, normalize_mention_text

INTRINSIC = "intrinsic"
EXTRINSIC = "extrinsic"

POSITIVE = "positive"
NEGATIVE = "negative"

REDRESS_CORRUPTION = "redress_corruption"
RANDOM_OTHER_ALIGNMENT = "random_other_alignment"
SELF_NEGATIVE = "self_negative"

MASK_TOKEN = "<mask>"
SEPARATOR = "<sep>"
DISTRACTOR_JOIN = " ; "
DEFAULT_DISTRACTOR_LIMIT = 25


@dataclass(frozen=True)
class CorruptionSpec:
    swap_rate: float = 0.5
    swap_mode: str = INTRINSIC
    mask_rate: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.swap_rate <= 1.0:
            raise ValueError("swap_rate must be in [0, 1]")
        if not 0.0 <= self.mask_rate <= 1.0:
            raise ValueError("mask_rate must be in [0, 1]")
        if self.swap_mode not in (INTRINSIC, EXTRINSIC):
            raise ValueError(f"unknown swap mode {self.swap_mode!r}")


@dataclass(frozen=True)
class SwapRecord:
    position: int
    original: str
    replacement: str
    start: int  # char offsets in the corrupted sentence
    end: int


@dataclass(frozen=True)
class SwapResult:
    text: str
    swaps: tuple[SwapRecord, ...]
    skipped: tuple[str, ...]  # mention texts with no same-type replacement


def _round_half_up(x: float) -> int:
    return int(floor(x + 0.5))


def sample_swap_count(n_mentions: int, rng: random.Random) -> int:
    """Uniform draw over {0..n_mentions}: half the mentions swapped on average."""
    if n_mentions < 0:
        raise ValueError("n_mentions must be >= 0")
    return rng.randint(0, n_mentions)


def swap_entities(
    sentence_text: str,
    mentions: Sequence[EntityMention],
    pool: Sequence[EntityMention],
    spec: CorruptionSpec,
) -> SwapResult:
    """Replace round(s * |mentions|) mention positions with same-type pool
    entities; positions and replacements are drawn uniformly under the seed."""
    ordered = sorted(mentions, key=lambda m: m.start)
    rng = random.Random(spec.seed)
    n_swaps = _round_half_up(spec.swap_rate * len(ordered))
    positions = sorted(rng.sample(range(len(ordered)), n_swaps)) if n_swaps else []
    replacements: dict[int, str] = {}
    skipped = []
    for position in positions:
        mention = ordered[position]
        candidates = [
            p
            for p in pool
            if p.semantic_type == mention.semantic_type
            and normalize_mention_text(p.text) != normalize_mention_text(mention.text)
        ]
        if not candidates:
            skipped.append(mention.text)
            continue
        replacements[position] = rng.choice(candidates).text
    pieces = []
    swaps = []
    cursor = 0
    out_len = 0
    for position, mention in enumerate(ordered):
        if position not in replacements:
            continue
        pieces.append(sentence_text[cursor : mention.start])
        out_len += mention.start - cursor
        replacement = replacements[position]
        swaps.append(
            SwapRecord(position, mention.text, replacement, out_len, out_len + len(replacement))
        )
        pieces.append(replacement)
        out_len += len(replacement)
        cursor = mention.end
    pieces.append(sentence_text[cursor:])
    return SwapResult("".join(pieces), tuple(swaps), tuple(skipped))


def delete_spans(
    tokens: Sequence[str],
    candidate_spans: Sequence[tuple[int, int]],
    mask_rate: float,
    seed: int,
) -> tuple[list[str], list[tuple[int, int]]]:
    """Sample non-overlapping candidate spans until the masked-token count
    reaches mask_rate * len(tokens); each chosen span becomes one sentinel."""
    for start, end in candidate_spans:
        if not 0 <= start < end <= len(tokens):
            raise ValueError(f"span ({start}, {end}) out of range")
    target = mask_rate * len(tokens)
    rng = random.Random(seed)
    order = list(candidate_spans)
    rng.shuffle(order)
    chosen: list[tuple[int, int]] = []
    masked = 0
    for span in order:
        if masked >= target:
            break
        if any(span[0] < e and s < span[1] for s, e in chosen):
            continue
        chosen.append(span)
        masked += span[1] - span[0]
    chosen.sort()
    out = list(tokens)
    for start, end in reversed(chosen):
        out[start:end] = [MASK_TOKEN]
    return out, chosen


def build_distractor_set(
    neighbor_mentions: Sequence[EntityMention],
    esg_of: Mapping[str, str],
    limit: int = DEFAULT_DISTRACTOR_LIMIT,
) -> list[EntityMention]:
    """First `limit` concepts unique by ESG, in neighbor order."""
    seen: set[str] = set()
    out = []
    for mention in neighbor_mentions:
        key = esg_of.get(mention.mention_id, normalize_mention_text(mention.text))
        if key in seen:
            continue
        seen.add(key)
        out.append(mention)
        if len(out) == limit:
            break
    return out


@dataclass(frozen=True)
class RedressRecord:
    swap_code: int
    distractors: tuple[str, ...]
    corrupted: str


def encode_redress_input(
    k: int,
    distractors: Sequence[str],
    corrupted_sentence: str,
    inference: bool = False,
) -> RedressRecord:
    """Swap code is k for training; k+1 at inference to force one extra swap."""
    if k < 0:
        raise ValueError("k must be >= 0")
    return RedressRecord(k + 1 if inference else k, tuple(distractors), corrupted_sentence)


def serialize_redress(record: RedressRecord) -> str:
    for part in (*record.distractors, record.corrupted):
        if SEPARATOR in part:
            raise ValueError(f"component contains separator sentinel: {part!r}")
    for distractor in record.distractors:
        if DISTRACTOR_JOIN in distractor:
            raise ValueError(f"distractor contains join sequence: {distractor!r}")
    joined = DISTRACTOR_JOIN.join(record.distractors)
    return f"{record.swap_code}{SEPARATOR}{joined}{SEPARATOR}{record.corrupted}"


def parse_redress(text: str) -> RedressRecord:
    code, joined, corrupted = text.split(SEPARATOR, 2)
    distractors = tuple(joined.split(DISTRACTOR_JOIN)) if joined else ()
    return RedressRecord(int(code), distractors, corrupted)


@dataclass(frozen=True)
class RevisionTuple:
    input_text: str
    context: tuple[str, ...]
    target_text: str
    polarity: str
    provenance: str


def build_revision_tuples(
    supported: Sequence[tuple[Sentence, Sequence[Sentence]]],
    corruptions: Mapping[int, Sequence[str]],
    backend: SimilarityBackend,
    seed: int,
) -> list[RevisionTuple]:
    """Training tuples per supported sentence r with aligned context S.

    Positives: (r_u, S, r) and (r*, S, r); negatives: (r_u, S, r_c) with a
    random corruption r_c, and (r, S*, r) with a random other sentence's
    context. The r*/S* forms are skipped when fewer than two supported
    sentences exist; sentences with an empty context are skipped entirely.
    """
    rng = random.Random(seed)
    usable = [(s, list(ctx)) for s, ctx in supported if ctx]
    tuples: list[RevisionTuple] = []
    for sentence, context in usable:
        context_texts = tuple(c.text for c in context)
        context_tokens = [t for c in context for t in c.tokens]
        alternatives = list(corruptions.get(sentence.index, ()))
        most_unsupported = None
        if alternatives and context_tokens:
            most_unsupported = min(
                alternatives,
                key=lambda text: (
                    greedy_precision(backend, tuple(text.split()) or (text,), context_tokens),
                    text,
                ),
            )
        if most_unsupported is not None:
            tuples.append(
                RevisionTuple(most_unsupported, context_texts, sentence.text, POSITIVE, REDRESS_CORRUPTION)
            )
            random_corruption = rng.choice(alternatives)
            tuples.append(
                RevisionTuple(most_unsupported, context_texts, random_corruption, NEGATIVE, REDRESS_CORRUPTION)
            )
        others = [(s, ctx) for s, ctx in usable if s.index != sentence.index]
        if others:
            other_sentence, other_context = others[rng.randrange(len(others))]
            tuples.append(
                RevisionTuple(other_sentence.text, context_texts, sentence.text, POSITIVE, RANDOM_OTHER_ALIGNMENT)
            )
            tuples.append(
                RevisionTuple(
                    sentence.text,
                    tuple(c.text for c in other_context),
                    sentence.text,
                    NEGATIVE,
                    SELF_NEGATIVE,
                )
            )
    return tuples


@dataclass(frozen=True)
class RevisionCodes:
    input_frac: float
    source_frac: float
    input_decile: int
    source_decile: int


def _multiset_overlap(a: Sequence[str], b: Sequence[str]) -> int:
    counts = Counter(b)
    return sum(min(n, counts[token]) for token, n in Counter(a).items())


def _decile(frac: float) -> int:
    return min(9, int(floor(frac * 10)))


def revision_codes(
    output_tokens: Sequence[str],
    input_tokens: Sequence[str],
    context_tokens: Sequence[str],
) -> RevisionCodes:
    """input_frac = |out ∩ in| / |out| and source_frac = |out ∩ S| / |out|,
    multiset intersections, binned into deciles (floor, clamped to 9)."""
    total = len(output_tokens)
    input_frac = _multiset_overlap(output_tokens, input_tokens) / total if total else 0.0
    source_frac = _multiset_overlap(output_tokens, context_tokens) / total if total else 0.0
    return RevisionCodes(input_frac, source_frac, _decile(input_frac), _decile(source_frac))


def inference_input_frac(input_tokens: Sequence[str], context_tokens: Sequence[str]) -> float:
    """Inference-time proxy: |in ∩ S| / |in|."""
    if not input_tokens:
        return 0.0
    return _multiset_overlap(input_tokens, context_tokens) / len(input_tokens)


def contrastive_loss_value(
    positive_probs: Sequence[float], negative_probs: Sequence[float]
) -> float:
    """Negated likelihood/unlikelihood objective:
    -[mean log p over positives + mean log(1 - p) over negatives]."""
    if not positive_probs and not negative_probs:
        raise ValueError("at least one probability required")
    for p in (*positive_probs, *negative_probs):
        if not 0.0 < p < 1.0:
            raise ValueError(f"probability {p} outside (0, 1)")
    total = 0.0
    if positive_probs:
        total += sum(log(p) for p in positive_probs) / len(positive_probs)
    if negative_probs:
        total += sum(log(1.0 - p) for p in negative_probs) / len(negative_probs)
    return -total
