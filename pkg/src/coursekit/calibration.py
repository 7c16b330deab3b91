"""Candidate pools, metric normalization and aggregation, contrast-set
selection strategies, set statistics, calibration loss values, the
coverage-combined metric, distillation pseudo-targets, correlation utilities,
and the per-sentence human error rate."""
from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .lexical import self_bleu

log = logging.getLogger(__name__)

RELEVANCE = "relevance"
FAITHFULNESS = "faithfulness"

# generator tags
DIVERSE_BEAM_A = "diverse_beam_a"
DIVERSE_BEAM_B = "diverse_beam_b"
MASK_FILL_LOW = "mask_fill_low"
MASK_FILL_HIGH = "mask_fill_high"
SWAP_INTRINSIC_LOW = "swap_intrinsic_low"
SWAP_INTRINSIC_HIGH = "swap_intrinsic_high"
SWAP_EXTRINSIC_LOW = "swap_extrinsic_low"
SWAP_EXTRINSIC_HIGH = "swap_extrinsic_high"
PARAPHRASE = "paraphrase"
REFERENCE_TAG = "reference"

POSITIVE_TAGS = frozenset({PARAPHRASE, REFERENCE_TAG})

# default per-example candidate counts for a fully populated pool
FAITHFULNESS_POOL_PLAN = (
    (MASK_FILL_LOW, 10),
    (MASK_FILL_HIGH, 10),
    (SWAP_INTRINSIC_LOW, 10),
    (SWAP_INTRINSIC_HIGH, 10),
    (SWAP_EXTRINSIC_LOW, 10),
    (SWAP_EXTRINSIC_HIGH, 10),
    (PARAPHRASE, 5),
    (REFERENCE_TAG, 1),
)
RELEVANCE_POOL_PLAN = ((DIVERSE_BEAM_A, 10), (DIVERSE_BEAM_B, 10))
FAITHFULNESS_POOL_SIZE = sum(n for _, n in FAITHFULNESS_POOL_PLAN)  # 66
RELEVANCE_POOL_SIZE = sum(n for _, n in RELEVANCE_POOL_PLAN)  # 20

DEFAULT_RANK_SIZE = 4
DEFAULT_POSITIVES = 2
DEFAULT_NEGATIVES = 2
ENUMERATION_LIMIT = 24

QUALITY_KEY = "quality"
DENSITY_KEY = "density"

RELEVANCE_STRATEGIES = (
    "random",
    "quality-extreme",
    "quality-average",
    "quality-min",
    "quality-high",
    "margin-max",
    "margin-min",
    "diversity-max",
    "diversity-min",
    "top-beams",
    "bottom-beams",
    "extreme-beams",
    "max-length",
    "min-length",
)
FAITHFULNESS_STRATEGIES = (
    "random",
    "quality-average",
    "margin-max",
    "margin-min",
    "diversity-max",
    "diversity-min",
    "easy",
    "hard",
    "max-extractive-gap",
)


@dataclass
class Candidate:
    candidate_id: str
    text: str
    tokens: tuple[str, ...]
    tag: str
    scores: dict[str, float] = field(default_factory=dict)
    log_likelihood: float = 0.0
    beam_rank: int | None = None
    vector: tuple[float, ...] | None = None

    @property
    def is_positive(self) -> bool:
        return self.tag in POSITIVE_TAGS

    def quality(self, key: str = QUALITY_KEY) -> float:
        if key not in self.scores:
            raise ValueError(f"candidate {self.candidate_id!r} has no {key!r} score")
        return self.scores[key]


@dataclass
class CandidatePool:
    example_id: str
    candidates: list[Candidate]


class MetricNormalizer:
    """Per-metric mean/std fitted on a stated population; zero-variance metrics
    are excluded with a warning."""

    def __init__(self, population: Mapping[str, Sequence[float]]):
        self.stats: dict[str, tuple[float, float]] = {}
        for metric, values in population.items():
            values = list(values)
            if not values:
                continue
            mu = sum(values) / len(values)
            sigma = math.sqrt(sum((v - mu) ** 2 for v in values) / len(values))
            if sigma == 0.0:
                log.warning("metric %r has zero variance; excluded from normalization", metric)
                continue
            self.stats[metric] = (mu, sigma)

    def normalize(self, scores: Mapping[str, float]) -> dict[str, float]:
        out = {}
        for metric, value in scores.items():
            if metric in self.stats:
                mu, sigma = self.stats[metric]
                out[metric] = (value - mu) / sigma
        return out


def aggregate(z_scores: Mapping[str, float], weights: Mapping[str, float] | None = None) -> float:
    """Mean of constituent z-scores (the Rel_Agg / Faith_Agg form)."""
    if not z_scores:
        raise ValueError("no z-scores to aggregate")
    if weights is None:
        return sum(z_scores.values()) / len(z_scores)
    total_weight = sum(weights.get(m, 0.0) for m in z_scores)
    if total_weight == 0.0:
        raise ValueError("weights sum to zero over the supplied metrics")
    return sum(z * weights.get(m, 0.0) for m, z in z_scores.items()) / total_weight


def pairwise_margin_loss(scores: Sequence[float], margin: float) -> float:
    """sum over i<j of max(0, f(S_j) - f(S_i) + (j - i) * margin); index 0 is
    the best-ranked candidate."""
    total = 0.0
    for i in range(len(scores)):
        for j in range(i + 1, len(scores)):
            total += max(0.0, scores[j] - scores[i] + (j - i) * margin)
    return total


def latent_contrast_loss(
    positives: Sequence[Sequence[float]],
    negatives: Sequence[Sequence[float]],
    tau: float,
) -> float:
    """Cosine-similarity InfoNCE over positive pairs against the negatives."""
    if len(positives) < 2:
        raise ValueError("need at least two positives")
    if not negatives:
        raise ValueError("need at least one negative")
    if tau <= 0:
        raise ValueError("tau must be positive")
    pos = [np.asarray(v, dtype=float) for v in positives]
    neg = [np.asarray(v, dtype=float) for v in negatives]

    def cos(a, b):
        denom = np.linalg.norm(a) * np.linalg.norm(b)
        return float(np.dot(a, b) / denom) if denom else 0.0

    pairs = list(combinations(range(len(pos)), 2))
    total = 0.0
    for i, j in pairs:
        numerator = math.exp(cos(pos[i], pos[j]) / tau)
        denominator = sum(math.exp(cos(pos[i], k) / tau) for k in neg)
        total += math.log(numerator / denominator)
    return -total / len(pairs)


def rank_margin(ranked_scores: Sequence[float]) -> float:
    """Mean quality gap between adjacent ranked candidates."""
    if len(ranked_scores) < 2:
        return 0.0
    gaps = [ranked_scores[i] - ranked_scores[i + 1] for i in range(len(ranked_scores) - 1)]
    return sum(gaps) / len(gaps)


def contrast_margin(positive_scores: Sequence[float], negative_scores: Sequence[float]) -> float:
    """mean(positives) - mean(negatives)."""
    if not positive_scores or not negative_scores:
        raise ValueError("both sides must be non-empty")
    return sum(positive_scores) / len(positive_scores) - sum(negative_scores) / len(negative_scores)


@dataclass
class ContrastSelection:
    task: str
    strategy: str
    ranked: list[Candidate] = field(default_factory=list)  # relevance
    positives: list[Candidate] = field(default_factory=list)  # faithfulness
    negatives: list[Candidate] = field(default_factory=list)

    @property
    def members(self) -> list[Candidate]:
        return self.ranked if self.task == RELEVANCE else self.positives + self.negatives


def _by_quality(candidates: Sequence[Candidate], key: str) -> list[Candidate]:
    return sorted(candidates, key=lambda c: (-c.quality(key), c.candidate_id))


def _diversity(candidates: Sequence[Candidate]) -> float:
    return 1.0 - self_bleu([list(c.tokens) for c in candidates])


def _subset_ids(candidates: Sequence[Candidate]) -> tuple[str, ...]:
    return tuple(sorted(c.candidate_id for c in candidates))


def _enumerate_best(
    candidates: Sequence[Candidate],
    size: int,
    objective,
    maximize: bool,
) -> list[Candidate]:
    """Exhaustive subset search; beyond ENUMERATION_LIMIT candidates, a greedy
    forward heuristic with a warning."""
    sign = 1.0 if maximize else -1.0
    if len(candidates) <= ENUMERATION_LIMIT:
        best, best_key = None, None
        for subset in combinations(sorted(candidates, key=lambda c: c.candidate_id), size):
            key = (-sign * objective(subset), _subset_ids(subset))
            if best_key is None or key < best_key:
                best, best_key = list(subset), key
        return best
    log.warning(
        "pool of %d candidates exceeds enumeration limit %d; using greedy heuristic",
        len(candidates),
        ENUMERATION_LIMIT,
    )
    ordered = sorted(candidates, key=lambda c: c.candidate_id)
    best_pair, best_key = None, None
    for pair in combinations(ordered, 2):
        key = (-sign * objective(pair), _subset_ids(pair))
        if best_key is None or key < best_key:
            best_pair, best_key = list(pair), key
    chosen = best_pair
    while len(chosen) < size:
        best_next, best_key = None, None
        for candidate in ordered:
            if candidate in chosen:
                continue
            key = (-sign * objective(tuple(chosen) + (candidate,)), candidate.candidate_id)
            if best_key is None or key < best_key:
                best_next, best_key = candidate, key
        chosen.append(best_next)
    return chosen


def _require_pool(candidates: Sequence[Candidate], needed: int, label: str) -> None:
    if len(candidates) < needed:
        raise ValueError(f"pool has {len(candidates)} {label} candidates, needs {needed}")


def select(
    pool: Sequence[Candidate],
    strategy: str,
    task: str,
    *,
    quality_key: str = QUALITY_KEY,
    seed: int = 0,
    n_rank: int = DEFAULT_RANK_SIZE,
    n_positive: int = DEFAULT_POSITIVES,
    n_negative: int = DEFAULT_NEGATIVES,
) -> ContrastSelection:
    """Select a contrast set from the candidate pool.

    Relevance selections are rank sets of ``n_rank`` candidates (ordered best
    first by quality); faithfulness selections are ``n_positive`` positives
    plus ``n_negative`` negatives, split by generator tag.
    """
    if task == RELEVANCE:
        if strategy not in RELEVANCE_STRATEGIES:
            raise ValueError(f"strategy {strategy!r} not defined for relevance")
        return _select_relevance(list(pool), strategy, quality_key, seed, n_rank)
    if task == FAITHFULNESS:
        if strategy not in FAITHFULNESS_STRATEGIES:
            raise ValueError(f"strategy {strategy!r} not defined for faithfulness")
        return _select_faithfulness(list(pool), strategy, quality_key, seed, n_positive, n_negative)
    raise ValueError(f"unknown task {task!r}")


def _select_relevance(
    pool: list[Candidate], strategy: str, key: str, seed: int, n: int
) -> ContrastSelection:
    _require_pool(pool, n, "total")
    ordered = _by_quality(pool, key)

    if strategy == "random":
        rng = random.Random(seed)
        chosen = rng.sample(sorted(pool, key=lambda c: c.candidate_id), n)
    elif strategy == "quality-high":
        chosen = ordered[:n]
    elif strategy == "quality-min":
        chosen = ordered[-n:]
    elif strategy == "quality-extreme":
        chosen = ordered[: n // 2] + ordered[-(n - n // 2) :]
    elif strategy == "quality-average":
        mean = sum(c.quality(key) for c in pool) / len(pool)
        chosen = sorted(pool, key=lambda c: (abs(c.quality(key) - mean), c.candidate_id))[:n]
    elif strategy in ("margin-max", "margin-min"):
        objective = lambda subset: rank_margin([c.quality(key) for c in _by_quality(subset, key)])
        chosen = _enumerate_best(pool, n, objective, maximize=strategy == "margin-max")
    elif strategy in ("diversity-max", "diversity-min"):
        chosen = _enumerate_best(pool, n, _diversity, maximize=strategy == "diversity-max")
    elif strategy in ("top-beams", "bottom-beams", "extreme-beams"):
        if any(c.beam_rank is None for c in pool):
            raise ValueError("beam strategies require beam_rank on every candidate")
        beams = sorted(pool, key=lambda c: (c.beam_rank, c.candidate_id))
        if strategy == "top-beams":
            chosen = beams[:n]
        elif strategy == "bottom-beams":
            chosen = beams[-n:]
        else:
            chosen = beams[: n // 2] + beams[-(n - n // 2) :]
    elif strategy in ("max-length", "min-length"):
        sign = -1 if strategy == "max-length" else 1
        chosen = sorted(pool, key=lambda c: (sign * len(c.tokens), c.candidate_id))[:n]
    else:  # pragma: no cover - guarded by caller
        raise ValueError(strategy)
    return ContrastSelection(RELEVANCE, strategy, ranked=_by_quality(chosen, key))


def _select_faithfulness(
    pool: list[Candidate], strategy: str, key: str, seed: int, n_pos: int, n_neg: int
) -> ContrastSelection:
    positives = [c for c in pool if c.is_positive]
    negatives = [c for c in pool if not c.is_positive]
    _require_pool(positives, n_pos, "positive")
    _require_pool(negatives, n_neg, "negative")

    if strategy == "random":
        rng = random.Random(seed)
        pos = rng.sample(sorted(positives, key=lambda c: c.candidate_id), n_pos)
        neg = rng.sample(sorted(negatives, key=lambda c: c.candidate_id), n_neg)
    elif strategy == "quality-average":
        def closest_to_mean(side, n):
            mean = sum(c.quality(key) for c in side) / len(side)
            return sorted(side, key=lambda c: (abs(c.quality(key) - mean), c.candidate_id))[:n]

        pos = closest_to_mean(positives, n_pos)
        neg = closest_to_mean(negatives, n_neg)
    elif strategy == "margin-max":
        pos = _by_quality(positives, key)[:n_pos]
        neg = _by_quality(negatives, key)[-n_neg:]
    elif strategy == "margin-min":
        pos = _by_quality(positives, key)[-n_pos:]
        neg = _by_quality(negatives, key)[:n_neg]
    elif strategy in ("diversity-max", "diversity-min"):
        maximize = strategy == "diversity-max"
        pos = _enumerate_best(positives, n_pos, _diversity, maximize)
        neg = _enumerate_best(negatives, n_neg, _diversity, maximize)
    elif strategy in ("easy", "hard"):
        by_likelihood = lambda side: sorted(
            side, key=lambda c: (-c.log_likelihood, c.candidate_id)
        )
        if strategy == "easy":  # most likely positives, least likely negatives
            pos = by_likelihood(positives)[:n_pos]
            neg = by_likelihood(negatives)[-n_neg:]
        else:  # confidence and faithfulness in conflict
            pos = by_likelihood(positives)[-n_pos:]
            neg = by_likelihood(negatives)[:n_neg]
    elif strategy == "max-extractive-gap":
        def density(c: Candidate) -> float:
            return c.quality(DENSITY_KEY)

        pos = sorted(positives, key=lambda c: (-density(c), c.candidate_id))[:n_pos]
        neg = sorted(negatives, key=lambda c: (density(c), c.candidate_id))[:n_neg]
    else:  # pragma: no cover - guarded by caller
        raise ValueError(strategy)
    return ContrastSelection(FAITHFULNESS, strategy, positives=pos, negatives=neg)


@dataclass(frozen=True)
class SetStatistics:
    mean_quality: float
    margin: float
    diversity: float  # inverse self-BLEU
    mean_log_likelihood: float
    likelihood_gap: float | None
    mean_token_length: float
    extractive_gap: float | None


def set_statistics(
    selection: ContrastSelection | Sequence[Candidate],
    quality_key: str = QUALITY_KEY,
) -> SetStatistics:
    if isinstance(selection, ContrastSelection):
        members = selection.members
        contrast = selection.task == FAITHFULNESS
    else:
        members = list(selection)
        contrast = False
    if not members:
        raise ValueError("empty candidate set")
    qualities = [c.quality(quality_key) for c in members]
    if contrast:
        margin = contrast_margin(
            [c.quality(quality_key) for c in selection.positives],
            [c.quality(quality_key) for c in selection.negatives],
        )
        likelihood_gap = sum(c.log_likelihood for c in selection.positives) / len(
            selection.positives
        ) - sum(c.log_likelihood for c in selection.negatives) / len(selection.negatives)
        try:
            extractive_gap = sum(c.quality(DENSITY_KEY) for c in selection.positives) / len(
                selection.positives
            ) - sum(c.quality(DENSITY_KEY) for c in selection.negatives) / len(selection.negatives)
        except ValueError:
            extractive_gap = None
    else:
        ranked = _by_quality(members, quality_key)
        margin = rank_margin([c.quality(quality_key) for c in ranked])
        likelihood_gap = None
        extractive_gap = None
    return SetStatistics(
        mean_quality=sum(qualities) / len(qualities),
        margin=margin,
        diversity=_diversity(members) if len(members) >= 2 else 0.0,
        mean_log_likelihood=sum(c.log_likelihood for c in members) / len(members),
        likelihood_gap=likelihood_gap,
        mean_token_length=sum(len(c.tokens) for c in members) / len(members),
        extractive_gap=extractive_gap,
    )


def _zscores(values: Sequence[float]) -> list[float]:
    values = list(values)
    if len(values) < 2:
        raise ValueError("population needs at least 2 values")
    mu = sum(values) / len(values)
    sigma = math.sqrt(sum((v - mu) ** 2 for v in values) / len(values))
    if sigma == 0.0:
        raise ValueError("population has zero variance")
    return [(v - mu) / sigma for v in values]


def coverage_combined_metric(
    metric_values: Sequence[float], coverage_values: Sequence[float]
) -> list[float]:
    """g = (z(f) + z(cov)) / 2 with population stats from the given vectors."""
    if len(metric_values) != len(coverage_values):
        raise ValueError("value vectors must have equal length")
    zf = _zscores(metric_values)
    zc = _zscores(coverage_values)
    return [(a + b) / 2 for a, b in zip(zf, zc)]


def distillation_targets(scores_by_metric: Mapping[str, Sequence[float]]) -> list[float]:
    """Pseudo-targets: per-metric z-normalization, then the per-candidate mean."""
    if not scores_by_metric:
        raise ValueError("no metrics supplied")
    lengths = {len(v) for v in scores_by_metric.values()}
    if len(lengths) != 1:
        raise ValueError("metric vectors must have equal length")
    z_by_metric = {m: _zscores(v) for m, v in scores_by_metric.items()}
    n = lengths.pop()
    return [sum(z_by_metric[m][i] for m in z_by_metric) / len(z_by_metric) for i in range(n)]


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    if len(x) != len(y):
        raise ValueError("vectors must have equal length")
    if len(x) < 2:
        raise ValueError("need at least 2 points")
    mx = sum(x) / len(x)
    my = sum(y) / len(y)
    dx = [v - mx for v in x]
    dy = [v - my for v in y]
    sx = math.sqrt(sum(v * v for v in dx))
    sy = math.sqrt(sum(v * v for v in dy))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("zero variance")
    return sum(a * b for a, b in zip(dx, dy)) / (sx * sy)


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks with ties assigned their average rank."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    return pearson(average_ranks(x), average_ranks(y))


NO_ERROR = "NO_ERROR"
NOT_IN_NOTES = "NOT_IN_NOTES"
INCORRECT = "INCORRECT"
MISSING = "MISSING"
ERROR_CATEGORIES = frozenset({NOT_IN_NOTES, INCORRECT, MISSING})
LABEL_CATEGORIES = (NO_ERROR, NOT_IN_NOTES, INCORRECT, MISSING)


def herr(se_categories: Sequence[str]) -> float | None:
    """Fraction of a sentence's summary elements labeled with any error;
    None (excluded, flagged) for sentences without summary elements."""
    if not se_categories:
        log.warning("herr: sentence has no summary elements; excluded")
        return None
    return sum(1 for c in se_categories if c in ERROR_CATEGORIES) / len(se_categories)
