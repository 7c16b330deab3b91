import math
import random
from fractions import Fraction

import pytest

from coursekit.lexical import (
    FragmentStats,
    bleu,
    compression_ratio,
    extractive_fragments,
    r12,
    rouge_l,
    rouge_n,
    section_salience_target,
    self_bleu,
)

VOCAB = ["a", "b", "c", "d", "e", "f"]


def brute_rouge_n(candidate, reference, n):
    """Independent oracle: explicit list-based clipped n-gram counting."""
    cand_grams = [tuple(candidate[i : i + n]) for i in range(len(candidate) - n + 1)]
    ref_grams = [tuple(reference[i : i + n]) for i in range(len(reference) - n + 1)]
    remaining = list(ref_grams)
    match = 0
    for gram in cand_grams:
        if gram in remaining:
            remaining.remove(gram)
            match += 1
    p = Fraction(match, len(cand_grams)) if cand_grams else Fraction(0)
    r = Fraction(match, len(ref_grams)) if ref_grams else Fraction(0)
    f = 2 * p * r / (p + r) if p + r > 0 else Fraction(0)
    return float(p), float(r), float(f)


def brute_lcs(a, b):
    """Independent oracle: memoized recursive LCS."""
    from functools import lru_cache

    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + go(i + 1, j + 1)
        return max(go(i + 1, j), go(i, j + 1))

    return go(0, 0)


class TestRougeN:
    def test_identity(self):
        score = rouge_n(["a", "b"], ["a", "b"], 1)
        assert score.f1 == 1.0

    def test_disjoint(self):
        assert rouge_n(["a"], ["b"], 1).f1 == 0.0

    def test_hand_counted_unigram(self):
        score = rouge_n(["a", "b", "c"], ["a", "b", "d"], 1)
        assert score.precision == pytest.approx(2 / 3)
        assert score.recall == pytest.approx(2 / 3)
        assert score.f1 == pytest.approx(2 / 3)

    def test_empty_side_scores_zero(self):
        assert rouge_n([], ["a"], 1).f1 == 0.0
        assert rouge_n(["a"], [], 2).f1 == 0.0

    def test_invalid_n(self):
        with pytest.raises(ValueError):
            rouge_n(["a"], ["a"], 0)

    def test_symmetric_inputs_swap_p_and_r(self):
        ab = rouge_n(["a", "a", "b"], ["a", "c"], 1)
        ba = rouge_n(["a", "c"], ["a", "a", "b"], 1)
        assert ab.precision == ba.recall and ab.recall == ba.precision

    def test_matches_brute_force_on_random_pairs(self):
        rng = random.Random(401)
        for _ in range(200):
            cand = [rng.choice(VOCAB) for _ in range(rng.randint(0, 12))]
            ref = [rng.choice(VOCAB) for _ in range(rng.randint(0, 12))]
            n = rng.randint(1, 3)
            got = rouge_n(cand, ref, n)
            p, r, f = brute_rouge_n(cand, ref, n)
            assert got.precision == pytest.approx(p, abs=1e-12)
            assert got.recall == pytest.approx(r, abs=1e-12)
            assert got.f1 == pytest.approx(f, abs=1e-12)


class TestRougeL:
    def test_identity(self):
        assert rouge_l(["a", "b"], ["a", "b"]).f1 == 1.0

    def test_hand_case(self):
        score = rouge_l(["a", "b", "c", "d"], ["a", "c"])
        assert score.recall == 1.0
        assert score.precision == 0.5

    def test_empty(self):
        assert rouge_l([], ["a"]).f1 == 0.0

    def test_matches_recursive_oracle(self):
        rng = random.Random(402)
        for _ in range(100):
            a = [rng.choice(VOCAB) for _ in range(rng.randint(0, 10))]
            b = [rng.choice(VOCAB) for _ in range(rng.randint(0, 10))]
            got = rouge_l(a, b)
            lcs = brute_lcs(tuple(a), tuple(b))
            assert got.precision == pytest.approx(lcs / len(a) if a else 0.0)
            assert got.recall == pytest.approx(lcs / len(b) if b else 0.0)


class TestR12:
    def test_identity_and_disjoint(self):
        assert r12(["a", "b"], ["a", "b"]) == 1.0
        assert r12(["a"], ["b"]) == 0.0

    def test_hand_value(self):
        # R1 = 2/3, R2 = 1/2 -> mean 7/12
        assert r12(["a", "b", "c"], ["a", "b", "d"]) == pytest.approx(7 / 12)


class TestFragments:
    def test_verbatim_copy(self):
        stats = extractive_fragments(["a", "b", "c"], ["x", "a", "b", "c", "y"])
        assert stats.coverage == 1.0
        assert stats.density == pytest.approx(3.0)

    def test_hand_decomposition(self):
        stats = extractive_fragments(["a", "b", "x"], ["a", "b", "c", "d"])
        assert stats.coverage == pytest.approx(2 / 3)
        assert stats.density == pytest.approx(4 / 3)
        assert [f.length for f in stats.fragments] == [2]

    def test_no_shared_tokens(self):
        stats = extractive_fragments(["x", "y"], ["a", "b"])
        assert stats.coverage == 0.0 and not stats.fragments

    def test_empty_summary(self):
        assert extractive_fragments([], ["a"]) == FragmentStats(0.0, 0.0, ())

    def test_density_at_least_coverage(self):
        rng = random.Random(403)
        for _ in range(100):
            summary = [rng.choice(VOCAB) for _ in range(rng.randint(1, 10))]
            source = [rng.choice(VOCAB) for _ in range(rng.randint(1, 20))]
            stats = extractive_fragments(summary, source)
            assert 0.0 <= stats.coverage <= 1.0
            assert stats.density >= stats.coverage - 1e-12

    def test_tie_takes_earliest_source_start(self):
        stats = extractive_fragments(["a", "b"], ["a", "b", "z", "a", "b"])
        assert stats.fragments[0].source_start == 0

    def test_coverage_unchanged_by_permuting_untouched_source(self):
        summary = ["a", "b"]
        before = extractive_fragments(summary, ["a", "b", "q", "r", "s"])
        after = extractive_fragments(summary, ["a", "b", "s", "q", "r"])
        assert before.coverage == after.coverage


class TestSelfBleu:
    def test_identical_candidates(self):
        assert self_bleu([["a", "b", "c", "d"]] * 3) == pytest.approx(1.0)

    def test_disjoint_candidates_near_zero(self):
        assert self_bleu([["a", "b"], ["c", "d"]]) < 1e-6

    def test_requires_two(self):
        with pytest.raises(ValueError):
            self_bleu([["a"]])

    def test_hand_bleu_pair(self):
        # hyp "a b c d" vs ref "a b c e": p1=3/4, p2=2/3, p3=1/2, p4=eps, BP=1
        expected_one_way = math.exp(
            (math.log(3 / 4) + math.log(2 / 3) + math.log(1 / 2) + math.log(1e-9)) / 4
        )
        got = self_bleu([["a", "b", "c", "d"], ["a", "b", "c", "e"]])
        assert got == pytest.approx(expected_one_way)  # symmetric pair, same both ways

    def test_permutation_invariant(self):
        cands = [["a", "b"], ["a", "c", "d"], ["b", "c"]]
        assert self_bleu(cands) == pytest.approx(self_bleu(list(reversed(cands))))

    def test_brevity_penalty_applied(self):
        assert bleu(["a"], ["a", "a", "a"]) == pytest.approx(math.exp(1 - 3))


class TestSectionSalience:
    def test_section_superset_of_reference(self):
        assert section_salience_target(["x", "a", "b", "y"], ["a", "b"]) == 1.0

    def test_disjoint(self):
        assert section_salience_target(["x", "y"], ["a", "b"]) == 0.0

    def test_hand_value(self):
        # ref unigrams covered: a,b of a,b,c -> R1 recall 2/3
        # ref bigrams covered: (a,b) of (a,b),(b,c) -> R2 recall 1/2
        got = section_salience_target(["a", "b", "z"], ["a", "b", "c"])
        assert got == pytest.approx((2 / 3 + 1 / 2) / 2)

    def test_monotone_under_appending_reference_tokens(self):
        section = ["a", "x"]
        reference = ["a", "b", "c"]
        base = section_salience_target(section, reference)
        grown = section_salience_target(section + ["b"], reference)
        assert grown >= base

    def test_single_token_reference(self):
        assert section_salience_target(["a"], ["a"]) == 1.0


class TestCompression:
    def test_unity(self):
        assert compression_ratio(100, 100) == 1.0

    def test_arithmetic(self):
        assert compression_ratio(84, 2) == 42.0

    def test_zero_summary_rejected(self):
        with pytest.raises(ValueError):
            compression_ratio(10, 0)
