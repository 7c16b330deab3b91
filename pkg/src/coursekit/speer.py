"""SPEER format layer: guidance-prompt serialization, ``{{ }}`` entity
marking of source notes, the interleaved plan/sentence output template
(parse + serialize), oracle plan construction, adherence scoring, and the
instruction strings for each prompting mode."""
from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus import PROBLEM, TEST, TREATMENT, EntityMention, Sentence
from .entities import EsgIndex, SynonymPredicate, best_source_esg
from .similarity import SimilarityBackend, normalize_mention_text

log = logging.getLogger(__name__)

OPEN = "{{"
CLOSE = "}}"

NON_GUIDED = "non_guided"
GUIDED = "guided"
SPEER = "speer"

INSTRUCTIONS = {
    NON_GUIDED: "Generate the BRIEF HOSPITAL COURSE summary.",
    GUIDED: (
        "Generate the BRIEF HOSPITAL COURSE summary using only the medical "
        "entities (PROBLEMS, TREATMENTS, and TESTS) provided."
    ),
    SPEER: (
        "Retrieve a subset of the medical entities in double brackets {{ }} "
        "and use them to generate the next sentence of the BRIEF HOSPITAL "
        "COURSE summary."
    ),
}
PROMPT_TERMINATOR = "### BRIEF HOSPITAL COURSE:\n"

GUIDANCE_HEADERS = ((PROBLEM, "PROBLEMS"), (TREATMENT, "TREATMENTS"), (TEST, "TESTS"))


class SpeerParseError(ValueError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


def escape_braces(text: str) -> str:
    """Double pre-existing brace digraphs so marks stay unambiguous."""
    return text.replace(OPEN, OPEN + OPEN).replace(CLOSE, CLOSE + CLOSE)


def scan_marked(text: str) -> tuple[str, list[tuple[int, int]]]:
    """Decode marked text: returns the unmarked text and the char spans of the
    marked regions within it. Longest-match-first: 4-brace escapes, then
    2-brace markers; lone braces pass through."""
    out: list[str] = []
    spans: list[tuple[int, int]] = []
    open_at: int | None = None
    length = 0
    i = 0
    while i < len(text):
        chunk4 = text[i : i + 4]
        if chunk4 == OPEN * 2 or chunk4 == CLOSE * 2:
            out.append(chunk4[:2])
            length += 2
            i += 4
            continue
        chunk2 = text[i : i + 2]
        if chunk2 == OPEN and open_at is None:
            open_at = length
            i += 2
            continue
        if chunk2 == CLOSE and open_at is not None:
            spans.append((open_at, length))
            open_at = None
            i += 2
            continue
        out.append(text[i])
        length += 1
        i += 1
    return "".join(out), spans


def unmark(text: str) -> str:
    return scan_marked(text)[0]


@dataclass(frozen=True)
class MarkedText:
    marked: str
    # (original_start, original_end) per marked span, in order
    spans: tuple[tuple[int, int], ...]


def mark_text(text: str, spans: Sequence[tuple[int, int]]) -> MarkedText:
    """Wrap each span as {{ span }}; overlaps resolved by keeping the longer
    span (logged); pre-existing brace digraphs are escaped."""
    ordered = sorted(spans, key=lambda s: (-(s[1] - s[0]), s[0]))
    kept: list[tuple[int, int]] = []
    for span in ordered:
        if not 0 <= span[0] < span[1] <= len(text):
            raise ValueError(f"span {span} out of range")
        if any(span[0] < e and s < span[1] for s, e in kept):
            log.info("dropping overlapping mark span %s", span)
            continue
        kept.append(span)
    kept.sort()
    pieces = []
    cursor = 0
    for start, end in kept:
        pieces.append(escape_braces(text[cursor:start]))
        pieces.append(OPEN + escape_braces(text[start:end]) + CLOSE)
        cursor = end
    pieces.append(escape_braces(text[cursor:]))
    return MarkedText("".join(pieces), tuple(kept))


def mark_note_text(
    note_text: str, mentions: Sequence[EntityMention], salient_esgs: set[str], esg_of: Mapping[str, str]
) -> MarkedText:
    spans = [
        (m.start, m.end)
        for m in mentions
        if esg_of.get(m.mention_id) in salient_esgs
    ]
    return mark_text(note_text, spans)


@dataclass(frozen=True)
class GuidanceLine:
    esg_id: str
    mentions: tuple[str, ...]  # unique surface forms, document order


@dataclass(frozen=True)
class GuidancePrompt:
    groups: tuple[tuple[str, tuple[GuidanceLine, ...]], ...]  # (header, lines)

    def render(self) -> str:
        blocks = []
        for header, lines in self.groups:
            rows = [header + ":"]
            rows.extend("; ".join(line.mentions) for line in lines)
            blocks.append("\n".join(rows))
        return "\n".join(blocks)


def _esg_semantic_type(members: Sequence[EntityMention]) -> str:
    ranking = {t: i for i, (t, _) in enumerate(GUIDANCE_HEADERS)}
    counts: dict[str, int] = {}
    for m in members:
        counts[m.semantic_type] = counts.get(m.semantic_type, 0) + 1
    typed = [t for t in counts if t in ranking]
    if not typed:
        return PROBLEM
    return min(typed, key=lambda t: (-counts[t], ranking[t]))


def build_guidance_prompt(
    index: EsgIndex,
    *,
    shuffle_seed: int | None = None,
    esg_order: Sequence[str] | None = None,
) -> GuidancePrompt:
    """Salient ESGs grouped by semantic type, one line per ESG listing its
    unique mentions. Training uses a seeded shuffle; inference passes the
    classifier's output order."""
    salient = [g.esg_id for g in index.salient_groups()]
    if esg_order is not None:
        ordered = [e for e in esg_order if e in set(salient)]
    else:
        ordered = sorted(salient)
        if shuffle_seed is not None:
            random.Random(shuffle_seed).shuffle(ordered)
    lines_by_type: dict[str, list[GuidanceLine]] = {t: [] for t, _ in GUIDANCE_HEADERS}
    for esg_id in ordered:
        members = sorted(index.members_of(esg_id), key=lambda m: (m.doc_ref, m.start))
        unique: list[str] = []
        seen = set()
        for m in members:
            key = normalize_mention_text(m.text)
            if key not in seen:
                seen.add(key)
                unique.append(m.text)
        lines_by_type[_esg_semantic_type(members)].append(GuidanceLine(esg_id, tuple(unique)))
    return GuidancePrompt(
        tuple((header, tuple(lines_by_type[t])) for t, header in GUIDANCE_HEADERS)
    )


@dataclass(frozen=True)
class SpeerStep:
    plan: tuple[str, ...]
    sentence: str


@dataclass(frozen=True)
class SpeerDocument:
    steps: tuple[SpeerStep, ...]

    @property
    def summary(self) -> str:
        return "\n".join(step.sentence for step in self.steps)

    @property
    def plans(self) -> list[tuple[str, ...]]:
        return [step.plan for step in self.steps]


_ENTITIES_RE = re.compile(r"^### Entities (\d+):(.*)$")
_SENTENCE_RE = re.compile(r"^### Sentence (\d+):(.*)$")


def _check_component(text: str, kind: str) -> str:
    if "\n" in text:
        raise ValueError(f"{kind} contains a newline: {text!r}")
    if text != text.strip():
        raise ValueError(f"{kind} has leading/trailing whitespace: {text!r}")
    return text


def _check_plan_span(text: str) -> str:
    # boundary braces would merge with the {{ }} markers and shift the span
    _check_component(text, "plan span")
    if text.startswith("{") or text.endswith("}"):
        raise ValueError(f"plan span has a boundary brace: {text!r}")
    return text


def serialize_speer(document: SpeerDocument) -> str:
    lines = []
    for i, step in enumerate(document.steps, start=1):
        spans = " ".join(
            OPEN + escape_braces(_check_plan_span(span)) + CLOSE for span in step.plan
        )
        lines.append(f"### Entities {i}:" + (f" {spans}" if spans else ""))
        sentence = _check_component(step.sentence, "sentence")
        lines.append(f"### Sentence {i}:" + (f" {sentence}" if sentence else ""))
    return "\n".join(lines)


def parse_speer(text: str) -> SpeerDocument:
    """Parse the interleaved template; tolerates trailing whitespace and a
    missing final newline, rejects malformed interleaving with line numbers."""
    steps: list[SpeerStep] = []
    pending_plan: tuple[str, ...] | None = None
    expected_index = 1
    for line_number, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip()
        if not line:
            continue
        entities = _ENTITIES_RE.match(line)
        sentence = _SENTENCE_RE.match(line)
        if entities:
            if pending_plan is not None:
                raise SpeerParseError(line_number, "Entities line without a Sentence line before it")
            if int(entities.group(1)) != expected_index:
                raise SpeerParseError(
                    line_number, f"expected Entities {expected_index}, got {entities.group(1)}"
                )
            remainder = entities.group(2).strip()
            plain, spans = scan_marked(remainder)
            pending_plan = tuple(plain[s:e] for s, e in spans)
            continue
        if sentence:
            if pending_plan is None:
                raise SpeerParseError(line_number, "Sentence line before any Entities line")
            if int(sentence.group(1)) != expected_index:
                raise SpeerParseError(
                    line_number, f"expected Sentence {expected_index}, got {sentence.group(1)}"
                )
            steps.append(SpeerStep(pending_plan, sentence.group(2).strip()))
            pending_plan = None
            expected_index += 1
            continue
        raise SpeerParseError(line_number, f"unrecognized line {line!r}")
    if pending_plan is not None:
        raise SpeerParseError(text.count("\n") + 1, "dangling Entities line at end of document")
    return SpeerDocument(tuple(steps))


def oracle_plan(
    reference_sentences: Sequence[Sentence],
    mentions_by_sentence: Mapping[int, Sequence[EntityMention]],
    index: EsgIndex,
    backend: SimilarityBackend,
    synonym_predicate: SynonymPredicate,
) -> SpeerDocument:
    """Per reference sentence, its in-order mentions whose source ESG is
    salient, rendered as plan spans."""
    steps = []
    for sentence in reference_sentences:
        plan = []
        for mention in sorted(mentions_by_sentence.get(sentence.index, ()), key=lambda m: m.start):
            esg = best_source_esg(mention, index, backend, synonym_predicate)
            if esg is not None and index.group(esg).source_salient:
                plan.append(mention.text)
        steps.append(SpeerStep(tuple(plan), sentence.text))
    return SpeerDocument(tuple(steps))


def adherence(
    generated_mentions: Sequence[EntityMention],
    guidance_esgs: set[str],
    index: EsgIndex,
    backend: SimilarityBackend,
    synonym_predicate: SynonymPredicate,
) -> tuple[float, float, float]:
    """(recall, precision, F1) of the ESGs a summary actually used against its
    guidance set."""
    used: set[str] = set()
    for mention in generated_mentions:
        esg = best_source_esg(mention, index, backend, synonym_predicate)
        if esg is not None:
            used.add(esg)
    hits = len(guidance_esgs & used)
    recall = hits / len(guidance_esgs) if guidance_esgs else 0.0
    precision = hits / len(used) if used else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return recall, precision, f1


def instruction_text(mode: str) -> str:
    if mode not in INSTRUCTIONS:
        raise ValueError(f"unknown prompting mode {mode!r}")
    return INSTRUCTIONS[mode]


def assemble_prompt(mode: str, source_text: str, guidance_text: str | None = None) -> str:
    parts = [instruction_text(mode), source_text]
    if guidance_text:
        parts.append(guidance_text)
    return "\n\n".join(parts) + "\n\n" + PROMPT_TERMINATOR
