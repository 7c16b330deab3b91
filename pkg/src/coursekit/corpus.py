"""Data model and JSONL ingestion for admissions, notes, sentences, and mentions.

One admission per JSONL line:

    {"admission_id": str, "reference": str,
     "notes": [{"note_id": str, "title": str, "timestamp": "YYYY-MM-DDTHH:MM:SS",
                "day_index": int, "total_days": int,
                "sections": [{"header": str, "text": str}]}],
     "mentions": [{"mention_id": str, "doc_ref": str, "start": int, "end": int,
                   "text": str, "semantic_type": str, "codes": [str]}]}
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Iterable, Iterator

REFERENCE = "REFERENCE"
GENERATED = "GENERATED"

PROBLEM = "PROBLEM"
TEST = "TEST"
TREATMENT = "TREATMENT"
OTHER = "OTHER"
SEMANTIC_TYPES = (PROBLEM, TEST, TREATMENT, OTHER)


class CorpusError(ValueError):
    """Base error for corpus ingestion problems."""


class CorpusParseError(CorpusError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class CorpusValidationError(CorpusError):
    def __init__(self, field_name: str, message: str, line_number: int | None = None):
        where = f"line {line_number}: " if line_number is not None else ""
        super().__init__(f"{where}field '{field_name}': {message}")
        self.field_name = field_name
        self.line_number = line_number


_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)
# break after sentence-final punctuation when whitespace + a capital follows
_SENT_BREAK_RE = re.compile(r"[.!?]+(?=\s+[A-Z])")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and detach punctuation marks."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Sentence:
    doc_ref: str
    index: int
    text: str
    tokens: tuple[str, ...]
    start: int = 0  # char offset of text within its source document
    end: int = 0

    @property
    def location(self) -> tuple[str, int]:
        return (self.doc_ref, self.index)


def split_sentences(text: str, doc_ref: str = GENERATED) -> list[Sentence]:
    """Rule-based splitter: newline boundaries plus punctuation-then-capital breaks."""
    sentences: list[Sentence] = []
    offset = 0
    for line in text.split("\n"):
        cursor = 0
        breaks = [m.end() for m in _SENT_BREAK_RE.finditer(line)] + [len(line)]
        for stop in breaks:
            chunk = line[cursor:stop]
            stripped = chunk.strip()
            if stripped:
                start = offset + cursor + chunk.index(stripped[0])
                sentences.append(
                    Sentence(
                        doc_ref=doc_ref,
                        index=len(sentences),
                        text=stripped,
                        tokens=tuple(tokenize(stripped)),
                        start=start,
                        end=start + len(stripped),
                    )
                )
            cursor = stop
        offset += len(line) + 1
    return sentences


@dataclass(frozen=True)
class Section:
    header: str
    body: str


@dataclass(frozen=True)
class EntityMention:
    mention_id: str
    doc_ref: str
    start: int
    end: int
    text: str
    semantic_type: str = OTHER
    codes: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Note:
    note_id: str
    title: str
    timestamp: datetime
    day_index: int
    total_days: int
    sections: tuple[Section, ...]

    @property
    def full_text(self) -> str:
        return "\n".join(f"{s.header}\n{s.body}" for s in self.sections)

    def section_spans(self) -> list[tuple[Section, int, int]]:
        """Char range of each section block within ``full_text``."""
        spans = []
        offset = 0
        for section in self.sections:
            block = f"{section.header}\n{section.body}"
            spans.append((section, offset, offset + len(block)))
            offset += len(block) + 1
        return spans

    def section_at(self, offset: int) -> Section | None:
        for section, start, end in self.section_spans():
            if start <= offset < end:
                return section
        return None


@dataclass(frozen=True)
class AdmissionRecord:
    admission_id: str
    notes: tuple[Note, ...]
    reference: str
    mentions: tuple[EntityMention, ...] = ()

    def note(self, note_id: str) -> Note:
        for n in self.notes:
            if n.note_id == note_id:
                return n
        raise KeyError(note_id)

    def document_text(self, doc_ref: str) -> str:
        if doc_ref == REFERENCE:
            return self.reference
        return self.note(doc_ref).full_text

    def reference_mentions(self) -> tuple[EntityMention, ...]:
        return tuple(m for m in self.mentions if m.doc_ref == REFERENCE)

    def source_mentions(self) -> tuple[EntityMention, ...]:
        return tuple(m for m in self.mentions if m.doc_ref != REFERENCE)


def note_sentences(note: Note) -> list[Sentence]:
    return split_sentences(note.full_text, doc_ref=note.note_id)

def reference_sentences(admission: AdmissionRecord) -> list[Sentence]:
    return split_sentences(admission.reference, doc_ref=REFERENCE)

def source_sentences(admission: AdmissionRecord) -> list[Sentence]:
    """All source sentences in note order; indices restart per note."""
    out: list[Sentence] = []
    for note in admission.notes:
        out.extend(note_sentences(note))
    return out


def format_note_header(note: Note) -> str:
    header = (
        f"{note.title} — {note.timestamp.date().isoformat()} — "
        f"Day {note.day_index} of {note.total_days}"
    )
    if note.day_index == 1:
        header += " (On Admission)"
    if note.day_index == note.total_days:
        header += " (On Discharge)"
    return header


def _require(obj: dict, key: str, kind, line: int | None):
    if key not in obj:
        raise CorpusValidationError(key, "missing", line)
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        raise CorpusValidationError(key, f"expected {kind.__name__}", line)
    return value


def mention_from_dict(obj: dict, line: int | None = None) -> EntityMention:
    mention_id = _require(obj, "mention_id", str, line)
    doc_ref = _require(obj, "doc_ref", str, line)
    start = _require(obj, "start", int, line)
    end = _require(obj, "end", int, line)
    text = _require(obj, "text", str, line)
    semantic_type = obj.get("semantic_type", OTHER)
    if semantic_type not in SEMANTIC_TYPES:
        raise CorpusValidationError("semantic_type", f"unknown type {semantic_type!r}", line)
    codes = frozenset(obj.get("codes") or ())
    return EntityMention(mention_id, doc_ref, start, end, text, semantic_type, codes)


def note_from_dict(obj: dict, line: int | None = None) -> Note:
    note_id = _require(obj, "note_id", str, line)
    title = _require(obj, "title", str, line)
    raw_ts = _require(obj, "timestamp", str, line)
    try:
        timestamp = datetime.strptime(raw_ts, "%Y-%m-%dT%H:%M:%S")
    except ValueError as exc:
        raise CorpusValidationError("timestamp", str(exc), line) from exc
    day_index = _require(obj, "day_index", int, line)
    total_days = _require(obj, "total_days", int, line)
    if day_index < 1:
        raise CorpusValidationError("day_index", "must be >= 1", line)
    if total_days < 1:
        raise CorpusValidationError("total_days", "must be >= 1", line)
    if day_index > total_days:
        raise CorpusValidationError("day_index", "exceeds total_days", line)
    sections = []
    for raw in _require(obj, "sections", list, line):
        header = _require(raw, "header", str, line)
        body = _require(raw, "text", str, line)
        if body.strip():  # ingestion filtering drops empty bodies
            sections.append(Section(header, body))
    return Note(note_id, title, timestamp, day_index, total_days, tuple(sections))


def admission_from_dict(obj: dict, line: int | None = None) -> AdmissionRecord:
    admission_id = _require(obj, "admission_id", str, line)
    if not admission_id:
        raise CorpusValidationError("admission_id", "must be non-empty", line)
    reference = _require(obj, "reference", str, line)
    notes = [note_from_dict(raw, line) for raw in _require(obj, "notes", list, line)]
    note_ids = [n.note_id for n in notes]
    if len(set(note_ids)) != len(note_ids):
        raise CorpusValidationError("note_id", "duplicate within admission", line)
    notes.sort(key=lambda n: n.timestamp)  # stable: timestamp ties keep file order
    record = AdmissionRecord(admission_id, tuple(notes), reference)
    mentions = []
    seen = set()
    for raw in obj.get("mentions") or ():
        mention = mention_from_dict(raw, line)
        if mention.mention_id in seen:
            raise CorpusValidationError("mention_id", f"duplicate {mention.mention_id!r}", line)
        seen.add(mention.mention_id)
        try:
            doc_text = record.document_text(mention.doc_ref)
        except KeyError:
            raise CorpusValidationError("doc_ref", f"unknown document {mention.doc_ref!r}", line)
        if not (0 <= mention.start < mention.end <= len(doc_text)):
            raise CorpusValidationError("start", f"span out of range for {mention.mention_id!r}", line)
        if doc_text[mention.start : mention.end] != mention.text:
            raise CorpusValidationError("text", f"span mismatch for {mention.mention_id!r}", line)
        mentions.append(mention)
    return replace(record, mentions=tuple(mentions))


def mention_to_dict(m: EntityMention) -> dict:
    return {
        "mention_id": m.mention_id,
        "doc_ref": m.doc_ref,
        "start": m.start,
        "end": m.end,
        "text": m.text,
        "semantic_type": m.semantic_type,
        "codes": sorted(m.codes),
    }


def admission_to_dict(record: AdmissionRecord) -> dict:
    return {
        "admission_id": record.admission_id,
        "reference": record.reference,
        "notes": [
            {
                "note_id": n.note_id,
                "title": n.title,
                "timestamp": n.timestamp.strftime("%Y-%m-%dT%H:%M:%S"),
                "day_index": n.day_index,
                "total_days": n.total_days,
                "sections": [{"header": s.header, "text": s.body} for s in n.sections],
            }
            for n in record.notes
        ],
        "mentions": [mention_to_dict(m) for m in record.mentions],
    }


def iter_corpus(path: str | Path) -> Iterator[AdmissionRecord]:
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(line_number, f"malformed JSON ({exc.msg})") from exc
            record = admission_from_dict(obj, line_number)
            if record.admission_id in seen_ids:
                raise CorpusValidationError(
                    "admission_id", f"duplicate {record.admission_id!r}", line_number
                )
            seen_ids.add(record.admission_id)
            yield record


def load_corpus(path: str | Path) -> list[AdmissionRecord]:
    return list(iter_corpus(path))


def save_corpus(records: Iterable[AdmissionRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(admission_to_dict(record), sort_keys=True) + "\n")
