"""HTTP service backing the expert annotation workflow: admission browsing,
note navigation, free-text and concept search, summary-element label storage
with the error taxonomy, and the HErr report.

JSON over HTTP on the stdlib server; labels persist to an append-only JSONL
event log replayed at startup. Label writes are serialized through a lock and
resolve latest-wins per (se_id, annotator_id).
"""
from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import asdict, dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Mapping, Sequence
from urllib.parse import parse_qs, urlparse

from .calibration import ERROR_CATEGORIES, INCORRECT, LABEL_CATEGORIES, MISSING, herr
from .corpus import AdmissionRecord, load_corpus, note_sentences, split_sentences
from .corpus import REFERENCE
from .entities import EsgIndex, build_esg_index, classify_synonyms_embedding_only
from .similarity import SimilarityBackend, VectorStore, exact_backend, vector_backend

SEVERITY_NONE = "NONE"
SEVERITY_MINOR = "MINOR"
SEVERITY_CRITICAL = "CRITICAL"
SEVERITIES = (SEVERITY_NONE, SEVERITY_MINOR, SEVERITY_CRITICAL)
SEVERITY_REQUIRED = frozenset({INCORRECT, MISSING})

ANNOTATOR_HEADER = "X-Annotator"

ENV_CORPUS = "COURSEKIT_CORPUS"
ENV_PORT = "COURSEKIT_PORT"
ENV_SE_FILE = "COURSEKIT_SUMMARY_ELEMENTS"
ENV_LABEL_LOG = "COURSEKIT_LABEL_LOG"
ENV_VECTORS = "COURSEKIT_VECTORS"

SNIPPET_PADDING = 30


class LabelValidationError(ValueError):
    pass


@dataclass(frozen=True)
class SeLabel:
    se_id: str
    category: str
    severity: str
    annotator_id: str
    timestamp: str


def validate_label(payload: Mapping, annotator_id: str) -> SeLabel:
    """Enforce the labeling invariant: severity != NONE iff the category is
    INCORRECT or MISSING."""
    se_id = payload.get("se_id")
    if not se_id or not isinstance(se_id, str):
        raise LabelValidationError("se_id is required")
    category = payload.get("category")
    if category not in LABEL_CATEGORIES:
        raise LabelValidationError(f"category must be one of {', '.join(LABEL_CATEGORIES)}")
    severity = payload.get("severity", SEVERITY_NONE)
    if severity not in SEVERITIES:
        raise LabelValidationError(f"severity must be one of {', '.join(SEVERITIES)}")
    if category in SEVERITY_REQUIRED and severity == SEVERITY_NONE:
        raise LabelValidationError(
            f"severity is required for {category} (rule: severity != NONE iff "
            "category is INCORRECT or MISSING)"
        )
    if category not in SEVERITY_REQUIRED and severity != SEVERITY_NONE:
        raise LabelValidationError(
            f"severity must be NONE for {category} (rule: severity != NONE iff "
            "category is INCORRECT or MISSING)"
        )
    if not annotator_id:
        raise LabelValidationError(f"missing {ANNOTATOR_HEADER} header")
    return SeLabel(
        se_id=se_id,
        category=category,
        severity=severity,
        annotator_id=annotator_id,
        timestamp=payload.get("timestamp") or "",
    )


class LabelStore:
    """Append-only event log with latest-wins resolution."""

    def __init__(self, log_path: str | Path | None = None):
        self.log_path = Path(log_path) if log_path else None
        self._lock = threading.Lock()
        self._events: list[dict] = []
        if self.log_path and self.log_path.exists():
            with open(self.log_path, encoding="utf-8") as handle:
                for line in handle:
                    if line.strip():
                        self._events.append(json.loads(line))

    def append(self, label: SeLabel) -> dict:
        event = {**asdict(label), "event_time": time.strftime("%Y-%m-%dT%H:%M:%S")}
        with self._lock:
            self._events.append(event)
            if self.log_path:
                with open(self.log_path, "a", encoding="utf-8") as handle:
                    handle.write(json.dumps(event, sort_keys=True) + "\n")
        return event

    def resolved(self) -> dict[tuple[str, str], dict]:
        """Latest event per (se_id, annotator_id)."""
        with self._lock:
            out: dict[tuple[str, str], dict] = {}
            for event in self._events:
                out[(event["se_id"], event["annotator_id"])] = event
            return out

    def latest_by_se(self) -> dict[str, dict]:
        """Globally latest event per se_id (for the HErr report)."""
        with self._lock:
            out: dict[str, dict] = {}
            for event in self._events:
                out[event["se_id"]] = event
            return out


def load_summary_elements(path: str | Path) -> dict[str, list[dict]]:
    inventories: dict[str, list[dict]] = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            obj = json.loads(line)
            inventories[obj["admission_id"]] = list(obj.get("elements") or ())
    return inventories


class AnnotationApp:
    """Request-independent service state and handlers."""

    def __init__(
        self,
        corpus: Sequence[AdmissionRecord],
        summary_elements: Mapping[str, Sequence[dict]] | None = None,
        store: LabelStore | None = None,
        backend: SimilarityBackend | None = None,
    ):
        self.records = {r.admission_id: r for r in corpus}
        self.elements = {k: list(v) for k, v in (summary_elements or {}).items()}
        self.store = store or LabelStore()
        backend = backend or exact_backend()
        predicate = lambda a, b: classify_synonyms_embedding_only(a, b, backend)
        self.indices: dict[str, EsgIndex] = {
            admission_id: build_esg_index(record.source_mentions(), predicate)
            for admission_id, record in self.records.items()
        }

    # --- read endpoints -------------------------------------------------

    def list_admissions(self) -> list[dict]:
        return [
            {
                "admission_id": record.admission_id,
                "notes": len(record.notes),
                "summary_sentences": len(split_sentences(record.reference)),
                "elements": len(self.elements.get(record.admission_id, ())),
            }
            for record in self.records.values()
        ]

    def notes(self, admission_id: str) -> list[dict]:
        record = self.records[admission_id]
        return [
            {
                "note_id": note.note_id,
                "title": note.title,
                "timestamp": note.timestamp.strftime("%Y-%m-%dT%H:%M:%S"),
                "day_index": note.day_index,
                "total_days": note.total_days,
                "sections": [{"header": s.header, "text": s.body} for s in note.sections],
            }
            for note in sorted(record.notes, key=lambda n: n.timestamp)
        ]

    def summary(self, admission_id: str) -> dict:
        record = self.records[admission_id]
        sentences = split_sentences(record.reference, doc_ref=REFERENCE)
        elements = self.elements.get(admission_id, [])
        by_sentence: dict[int, list[dict]] = {}
        for element in elements:
            by_sentence.setdefault(element["sentence_index"], []).append(element)
        return {
            "admission_id": admission_id,
            "sentences": [
                {
                    "index": s.index,
                    "text": s.text,
                    "elements": sorted(
                        by_sentence.get(s.index, []), key=lambda e: e["start"]
                    ),
                }
                for s in sentences
            ],
        }

    def search(self, admission_id: str, query: str) -> list[dict]:
        if not query:
            raise LabelValidationError("query must be non-empty")
        record = self.records[admission_id]
        needle = query.lower()
        hits = []
        for note in sorted(record.notes, key=lambda n: n.timestamp):
            text = note.full_text
            haystack = text.lower()
            at = haystack.find(needle)
            while at != -1:
                start = max(0, at - SNIPPET_PADDING)
                end = min(len(text), at + len(needle) + SNIPPET_PADDING)
                section = note.section_at(at)
                hits.append(
                    {
                        "note_id": note.note_id,
                        "section": section.header if section else "",
                        "start": start,
                        "end": end,
                        "snippet": text[start:end],
                        "match_start": at,
                        "match_end": at + len(needle),
                    }
                )
                at = haystack.find(needle, at + 1)
        return hits

    def concept_mentions(self, admission_id: str, esg_id: str) -> list[dict]:
        record = self.records[admission_id]
        index = self.indices[admission_id]
        group = index.group(esg_id)  # KeyError -> 404
        note_order = {note.note_id: i for i, note in enumerate(record.notes)}
        mentions = [index.mentions[mid] for mid in sorted(group.members)]
        mentions.sort(key=lambda m: (note_order.get(m.doc_ref, len(note_order)), m.start))
        return [
            {
                "mention_id": m.mention_id,
                "note_id": m.doc_ref,
                "start": m.start,
                "end": m.end,
                "text": m.text,
                "semantic_type": m.semantic_type,
            }
            for m in mentions
        ]

    def concepts(self, admission_id: str) -> list[dict]:
        index = self.indices[admission_id]
        return [
            {
                "esg_id": group.esg_id,
                "size": len(group.members),
                "texts": sorted({index.mentions[mid].text for mid in group.members}),
            }
            for group in index.groups
        ]

    def labels(self, admission_id: str) -> list[dict]:
        se_ids = {e["se_id"] for e in self.elements.get(admission_id, ())}
        return sorted(
            (event for (se, _), event in self.store.resolved().items() if se in se_ids),
            key=lambda e: (e["se_id"], e["annotator_id"]),
        )

    def post_label(self, admission_id: str, payload: Mapping, annotator_id: str) -> dict:
        label = validate_label(payload, annotator_id)
        se_ids = {e["se_id"] for e in self.elements.get(admission_id, ())}
        if label.se_id not in se_ids:
            raise KeyError(label.se_id)
        return self.store.append(label)

    def herr_report(self) -> dict:
        latest = self.store.latest_by_se()
        admissions = {}
        category_counts = {c: 0 for c in LABEL_CATEGORIES}
        severity_counts = {SEVERITY_MINOR: 0, SEVERITY_CRITICAL: 0}
        total_elements = 0
        for admission_id, record in self.records.items():
            elements = self.elements.get(admission_id, [])
            n_sentences = len(split_sentences(record.reference))
            per_sentence: list[list[str]] = [[] for _ in range(n_sentences)]
            for element in elements:
                event = latest.get(element["se_id"])
                category = event["category"] if event else "NO_ERROR"
                per_sentence[element["sentence_index"]].append(category)
                category_counts[category] += 1
                if event and event["severity"] in severity_counts:
                    severity_counts[event["severity"]] += 1
                total_elements += 1
            admissions[admission_id] = {"herr": [herr(labels) for labels in per_sentence]}
        category_rates = {
            c: (category_counts[c] / total_elements if total_elements else 0.0)
            for c in LABEL_CATEGORIES
        }
        any_mistake = sum(category_counts[c] for c in ERROR_CATEGORIES)
        return {
            "admissions": admissions,
            "category_rates": category_rates,
            "any_mistake_rate": any_mistake / total_elements if total_elements else 0.0,
            "severity_counts": severity_counts,
            "total_elements": total_elements,
        }


class _Handler(BaseHTTPRequestHandler):
    app: AnnotationApp  # set by create_server

    def log_message(self, *args):  # quiet by default
        pass

    def _send(self, status: int, payload) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", f"Content-Type, {ANNOTATOR_HEADER}")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, message: str) -> None:
        self._send(status, {"error": message})

    def do_OPTIONS(self):
        self._send(204, {})

    def do_GET(self):
        parsed = urlparse(self.path)
        parts = [p for p in parsed.path.split("/") if p]
        query = parse_qs(parsed.query)
        try:
            if parts == ["admissions"]:
                return self._send(200, self.app.list_admissions())
            if parts == ["reports", "herr"]:
                return self._send(200, self.app.herr_report())
            if len(parts) >= 2 and parts[0] == "admissions":
                admission_id = parts[1]
                if admission_id not in self.app.records:
                    return self._error(404, f"unknown admission {admission_id}")
                rest = parts[2:]
                if rest == ["notes"]:
                    return self._send(200, self.app.notes(admission_id))
                if rest == ["summary"]:
                    return self._send(200, self.app.summary(admission_id))
                if rest == ["search"]:
                    q = (query.get("q") or [""])[0]
                    return self._send(200, self.app.search(admission_id, q))
                if rest == ["concepts"]:
                    return self._send(200, self.app.concepts(admission_id))
                if len(rest) == 3 and rest[0] == "concepts" and rest[2] == "mentions":
                    return self._send(200, self.app.concept_mentions(admission_id, rest[1]))
                if rest == ["labels"]:
                    return self._send(200, self.app.labels(admission_id))
            return self._error(404, f"no route for {parsed.path}")
        except LabelValidationError as exc:
            return self._error(400, str(exc))
        except KeyError as exc:
            return self._error(404, f"not found: {exc}")

    def do_POST(self):
        parsed = urlparse(self.path)
        parts = [p for p in parsed.path.split("/") if p]
        try:
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b"{}"
            try:
                payload = json.loads(raw)
            except json.JSONDecodeError:
                return self._error(400, "request body is not valid JSON")
            if len(parts) == 3 and parts[0] == "admissions" and parts[2] == "labels":
                admission_id = parts[1]
                if admission_id not in self.app.records:
                    return self._error(404, f"unknown admission {admission_id}")
                annotator = self.headers.get(ANNOTATOR_HEADER, "")
                event = self.app.post_label(admission_id, payload, annotator)
                return self._send(201, event)
            return self._error(404, f"no route for {parsed.path}")
        except LabelValidationError as exc:
            return self._error(400, str(exc))
        except KeyError as exc:
            return self._error(404, f"not found: {exc}")


def create_server(app: AnnotationApp, port: int = 0, host: str = "127.0.0.1") -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"app": app})
    return ThreadingHTTPServer((host, port), handler)


def app_from_paths(
    corpus_path: str | Path,
    se_path: str | Path | None = None,
    label_log: str | Path | None = None,
    vectors_path: str | Path | None = None,
) -> AnnotationApp:
    corpus = load_corpus(corpus_path)
    elements = load_summary_elements(se_path) if se_path else {}
    backend = vector_backend(VectorStore.load(vectors_path)) if vectors_path else exact_backend()
    return AnnotationApp(corpus, elements, LabelStore(label_log), backend)


def serve_forever(
    corpus_path: str | Path | None = None,
    port: int | None = None,
    se_path: str | Path | None = None,
    label_log: str | Path | None = None,
    vectors_path: str | Path | None = None,
) -> None:
    """Entry point honoring the COURSEKIT_* environment variables."""
    corpus_path = corpus_path or os.environ.get(ENV_CORPUS)
    if not corpus_path:
        raise ValueError(f"corpus path required (flag or {ENV_CORPUS})")
    port = port if port is not None else int(os.environ.get(ENV_PORT, "8714"))
    se_path = se_path or os.environ.get(ENV_SE_FILE)
    label_log = label_log or os.environ.get(ENV_LABEL_LOG)
    vectors_path = vectors_path or os.environ.get(ENV_VECTORS)
    app = app_from_paths(corpus_path, se_path, label_log, vectors_path)
    server = create_server(app, port)
    print(f"annotation service on http://127.0.0.1:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
