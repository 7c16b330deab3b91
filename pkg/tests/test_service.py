import json
import threading
import urllib.error
import urllib.request

import pytest

from coursekit.minicorpus import build_minicorpus, summary_elements
from coursekit.service import (
    ANNOTATOR_HEADER,
    AnnotationApp,
    LabelStore,
    LabelValidationError,
    create_server,
    validate_label,
)


@pytest.fixture(scope="module")
def corpus():
    return build_minicorpus(5)


@pytest.fixture()
def app(corpus, tmp_path):
    elements = {r.admission_id: summary_elements(r) for r in corpus}
    return AnnotationApp(corpus, elements, LabelStore(tmp_path / "labels.jsonl"))


@pytest.fixture()
def server(app):
    httpd = create_server(app, port=0)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{httpd.server_address[1]}"
    httpd.shutdown()


def request(url, method="GET", payload=None, annotator="clin-1"):
    data = json.dumps(payload).encode() if payload is not None else None
    req = urllib.request.Request(url, data=data, method=method)
    req.add_header("Content-Type", "application/json")
    if annotator:
        req.add_header(ANNOTATOR_HEADER, annotator)
    try:
        with urllib.request.urlopen(req) as response:
            return response.status, json.loads(response.read())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read())


class TestValidateLabel:
    def test_no_error_with_severity_rejected(self):
        with pytest.raises(LabelValidationError, match="severity"):
            validate_label({"se_id": "x", "category": "NO_ERROR", "severity": "MINOR"}, "a")

    def test_incorrect_requires_severity(self):
        with pytest.raises(LabelValidationError):
            validate_label({"se_id": "x", "category": "INCORRECT", "severity": "NONE"}, "a")

    def test_incorrect_critical_accepted(self):
        label = validate_label(
            {"se_id": "x", "category": "INCORRECT", "severity": "CRITICAL"}, "a"
        )
        assert label.category == "INCORRECT"

    def test_not_in_notes_defaults_to_none_severity(self):
        label = validate_label({"se_id": "x", "category": "NOT_IN_NOTES"}, "a")
        assert label.severity == "NONE"

    def test_missing_annotator_rejected(self):
        with pytest.raises(LabelValidationError, match="X-Annotator"):
            validate_label({"se_id": "x", "category": "NO_ERROR"}, "")


class TestEndpoints:
    def test_list_admissions(self, server, corpus):
        status, payload = request(f"{server}/admissions")
        assert status == 200
        assert len(payload) == len(corpus)

    def test_unknown_admission_404(self, server):
        status, payload = request(f"{server}/admissions/ghost/notes")
        assert status == 404

    def test_notes_sorted_by_date(self, server, corpus):
        status, notes = request(f"{server}/admissions/{corpus[0].admission_id}/notes")
        assert status == 200
        stamps = [n["timestamp"] for n in notes]
        assert stamps == sorted(stamps)

    def test_summary_one_sentence_per_line_with_elements(self, server, corpus):
        record = corpus[0]
        status, summary = request(f"{server}/admissions/{record.admission_id}/summary")
        assert status == 200
        assert [s["index"] for s in summary["sentences"]] == list(
            range(len(summary["sentences"]))
        )
        spans = [e for s in summary["sentences"] for e in s["elements"]]
        assert spans
        for sentence in summary["sentences"]:
            for element in sentence["elements"]:
                assert sentence["text"][element["start"] : element["end"]] == element["text"]

    def test_search_offsets_slice_note(self, server, corpus):
        record = corpus[0]
        mention = record.source_mentions()[0]
        status, hits = request(
            f"{server}/admissions/{record.admission_id}/search?q={mention.text.split()[0]}"
        )
        assert status == 200 and hits
        for hit in hits:
            note = record.note(hit["note_id"])
            assert note.full_text[hit["start"] : hit["end"]] == hit["snippet"]

    def test_search_section_header_hit(self, server, corpus):
        record = corpus[0]
        status, hits = request(f"{server}/admissions/{record.admission_id}/search?q=hpi")
        assert status == 200
        assert any(hit["section"] == "hpi" for hit in hits)

    def test_search_absent_query_empty(self, server, corpus):
        status, hits = request(
            f"{server}/admissions/{corpus[0].admission_id}/search?q=zzzzmissing"
        )
        assert status == 200 and hits == []

    def test_search_empty_query_rejected(self, server, corpus):
        status, payload = request(f"{server}/admissions/{corpus[0].admission_id}/search?q=")
        assert status == 400

    def test_concept_mentions_date_ordered(self, server, app, corpus):
        record = corpus[0]
        index = app.indices[record.admission_id]
        multi = next(
            (g for g in index.groups if len(g.members) >= 2),
            index.groups[0],
        )
        status, mentions = request(
            f"{server}/admissions/{record.admission_id}/concepts/{multi.esg_id}/mentions"
        )
        assert status == 200
        assert len(mentions) == len(multi.members)
        note_order = {note.note_id: i for i, note in enumerate(record.notes)}
        orders = [note_order[m["note_id"]] for m in mentions]
        assert orders == sorted(orders)

    def test_unknown_concept_404(self, server, corpus):
        status, _ = request(
            f"{server}/admissions/{corpus[0].admission_id}/concepts/esg-9999/mentions"
        )
        assert status == 404


class TestLabelFlow:
    def se_id(self, app, corpus, k=0):
        return app.elements[corpus[0].admission_id][k]["se_id"]

    def test_invalid_combination_rejected(self, server, app, corpus):
        status, payload = request(
            f"{server}/admissions/{corpus[0].admission_id}/labels",
            method="POST",
            payload={"se_id": self.se_id(app, corpus), "category": "NO_ERROR", "severity": "MINOR"},
        )
        assert status == 400
        assert "severity" in payload["error"]

    def test_valid_label_accepted_and_listed(self, server, app, corpus):
        admission_id = corpus[0].admission_id
        status, event = request(
            f"{server}/admissions/{admission_id}/labels",
            method="POST",
            payload={"se_id": self.se_id(app, corpus), "category": "INCORRECT", "severity": "CRITICAL"},
        )
        assert status == 201
        status, labels = request(f"{server}/admissions/{admission_id}/labels")
        assert status == 200
        assert any(l["se_id"] == self.se_id(app, corpus) for l in labels)

    def test_latest_wins(self, server, app, corpus):
        admission_id = corpus[0].admission_id
        se_id = self.se_id(app, corpus)
        request(
            f"{server}/admissions/{admission_id}/labels",
            method="POST",
            payload={"se_id": se_id, "category": "INCORRECT", "severity": "MINOR"},
        )
        request(
            f"{server}/admissions/{admission_id}/labels",
            method="POST",
            payload={"se_id": se_id, "category": "NO_ERROR"},
        )
        _, labels = request(f"{server}/admissions/{admission_id}/labels")
        mine = [l for l in labels if l["se_id"] == se_id and l["annotator_id"] == "clin-1"]
        assert len(mine) == 1
        assert mine[0]["category"] == "NO_ERROR"

    def test_missing_annotator_header_rejected(self, server, app, corpus):
        status, _ = request(
            f"{server}/admissions/{corpus[0].admission_id}/labels",
            method="POST",
            payload={"se_id": self.se_id(app, corpus), "category": "NO_ERROR"},
            annotator=None,
        )
        assert status == 400

    def test_unknown_se_404(self, server, corpus):
        status, _ = request(
            f"{server}/admissions/{corpus[0].admission_id}/labels",
            method="POST",
            payload={"se_id": "ghost-se", "category": "NO_ERROR"},
        )
        assert status == 404


class TestHerrReport:
    def test_unlabeled_report_all_zero(self, server, corpus):
        status, report = request(f"{server}/reports/herr")
        assert status == 200
        for admission in report["admissions"].values():
            for value in admission["herr"]:
                assert value in (None, 0.0)
        assert report["any_mistake_rate"] == 0.0

    def test_hand_computed_vector(self, server, app, corpus):
        admission_id = corpus[0].admission_id
        elements = app.elements[admission_id]
        by_sentence = {}
        for element in elements:
            by_sentence.setdefault(element["sentence_index"], []).append(element)
        target_sentence = max(by_sentence, key=lambda k: len(by_sentence[k]))
        chosen = by_sentence[target_sentence]
        request(
            f"{server}/admissions/{admission_id}/labels",
            method="POST",
            payload={"se_id": chosen[0]["se_id"], "category": "NOT_IN_NOTES"},
        )
        _, report = request(f"{server}/reports/herr")
        vector = report["admissions"][admission_id]["herr"]
        assert vector[target_sentence] == pytest.approx(1 / len(chosen))

    def test_severity_counts(self, server, app, corpus):
        admission_id = corpus[0].admission_id
        se_id = app.elements[admission_id][0]["se_id"]
        request(
            f"{server}/admissions/{admission_id}/labels",
            method="POST",
            payload={"se_id": se_id, "category": "MISSING", "severity": "CRITICAL"},
        )
        _, report = request(f"{server}/reports/herr")
        assert report["severity_counts"]["CRITICAL"] >= 1


class TestPersistence:
    def test_restart_yields_identical_resolved_view(self, corpus, tmp_path):
        elements = {r.admission_id: summary_elements(r) for r in corpus}
        log = tmp_path / "labels.jsonl"
        app_one = AnnotationApp(corpus, elements, LabelStore(log))
        se_id = elements[corpus[0].admission_id][0]["se_id"]
        app_one.post_label(
            corpus[0].admission_id,
            {"se_id": se_id, "category": "INCORRECT", "severity": "MINOR"},
            "clin-9",
        )
        app_one.post_label(
            corpus[0].admission_id, {"se_id": se_id, "category": "NO_ERROR"}, "clin-9"
        )
        app_two = AnnotationApp(corpus, elements, LabelStore(log))
        assert app_two.store.resolved() == app_one.store.resolved()
        assert app_two.labels(corpus[0].admission_id) == app_one.labels(corpus[0].admission_id)
