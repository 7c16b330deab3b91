import json
from pathlib import Path

import pytest

from coursekit.cli import main
from coursekit.minicorpus import write_minicorpus


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    directory = tmp_path_factory.mktemp("minicorpus")
    write_minicorpus(directory, n=4)
    return directory


def read_jsonl(path):
    with open(path, encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


class TestExitCodes:
    def test_unknown_flag_exits_one(self, capsys):
        assert main(["analyze", "--nope"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_missing_corpus_file_exits_two(self, tmp_path, capsys):
        code = main(
            ["analyze", "--corpus", str(tmp_path / "ghost.jsonl"), "--out", str(tmp_path / "o.json")]
        )
        assert code == 2
        assert "i/o error" in capsys.readouterr().err

    def test_malformed_corpus_exits_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{not json\n")
        code = main(["analyze", "--corpus", str(bad), "--out", str(tmp_path / "o.json")])
        assert code == 1
        assert "line 1" in capsys.readouterr().err


class TestAnalyze:
    def test_report_and_manifest(self, corpus_dir, tmp_path):
        out = tmp_path / "analyze.json"
        code = main(["analyze", "--corpus", str(corpus_dir / "corpus.jsonl"), "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert len(report["per_admission"]) == 4
        assert 0.0 <= report["corpus_mean"]["coverage"] <= 1.0
        manifest = json.loads((tmp_path / "analyze.json.manifest.json").read_text())
        assert str(out) in manifest["outputs"]

    def test_generated_rouge(self, corpus_dir, tmp_path):
        records = read_jsonl(corpus_dir / "corpus.jsonl")
        generated = tmp_path / "gen.jsonl"
        with open(generated, "w") as handle:
            for record in records:
                handle.write(
                    json.dumps(
                        {"admission_id": record["admission_id"], "output_text": record["reference"]}
                    )
                    + "\n"
                )
        out = tmp_path / "analyze.json"
        code = main(
            [
                "analyze",
                "--corpus",
                str(corpus_dir / "corpus.jsonl"),
                "--generated",
                str(generated),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        report = json.loads(out.read_text())
        assert all(
            row["generated_rouge"]["rouge1"] == pytest.approx(1.0)
            for row in report["per_admission"]
        )


class TestEsgAndAlign:
    def test_esg_then_entity_chain_align(self, corpus_dir, tmp_path):
        esgs = tmp_path / "esgs.jsonl"
        code = main(
            [
                "esg",
                "--corpus",
                str(corpus_dir / "corpus.jsonl"),
                "--backend",
                f"vectors:{corpus_dir / 'vectors.txt'}",
                "--out",
                str(esgs),
            ]
        )
        assert code == 0
        rows = read_jsonl(esgs)
        assert all(0.0 <= row["salient_fraction"] <= 1.0 for row in rows)
        out = tmp_path / "align.jsonl"
        code = main(
            [
                "align",
                "--method",
                "entity-chain",
                "--corpus",
                str(corpus_dir / "corpus.jsonl"),
                "--esg",
                str(esgs),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        assert read_jsonl(out)

    def test_align_jobs_flag_order_stable(self, corpus_dir, tmp_path):
        args = [
            "align",
            "--method",
            "rouge-topk",
            "--corpus",
            str(corpus_dir / "corpus.jsonl"),
        ]
        one = tmp_path / "one.jsonl"
        two = tmp_path / "two.jsonl"
        assert main(args + ["--out", str(one)]) == 0
        assert main(args + ["--jobs", "4", "--out", str(two)]) == 0
        assert one.read_text() == two.read_text()


class TestOracle:
    def test_gain_report(self, corpus_dir, tmp_path):
        out = tmp_path / "gain.jsonl"
        code = main(
            ["oracle", "--strategy", "gain", "--corpus", str(corpus_dir / "corpus.jsonl"), "--out", str(out)]
        )
        assert code == 0
        report = json.loads((tmp_path / "gain.report.json").read_text())
        assert report["mean"]["rouge1_f1"] > 0.0

    def test_random_seeded_reproducible(self, corpus_dir, tmp_path):
        args = [
            "oracle",
            "--strategy",
            "random",
            "--corpus",
            str(corpus_dir / "corpus.jsonl"),
            "--seed",
            "7",
        ]
        one = tmp_path / "one.jsonl"
        two = tmp_path / "two.jsonl"
        assert main(args + ["--out", str(one)]) == 0
        assert main(args + ["--out", str(two)]) == 0
        assert one.read_text() == two.read_text()


class TestCorruptAndRevision:
    def test_swap_output_schema(self, corpus_dir, tmp_path):
        out = tmp_path / "corrupt.jsonl"
        code = main(
            [
                "corrupt",
                "--mode",
                "swap-intrinsic",
                "--s",
                "1.0",
                "--corpus",
                str(corpus_dir / "corpus.jsonl"),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        rows = read_jsonl(out)
        swapped = [row for row in rows if row["swaps"]]
        assert swapped
        for row in swapped:
            for swap in row["swaps"]:
                assert row["text"][swap["start"] : swap["end"]] == swap["replacement"]

    def test_revision_tuples_emits_polarities(self, corpus_dir, tmp_path):
        out = tmp_path / "tuples.jsonl"
        code = main(
            [
                "revision-tuples",
                "--corpus",
                str(corpus_dir / "corpus.jsonl"),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        rows = read_jsonl(out)
        assert {row["polarity"] for row in rows} == {"positive", "negative"}
        assert all(row["context"] for row in rows)


class TestSpeerCommands:
    def test_mark_round_trip(self, corpus_dir, tmp_path):
        out = tmp_path / "marked.jsonl"
        code = main(
            [
                "speer",
                "mark",
                "--corpus",
                str(corpus_dir / "corpus.jsonl"),
                "--backend",
                f"vectors:{corpus_dir / 'vectors.txt'}",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        from coursekit.speer import unmark

        records = {r["admission_id"]: r for r in read_jsonl(corpus_dir / "corpus.jsonl")}
        for row in read_jsonl(out):
            record = records[row["admission_id"]]
            originals = {}
            for note in record["notes"]:
                text = "\n".join(f"{s['header']}\n{s['text']}" for s in note["sections"])
                originals[note["note_id"]] = text
            for marked in row["notes"]:
                assert unmark(marked["marked_text"]) == originals[marked["note_id"]]

    def test_plan_then_score(self, corpus_dir, tmp_path):
        plans = tmp_path / "plans.jsonl"
        backend = f"vectors:{corpus_dir / 'vectors.txt'}"
        assert (
            main(
                [
                    "speer",
                    "plan",
                    "--corpus",
                    str(corpus_dir / "corpus.jsonl"),
                    "--backend",
                    backend,
                    "--out",
                    str(plans),
                ]
            )
            == 0
        )
        generations = tmp_path / "gen.jsonl"
        with open(generations, "w") as handle:
            for row in read_jsonl(plans):
                handle.write(
                    json.dumps(
                        {"admission_id": row["admission_id"], "output_text": row["speer_text"]}
                    )
                    + "\n"
                )
        scores = tmp_path / "scores.jsonl"
        assert (
            main(
                [
                    "speer",
                    "score",
                    "--corpus",
                    str(corpus_dir / "corpus.jsonl"),
                    "--backend",
                    backend,
                    "--in",
                    str(generations),
                    "--out",
                    str(scores),
                ]
            )
            == 0
        )
        rows = read_jsonl(scores)
        assert rows and all(0.0 <= row["adherence"]["f1"] <= 1.0 for row in rows)


class TestAnalyticsCommand:
    def test_emits_stats_and_figures(self, corpus_dir, tmp_path):
        out = tmp_path / "analytics.json"
        figures = tmp_path / "figs"
        code = main(
            [
                "analytics",
                "--corpus",
                str(corpus_dir / "corpus.jsonl"),
                "--backend",
                f"vectors:{corpus_dir / 'vectors.txt'}",
                "--out",
                str(out),
                "--figures",
                str(figures),
            ]
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["mean_ordering_curves"]["GREEDY_ORACLE"][-1][1] == pytest.approx(1.0)
        rendered = list(figures.glob("*.png"))
        assert len(rendered) >= 4


class TestSelectCommand:
    def test_select_from_demo_pools(self, corpus_dir, tmp_path):
        from coursekit.corpus import load_corpus
        from coursekit.minicorpus import build_demo_pools, pool_to_dict

        corpus = load_corpus(corpus_dir / "corpus.jsonl")
        pools = tmp_path / "pools.jsonl"
        with open(pools, "w") as handle:
            for record in corpus:
                fp, _ = build_demo_pools(record)
                handle.write(json.dumps(pool_to_dict(fp)) + "\n")
        out = tmp_path / "selection.jsonl"
        stats = tmp_path / "stats.json"
        code = main(
            [
                "select",
                "--strategy",
                "hard",
                "--task",
                "faithfulness",
                "--pools",
                str(pools),
                "--out",
                str(out),
                "--stats",
                str(stats),
            ]
        )
        assert code == 0
        rows = read_jsonl(out)
        assert all(len(r["positives"]) == 2 and len(r["negatives"]) == 2 for r in rows)
        assert json.loads(stats.read_text())["per_example"]


class TestSpeerParse:
    def test_parse_action(self, corpus_dir, tmp_path):
        generations = tmp_path / "gen.jsonl"
        records = read_jsonl(corpus_dir / "corpus.jsonl")
        with open(generations, "w") as handle:
            handle.write(
                json.dumps(
                    {
                        "admission_id": records[0]["admission_id"],
                        "output_text": "### Entities 1: {{chf}}\n### Sentence 1: Pt has chf.",
                    }
                )
                + "\n"
            )
        out = tmp_path / "parsed.jsonl"
        code = main(
            [
                "speer",
                "parse",
                "--corpus",
                str(corpus_dir / "corpus.jsonl"),
                "--in",
                str(generations),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        row = read_jsonl(out)[0]
        assert row["plans"] == [["chf"]]
        assert row["summary"] == "Pt has chf."
