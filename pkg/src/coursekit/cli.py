"""coursekit command line: analyze, align, esg, oracle, corrupt,
revision-tuples, select, speer, analytics, serve, and an end-to-end demo on
the bundled synthetic mini-corpus.

Exit codes: 0 success, 1 validation/usage error, 2 I/O error. Every output
is JSON/JSONL and is accompanied by a run manifest recording the resolved
config, input hashes, and output hashes; identical inputs, config, and seed
reproduce identical output hashes.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import __version__
from .alignment import (
    BS_GAIN,
    BS_TOPK,
    ENTITY_CHAIN,
    FULL,
    ROUGE_GAIN,
    ROUGE_TOPK,
    TOP_SECTION,
    AlignmentMethod,
    align,
    augment_for_entities,
    greedy_weighted_align,
)
from .analytics import (
    error_rate_by_position,
    fragment_length_by_rank,
    frequency_salience_curve,
    lead_bias_histogram,
    ordering_curves,
)
from .calibration import (
    FAITHFULNESS,
    RELEVANCE,
    MetricNormalizer,
    aggregate,
    select,
    set_statistics,
)
from .corpus import (
    REFERENCE,
    AdmissionRecord,
    CorpusError,
    EntityMention,
    load_corpus,
    note_sentences,
    reference_sentences,
    split_sentences,
    tokenize,
)
from .corruption import (
    EXTRINSIC,
    INTRINSIC,
    CorruptionSpec,
    build_revision_tuples,
    delete_spans,
    revision_codes,
    swap_entities,
)
from .entities import (
    EsgIndex,
    EntitySynonymGroup,
    best_source_esg,
    build_esg_index,
    entity_grid,
    build_tfidf_index,
    classify_synonyms,
    classify_synonyms_embedding_only,
    entity_novelty,
    faithful_adjusted_recall,
    hallucination_rate,
    label_salience,
    locate_mentions,
    mentions_in_span,
    align_mentions_to_source_esgs,
    sgr,
    support_verdict,
    transition_matrix,
    TRANSITION_TYPES,
)
from .lexical import compression_ratio, extractive_fragments, r12, rouge_n
from .minicorpus import build_demo_pools, derive_seed, pool_from_dict, pool_to_dict, write_minicorpus
from .oracles import (
    Bm25Index,
    lexrank,
    oracle_gain,
    oracle_retrieval,
    oracle_sa_plus_retrieval,
    oracle_sent_align,
    oracle_top_k,
    random_baseline,
    score_summary,
)
from .similarity import SimilarityBackend, VectorStore, exact_backend, vector_backend
from .speer import (
    adherence,
    build_guidance_prompt,
    mark_text,
    oracle_plan,
    parse_speer,
    serialize_speer,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2

ALIGN_METHODS = {
    ROUGE_GAIN: AlignmentMethod(ROUGE_GAIN),
    BS_GAIN: AlignmentMethod(BS_GAIN),
    ROUGE_TOPK: AlignmentMethod(ROUGE_TOPK, k=5),
    BS_TOPK: AlignmentMethod(BS_TOPK, k=5),
    TOP_SECTION: AlignmentMethod(TOP_SECTION),
    ENTITY_CHAIN: AlignmentMethod(ENTITY_CHAIN),
    FULL: AlignmentMethod(FULL),
}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_VALIDATION):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message, EXIT_VALIDATION)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_json(path: Path, payload) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, sort_keys=True, indent=2)
        handle.write("\n")
    return path


def _write_jsonl(path: Path, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, sort_keys=True) + "\n")
    return path


def write_manifest(
    command: str,
    config: dict,
    inputs: list[Path],
    outputs: list[Path],
    started: float,
    manifest_path: Path | None = None,
) -> Path:
    outputs = [Path(p) for p in outputs]
    manifest_path = manifest_path or outputs[0].with_suffix(outputs[0].suffix + ".manifest.json")
    config = {
        k: v for k, v in config.items() if isinstance(v, (str, int, float, bool, type(None)))
    }
    manifest = {
        "command": command,
        "config": config,
        "tool_version": __version__,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "wall_time_seconds": round(time.monotonic() - started, 3),
    }
    return _write_json(manifest_path, manifest)


def _load_backend(spec: str) -> SimilarityBackend:
    if spec == "exact":
        return exact_backend()
    if spec.startswith("vectors:"):
        return vector_backend(VectorStore.load(spec.split(":", 1)[1]))
    raise CliError(f"backend must be 'exact' or 'vectors:<path>', got {spec!r}")


def _predicate_for(backend: SimilarityBackend):
    return lambda a, b: classify_synonyms_embedding_only(a, b, backend)


def _corpus(path: str) -> list[AdmissionRecord]:
    return load_corpus(path)


def _map_jobs(jobs: int, fn, items):
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _build_indices(corpus, predicate) -> dict[str, EsgIndex]:
    out = {}
    for record in corpus:
        index = build_esg_index(record.source_mentions(), predicate)
        label_salience(index, record.reference_mentions(), predicate)
        out[record.admission_id] = index
    return out


def load_esg_file(path: str | Path, corpus) -> dict[str, EsgIndex]:
    """Rebuild EsgIndex objects from an `coursekit esg` output file."""
    by_admission = {r.admission_id: r for r in corpus}
    out = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            obj = json.loads(line)
            record = by_admission[obj["admission_id"]]
            mentions = {m.mention_id: m for m in record.mentions}
            groups = []
            esg_of = {}
            for raw in obj["groups"]:
                group = EntitySynonymGroup(
                    raw["esg_id"], frozenset(raw["members"]), raw.get("salient", False)
                )
                groups.append(group)
                for mid in group.members:
                    esg_of[mid] = group.esg_id
            out[record.admission_id] = EsgIndex(
                {mid: mentions[mid] for mid in esg_of}, tuple(groups), esg_of
            )
    return out


# --- subcommands ---------------------------------------------------------


def cmd_analyze(args) -> int:
    started = time.monotonic()
    corpus = _corpus(args.corpus)
    generated = {}
    inputs = [Path(args.corpus)]
    if args.generated:
        inputs.append(Path(args.generated))
        with open(args.generated, encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    obj = json.loads(line)
                    generated[obj["admission_id"]] = obj["output_text"]

    def one(record: AdmissionRecord) -> dict:
        source_tokens = [t for note in record.notes for s in note_sentences(note) for t in s.tokens]
        summary_tokens = tokenize(record.reference)
        stats = extractive_fragments(summary_tokens, source_tokens)
        row = {
            "admission_id": record.admission_id,
            "coverage": stats.coverage,
            "density": stats.density,
            "compression": compression_ratio(len(source_tokens), len(summary_tokens)),
            "source_tokens": len(source_tokens),
            "summary_tokens": len(summary_tokens),
        }
        if record.admission_id in generated:
            cand = tokenize(generated[record.admission_id])
            row["generated_rouge"] = {
                f"rouge{n}": rouge_n(cand, summary_tokens, n).f1 for n in (1, 2)
            }
        return row

    rows = _map_jobs(args.jobs, one, corpus)
    rows.sort(key=lambda r: r["admission_id"])
    means = {
        key: sum(r[key] for r in rows) / len(rows) if rows else 0.0
        for key in ("coverage", "density", "compression")
    }
    out = Path(args.out)
    _write_json(out, {"per_admission": rows, "corpus_mean": means, "config": {"tokenizer": "lowercase-punct-split"}})
    write_manifest("analyze", vars(args), inputs, [out], started)
    print(f"analyze: {len(rows)} admissions -> {out}")
    return EXIT_OK


def cmd_esg(args) -> int:
    started = time.monotonic()
    corpus = _corpus(args.corpus)
    backend = _load_backend(args.backend)
    predicate = _predicate_for(backend)
    indices = _build_indices(corpus, predicate)
    rows = []
    for record in corpus:
        index = indices[record.admission_id]
        groups = [
            {
                "esg_id": g.esg_id,
                "members": sorted(g.members),
                "salient": g.source_salient,
            }
            for g in index.groups
        ]
        salient = sum(1 for g in index.groups if g.source_salient)
        rows.append(
            {
                "admission_id": record.admission_id,
                "groups": groups,
                "salient_fraction": salient / len(index.groups) if index.groups else 0.0,
            }
        )
    out = Path(args.out)
    _write_jsonl(out, rows)
    inputs = [Path(args.corpus)]
    if args.backend.startswith("vectors:"):
        inputs.append(Path(args.backend.split(":", 1)[1]))
    write_manifest("esg", vars(args), inputs, [out], started)
    print(f"esg: {len(rows)} admissions -> {out}")
    return EXIT_OK


def cmd_align(args) -> int:
    started = time.monotonic()
    corpus = _corpus(args.corpus)
    backend = _load_backend(args.backend)
    if args.method not in ALIGN_METHODS:
        raise CliError(f"unknown alignment method {args.method!r}")
    method = ALIGN_METHODS[args.method]
    if args.k is not None:
        method = AlignmentMethod(method.kind, k=args.k, token_budget=method.token_budget)
    if args.budget is not None:
        method = AlignmentMethod(method.kind, k=method.k, token_budget=args.budget)
    predicate = _predicate_for(backend)
    esg_indices = None
    if method.kind == ENTITY_CHAIN or args.augment_entities:
        if args.esg:
            esg_indices = load_esg_file(args.esg, corpus)
        else:
            esg_indices = {
                r.admission_id: build_esg_index(r.mentions, predicate) for r in corpus
            }

    def one(record: AdmissionRecord) -> list[dict]:
        rows = []
        esg_index = esg_indices.get(record.admission_id) if esg_indices else None
        for sentence in reference_sentences(record):
            if not sentence.tokens:
                continue
            result = align(method, sentence, record, backend, esg_index=esg_index)
            if args.augment_entities and method.kind == BS_GAIN and esg_index is not None:
                ref_mentions = mentions_in_span(
                    record.reference_mentions(), REFERENCE, sentence.start, sentence.end
                )
                result = augment_for_entities(
                    result,
                    ref_mentions,
                    record.source_mentions(),
                    locate_mentions(record),
                    esg_index,
                    backend,
                )
            by_location = {
                s.location: s for note in record.notes for s in note_sentences(note)
            }
            aligned_tokens = [
                t for loc in result.aligned for t in by_location[loc].tokens
            ]
            rows.append(
                {
                    "admission_id": record.admission_id,
                    "sentence_index": sentence.index,
                    "method": result.method,
                    "score_r12": r12(aligned_tokens, list(sentence.tokens)),
                    "aligned": [
                        {"note_id": note_id, "sentence_index": idx}
                        for note_id, idx in result.aligned
                    ],
                    "dropped": [
                        {"note_id": note_id, "sentence_index": idx}
                        for note_id, idx in result.dropped
                    ],
                    "skipped_concepts": list(result.skipped_concepts),
                }
            )
        return rows

    nested = _map_jobs(args.jobs, one, corpus)
    rows = [row for group in sorted(nested, key=lambda g: g[0]["admission_id"] if g else "") for row in group]
    out = Path(args.out)
    _write_jsonl(out, rows)
    write_manifest("align", vars(args), [Path(args.corpus)], [out], started)
    print(f"align[{args.method}]: {len(rows)} sentences -> {out}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    started = time.monotonic()
    corpus = _corpus(args.corpus)
    inputs = [Path(args.corpus)]
    train_index = None
    if args.strategy in ("retrieval", "ensemble"):
        train_path = args.train or args.corpus
        if args.train:
            inputs.append(Path(args.train))
        train = _corpus(train_path) if train_path != args.corpus else corpus
        docs = []
        for record in train:
            for sentence in reference_sentences(record):
                docs.append(((record.admission_id, sentence.index), tuple(sentence.tokens)))
        train_index = Bm25Index(docs)

    budgets = {
        record.admission_id: len(tokenize(record.reference)) for record in corpus
    }
    mean_budget = int(sum(budgets.values()) / len(budgets)) if budgets else 0

    def one(record: AdmissionRecord) -> dict:
        source = [s for note in record.notes for s in note_sentences(note)]
        refs = reference_sentences(record)
        reference_tokens = tokenize(record.reference)
        budget = args.budget or mean_budget or 1
        if args.strategy == "topk":
            summary = oracle_top_k(source, reference_tokens, budget)
        elif args.strategy == "gain":
            summary = oracle_gain(source, reference_tokens)
        elif args.strategy == "sent-align":
            summary = oracle_sent_align(source, refs)
        elif args.strategy == "retrieval":
            summary = oracle_retrieval(refs, train_index)
        elif args.strategy == "ensemble":
            summary = oracle_sa_plus_retrieval(source, refs, train_index)
        elif args.strategy == "lexrank":
            summary = lexrank(source, budget)
        elif args.strategy == "random":
            summary = random_baseline(source, budget, derive_seed(args.seed, record.admission_id))
        else:
            raise CliError(f"unknown strategy {args.strategy!r}")
        row = {
            "admission_id": record.admission_id,
            "strategy": summary.strategy,
            "selected": [
                {"origin": list(s.origin), "text": s.text} for s in summary.selected
            ],
            "scores": score_summary(summary, reference_tokens),
        }
        if "retrieval_share" in summary.info:
            row["retrieval_share"] = summary.info["retrieval_share"]
        return row

    rows = _map_jobs(args.jobs, one, corpus)
    rows.sort(key=lambda r: r["admission_id"])
    report = {}
    for n in (1, 2):
        for stat in ("precision", "recall", "f1"):
            values = [r["scores"][f"rouge{n}"][stat] for r in rows]
            report[f"rouge{n}_{stat}"] = sum(values) / len(values) if values else 0.0
    out = Path(args.out)
    _write_jsonl(out, rows)
    report_path = out.with_suffix(".report.json")
    _write_json(report_path, {"strategy": args.strategy, "mean": report, "n": len(rows)})
    write_manifest("oracle", vars(args), inputs, [out, report_path], started)
    print(f"oracle[{args.strategy}]: R1 F1 {report['rouge1_f1']:.3f} over {len(rows)} admissions -> {out}")
    return EXIT_OK


def cmd_corrupt(args) -> int:
    started = time.monotonic()
    corpus = _corpus(args.corpus)
    mention_bank = [m for record in corpus for m in record.source_mentions()]
    rows = []
    for record in corpus:
        ref_sents = reference_sentences(record)
        for sentence in ref_sents:
            mentions = mentions_in_span(
                record.reference_mentions(), REFERENCE, sentence.start, sentence.end
            )
            seed = derive_seed(args.seed, record.admission_id, sentence.index)
            if args.mode == "mask":
                spans = [(i, min(i + 2, len(sentence.tokens))) for i in range(0, len(sentence.tokens), 2)]
                masked, chosen = delete_spans(list(sentence.tokens), spans, args.m, seed)
                rows.append(
                    {
                        "admission_id": record.admission_id,
                        "sentence_index": sentence.index,
                        "mode": "mask",
                        "text": " ".join(masked),
                        "masked_spans": [list(span) for span in chosen],
                    }
                )
                continue
            mode = INTRINSIC if args.mode == "swap-intrinsic" else EXTRINSIC
            pool = list(record.source_mentions()) if mode == INTRINSIC else mention_bank
            shifted = [
                replace(m, start=m.start - sentence.start, end=m.end - sentence.start)
                for m in mentions
            ]
            spec = CorruptionSpec(swap_rate=args.s, swap_mode=mode, seed=seed)
            result = swap_entities(sentence.text, shifted, pool, spec)
            rows.append(
                {
                    "admission_id": record.admission_id,
                    "sentence_index": sentence.index,
                    "mode": args.mode,
                    "text": result.text,
                    "swaps": [
                        {
                            "position": s.position,
                            "original": s.original,
                            "replacement": s.replacement,
                            "start": s.start,
                            "end": s.end,
                        }
                        for s in result.swaps
                    ],
                    "skipped": list(result.skipped),
                }
            )
    out = Path(args.out)
    _write_jsonl(out, rows)
    write_manifest("corrupt", vars(args), [Path(args.corpus)], [out], started)
    print(f"corrupt[{args.mode}]: {len(rows)} sentences -> {out}")
    return EXIT_OK


def cmd_revision_tuples(args) -> int:
    started = time.monotonic()
    corpus = _corpus(args.corpus)
    backend = _load_backend(args.backend)
    predicate = _predicate_for(backend)
    rows = []
    for record in corpus:
        supported = []
        contexts = {}
        corruptions = {}
        ref_sents = [s for s in reference_sentences(record) if s.tokens]
        source = [s for note in record.notes for s in note_sentences(note)]
        by_location = {s.location: s for s in source}
        for sentence in ref_sents:
            result = greedy_weighted_align(sentence, source, backend)
            aligned = [by_location[loc] for loc in result.aligned]
            contexts[sentence.index] = aligned
            sent_mentions = mentions_in_span(
                record.reference_mentions(), REFERENCE, sentence.start, sentence.end
            )
            verdict = support_verdict(
                sentence, aligned, sent_mentions, record.source_mentions(), backend, predicate
            )
            if verdict.supported:
                supported.append((sentence, aligned))
                pool = list(record.source_mentions())
                shifted = [
                    replace(m, start=m.start - sentence.start, end=m.end - sentence.start)
                    for m in sent_mentions
                ]
                variants = []
                for i in range(args.candidates):
                    spec = CorruptionSpec(
                        swap_rate=0.5,
                        swap_mode=INTRINSIC,
                        seed=derive_seed(args.seed, record.admission_id, sentence.index, i),
                    )
                    variants.append(swap_entities(sentence.text, shifted, pool, spec).text)
                corruptions[sentence.index] = variants
        tuples = build_revision_tuples(
            supported, corruptions, backend, derive_seed(args.seed, record.admission_id)
        )
        for t in tuples:
            codes = revision_codes(
                tokenize(t.target_text), tokenize(t.input_text), [tok for c in t.context for tok in tokenize(c)]
            )
            rows.append(
                {
                    "admission_id": record.admission_id,
                    "input": t.input_text,
                    "context": list(t.context),
                    "target": t.target_text,
                    "polarity": t.polarity,
                    "provenance": t.provenance,
                    "input_frac": codes.input_frac,
                    "source_frac": codes.source_frac,
                    "input_decile": codes.input_decile,
                    "source_decile": codes.source_decile,
                }
            )
    out = Path(args.out)
    _write_jsonl(out, rows)
    write_manifest("revision-tuples", vars(args), [Path(args.corpus)], [out], started)
    print(f"revision-tuples: {len(rows)} tuples -> {out}")
    return EXIT_OK


SELECT_ALIASES = {
    "max-margin": "margin-max",
    "min-margin": "margin-min",
    "max-diversity": "diversity-max",
    "min-diversity": "diversity-min",
}


def cmd_select(args) -> int:
    started = time.monotonic()
    args.strategy = SELECT_ALIASES.get(args.strategy, args.strategy)
    pools = []
    with open(args.pools, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                pools.append(pool_from_dict(json.loads(line)))
    task = args.task
    rows = []
    stats_rows = []
    for pool in pools:
        candidates = pool.candidates
        if task == RELEVANCE:
            candidates = [c for c in candidates if c.beam_rank is not None]
        selection = select(
            candidates,
            args.strategy,
            task,
            seed=derive_seed(args.seed, pool.example_id),
        )
        members = selection.ranked or selection.positives + selection.negatives
        rows.append(
            {
                "example_id": pool.example_id,
                "task": task,
                "strategy": args.strategy,
                "ranked": [c.candidate_id for c in selection.ranked],
                "positives": [c.candidate_id for c in selection.positives],
                "negatives": [c.candidate_id for c in selection.negatives],
            }
        )
        stats = set_statistics(selection)
        stats_rows.append(
            {
                "example_id": pool.example_id,
                "mean_quality": stats.mean_quality,
                "margin": stats.margin,
                "diversity": stats.diversity,
                "mean_log_likelihood": stats.mean_log_likelihood,
                "likelihood_gap": stats.likelihood_gap,
                "mean_token_length": stats.mean_token_length,
                "extractive_gap": stats.extractive_gap,
            }
        )
    out = Path(args.out)
    _write_jsonl(out, rows)
    outputs = [out]
    if args.stats:
        keys = ("mean_quality", "margin", "diversity", "mean_log_likelihood", "mean_token_length")
        means = {
            key: sum(r[key] for r in stats_rows) / len(stats_rows) if stats_rows else 0.0
            for key in keys
        }
        stats_path = Path(args.stats)
        _write_json(stats_path, {"per_example": stats_rows, "mean": means})
        outputs.append(stats_path)
    write_manifest("select", vars(args), [Path(args.pools)], outputs, started)
    print(f"select[{args.task}/{args.strategy}]: {len(rows)} examples -> {out}")
    return EXIT_OK


def cmd_speer(args) -> int:
    started = time.monotonic()
    corpus = _corpus(args.corpus)
    backend = _load_backend(args.backend)
    predicate = _predicate_for(backend)
    if args.esg:
        indices = load_esg_file(args.esg, corpus)
    else:
        indices = _build_indices(corpus, predicate)
    inputs = [Path(args.corpus)]
    if args.esg:
        inputs.append(Path(args.esg))
    rows = []

    if args.action == "mark":
        for record in corpus:
            index = indices[record.admission_id]
            salient = {g.esg_id for g in index.salient_groups()}
            notes = []
            for note in record.notes:
                note_mentions = [m for m in record.source_mentions() if m.doc_ref == note.note_id]
                spans = [
                    (m.start, m.end)
                    for m in note_mentions
                    if index.esg_of.get(m.mention_id) in salient
                ]
                marked = mark_text(note.full_text, spans)
                notes.append({"note_id": note.note_id, "marked_text": marked.marked})
            guidance = build_guidance_prompt(index, shuffle_seed=derive_seed(args.seed, record.admission_id))
            rows.append(
                {
                    "admission_id": record.admission_id,
                    "notes": notes,
                    "guidance": guidance.render(),
                }
            )
    elif args.action == "plan":
        for record in corpus:
            index = indices[record.admission_id]
            refs = reference_sentences(record)
            mentions_by_sentence = {
                s.index: mentions_in_span(
                    record.reference_mentions(), REFERENCE, s.start, s.end
                )
                for s in refs
            }
            document = oracle_plan(refs, mentions_by_sentence, index, backend, predicate)
            rows.append(
                {
                    "admission_id": record.admission_id,
                    "speer_text": serialize_speer(document),
                }
            )
    elif args.action in ("parse", "score"):
        if not args.infile:
            raise CliError(f"--in is required for speer {args.action}")
        inputs.append(Path(args.infile))
        generations = {}
        with open(args.infile, encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    obj = json.loads(line)
                    generations[obj["admission_id"]] = obj["output_text"]
        for record in corpus:
            if record.admission_id not in generations:
                continue
            document = parse_speer(generations[record.admission_id])
            row = {
                "admission_id": record.admission_id,
                "sentences": [step.sentence for step in document.steps],
                "plans": [list(step.plan) for step in document.steps],
                "summary": document.summary,
            }
            if args.action == "score":
                index = indices[record.admission_id]
                guidance = {g.esg_id for g in index.salient_groups()}
                planned = [
                    EntityMention(f"plan-{i}-{j}", "GENERATED", 0, len(span), span, "OTHER", frozenset())
                    for i, step in enumerate(document.steps)
                    for j, span in enumerate(step.plan)
                ]
                recall, precision, f1 = adherence(planned, guidance, index, backend, predicate)
                row["adherence"] = {"recall": recall, "precision": precision, "f1": f1}
            rows.append(row)
    else:
        raise CliError(f"unknown speer action {args.action!r}")

    out = Path(args.out)
    _write_jsonl(out, rows)
    write_manifest(f"speer-{args.action}", vars(args), inputs, [out], started)
    print(f"speer[{args.action}]: {len(rows)} admissions -> {out}")
    return EXIT_OK


def cmd_analytics(args) -> int:
    started = time.monotonic()
    corpus = _corpus(args.corpus)
    backend = _load_backend(args.backend)
    predicate = _predicate_for(backend)
    if args.esg:
        indices = load_esg_file(args.esg, corpus)
    else:
        indices = _build_indices(corpus, predicate)
    inputs = [Path(args.corpus)]
    if args.esg:
        inputs.append(Path(args.esg))

    backend_predicate = predicate
    curves_by_strategy: dict[str, list] = {}
    lead_bias_total = [0.0] * 10
    lead_bias_count = 0
    transition_counts = None
    singleton_fractions = []
    adjacent_fractions = []
    for record in corpus:
        index = indices[record.admission_id]
        for curve in ordering_curves(record, index):
            curves_by_strategy.setdefault(curve.strategy, []).append(curve.points)
        hist = lead_bias_histogram(record, index)
        if hist:
            lead_bias_total = [a + b for a, b in zip(lead_bias_total, hist)]
            lead_bias_count += 1
        ordered = sorted(record.source_mentions(), key=lambda m: (m.doc_ref, m.start))
        matrix = transition_matrix(ordered)
        transition_counts = matrix if transition_counts is None else transition_counts + matrix
        # summary entity grid: reference sentences x source ESGs of their mentions
        ref_sents = reference_sentences(record)
        esgs_per_sentence = []
        for sentence in ref_sents:
            sent_mentions = mentions_in_span(
                record.reference_mentions(), REFERENCE, sentence.start, sentence.end
            )
            esgs_per_sentence.append(
                {
                    esg
                    for esg in (
                        best_source_esg(m, index, backend, backend_predicate)
                        for m in sent_mentions
                    )
                    if esg is not None
                }
            )
        grid = entity_grid(len(ref_sents), esgs_per_sentence)
        if grid.esg_ids:
            singleton_fractions.append(grid.singleton_fraction)
            adjacent_fractions.append(grid.adjacent_chain_fraction)

    mean_curves = {
        strategy: [
            [d + 1, sum(points[d][1] for points in all_points) / len(all_points)]
            for d in range(10)
        ]
        for strategy, all_points in curves_by_strategy.items()
    }
    payload = {
        "fragment_length_by_rank": [[r, m] for r, m in fragment_length_by_rank(corpus)],
        "mean_ordering_curves": mean_curves,
        "lead_bias_histogram": (
            [v / lead_bias_count for v in lead_bias_total] if lead_bias_count else []
        ),
        "frequency_salience_curve": [
            [c, p] for c, p in frequency_salience_curve([indices[r.admission_id] for r in corpus])
        ],
        "transition_matrix": (
            (transition_counts / max(1, len(corpus))).tolist() if transition_counts is not None else []
        ),
        "transition_labels": list(TRANSITION_TYPES),
        "lexical_chains": {
            "singleton_fraction": (
                sum(singleton_fractions) / len(singleton_fractions) if singleton_fractions else 0.0
            ),
            "adjacent_chain_fraction": (
                sum(adjacent_fractions) / len(adjacent_fractions) if adjacent_fractions else 0.0
            ),
        },
        "n_admissions": len(corpus),
    }
    if args.labels:
        inputs.append(Path(args.labels))
        with open(args.labels, encoding="utf-8") as handle:
            summaries = json.load(handle)
        payload["error_rate_by_position"] = [
            [p, r] for p, r in error_rate_by_position(summaries)
        ]
    out = Path(args.out)
    _write_json(out, payload)
    outputs = [out]
    if args.figures:
        from .figures import render_analytics_figures

        outputs.extend(render_analytics_figures(payload, args.figures))
    write_manifest("analytics", vars(args), inputs, outputs, started)
    print(f"analytics: {len(corpus)} admissions -> {out}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import serve_forever

    serve_forever(
        corpus_path=args.corpus,
        port=args.port,
        se_path=args.se_file,
        label_log=args.labels_log,
        vectors_path=args.vectors,
    )
    return EXIT_OK


def cmd_demo(args) -> int:
    started = time.monotonic()
    out_dir = Path(args.out)
    corpus_dir = out_dir / "corpus"
    paths = write_minicorpus(corpus_dir, n=20, seed=args.seed)
    corpus_path = str(paths["corpus"])
    vectors = f"vectors:{paths['vectors']}"
    run = lambda argv: main(argv)

    steps = [
        ["analyze", "--corpus", corpus_path, "--out", str(out_dir / "analyze.json")],
        ["esg", "--corpus", corpus_path, "--backend", vectors, "--out", str(out_dir / "esgs.jsonl")],
        [
            "align",
            "--method",
            "bs-gain",
            "--corpus",
            corpus_path,
            "--backend",
            "exact",
            "--esg",
            str(out_dir / "esgs.jsonl"),
            "--augment-entities",
            "--out",
            str(out_dir / "alignments.jsonl"),
        ],
        [
            "align",
            "--method",
            "rouge-gain",
            "--corpus",
            corpus_path,
            "--out",
            str(out_dir / "alignments_rouge_gain.jsonl"),
        ],
        ["oracle", "--strategy", "gain", "--corpus", corpus_path, "--out", str(out_dir / "oracle_gain.jsonl")],
        [
            "oracle",
            "--strategy",
            "ensemble",
            "--corpus",
            corpus_path,
            "--train",
            corpus_path,
            "--out",
            str(out_dir / "oracle_ensemble.jsonl"),
        ],
        [
            "corrupt",
            "--mode",
            "swap-intrinsic",
            "--s",
            "0.5",
            "--seed",
            str(args.seed),
            "--corpus",
            corpus_path,
            "--out",
            str(out_dir / "corruptions.jsonl"),
        ],
        [
            "revision-tuples",
            "--corpus",
            corpus_path,
            "--backend",
            "exact",
            "--seed",
            str(args.seed),
            "--out",
            str(out_dir / "revision_tuples.jsonl"),
        ],
        [
            "speer",
            "mark",
            "--corpus",
            corpus_path,
            "--backend",
            vectors,
            "--esg",
            str(out_dir / "esgs.jsonl"),
            "--seed",
            str(args.seed),
            "--out",
            str(out_dir / "speer_marked.jsonl"),
        ],
        [
            "speer",
            "plan",
            "--corpus",
            corpus_path,
            "--backend",
            vectors,
            "--esg",
            str(out_dir / "esgs.jsonl"),
            "--out",
            str(out_dir / "speer_plans.jsonl"),
        ],
        [
            "analytics",
            "--corpus",
            corpus_path,
            "--backend",
            vectors,
            "--esg",
            str(out_dir / "esgs.jsonl"),
            "--out",
            str(out_dir / "analytics.json"),
            "--figures",
            str(out_dir / "figures"),
        ],
    ]
    for argv in steps:
        code = run(argv)
        if code != EXIT_OK:
            raise CliError(f"demo step {' '.join(argv[:2])} failed with exit code {code}", code)

    # candidate pools + selection on the generated corpus
    corpus = _corpus(corpus_path)
    faithful_rows, relevance_rows = [], []
    for record in corpus:
        fp, rp = build_demo_pools(record, seed=args.seed)
        faithful_rows.append(pool_to_dict(fp))
        relevance_rows.append(pool_to_dict(rp))
    pools_faithful = out_dir / "pools_faithfulness.jsonl"
    pools_relevance = out_dir / "pools_relevance.jsonl"
    _write_jsonl(pools_faithful, faithful_rows)
    _write_jsonl(pools_relevance, relevance_rows)
    for task, pools_path, strategy in (
        (RELEVANCE, pools_relevance, "margin-max"),
        (FAITHFULNESS, pools_faithful, "hard"),
    ):
        code = run(
            [
                "select",
                "--strategy",
                strategy,
                "--task",
                task,
                "--pools",
                str(pools_path),
                "--seed",
                str(args.seed),
                "--out",
                str(out_dir / f"selection_{task}.jsonl"),
                "--stats",
                str(out_dir / f"selection_{task}_stats.json"),
            ]
        )
        if code != EXIT_OK:
            raise CliError(f"demo select[{task}] failed", code)

    # speer score on the oracle plans treated as a generation
    plans_path = out_dir / "speer_plans.jsonl"
    generations = []
    with open(plans_path, encoding="utf-8") as handle:
        for line in handle:
            obj = json.loads(line)
            generations.append(
                {"admission_id": obj["admission_id"], "output_text": obj["speer_text"]}
            )
    generations_path = out_dir / "speer_generations.jsonl"
    _write_jsonl(generations_path, generations)
    code = run(
        [
            "speer",
            "score",
            "--corpus",
            corpus_path,
            "--backend",
            vectors,
            "--esg",
            str(out_dir / "esgs.jsonl"),
            "--in",
            str(generations_path),
            "--out",
            str(out_dir / "speer_scores.jsonl"),
        ]
    )
    if code != EXIT_OK:
        raise CliError("demo speer score failed", code)

    outputs = sorted(
        p for p in out_dir.rglob("*") if p.is_file() and not p.name.endswith(".manifest.json")
    )
    write_manifest(
        "demo",
        {"seed": args.seed, "out": str(out_dir)},
        [paths["corpus"], paths["vectors"], paths["summary_elements"]],
        outputs,
        started,
        manifest_path=out_dir / "manifest.json",
    )
    print(f"demo complete: {len(outputs)} artifacts under {out_dir}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="coursekit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"coursekit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, corpus=True):
        if corpus:
            p.add_argument("--corpus", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--out", required=True)

    p = sub.add_parser("analyze", help="fragment/compression statistics and generated-summary ROUGE")
    common(p)
    p.add_argument("--generated", help="JSONL of {admission_id, output_text}")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("esg", help="entity synonym groups with salience labels")
    common(p)
    p.add_argument("--backend", default="exact")
    p.set_defaults(fn=cmd_esg)

    p = sub.add_parser("align", help="source-summary alignment")
    common(p)
    p.add_argument("--method", required=True, choices=sorted(ALIGN_METHODS))
    p.add_argument("--backend", default="exact")
    p.add_argument("--esg", help="esgs.jsonl from `coursekit esg`")
    p.add_argument("--k", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--augment-entities", action="store_true")
    p.set_defaults(fn=cmd_align)

    p = sub.add_parser("oracle", help="extractive oracles and baselines")
    common(p)
    p.add_argument(
        "--strategy",
        required=True,
        choices=["gain", "topk", "sent-align", "retrieval", "ensemble", "lexrank", "random"],
    )
    p.add_argument("--train", help="train corpus for retrieval strategies")
    p.add_argument("--budget", type=int)
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("corrupt", help="entity swaps and span masking")
    common(p)
    p.add_argument("--mode", required=True, choices=["swap-intrinsic", "swap-extrinsic", "mask"])
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--m", type=float, default=0.25)
    p.set_defaults(fn=cmd_corrupt)

    p = sub.add_parser("revision-tuples", help="contrastive revision training tuples")
    common(p)
    p.add_argument("--backend", default="exact")
    p.add_argument("--candidates", type=int, default=4)
    p.set_defaults(fn=cmd_revision_tuples)

    p = sub.add_parser("select", help="contrast-set selection from candidate pools")
    p.add_argument("--strategy", required=True)
    p.add_argument("--task", required=True, choices=[RELEVANCE, FAITHFULNESS])
    p.add_argument("--pools", required=True)
    p.add_argument("--stats")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_select)

    p = sub.add_parser("speer", help="SPEER marking, plans, parsing, scoring")
    p.add_argument("action", choices=["mark", "plan", "parse", "score"])
    common(p)
    p.add_argument("--backend", default="exact")
    p.add_argument("--esg")
    p.add_argument("--in", dest="infile")
    p.set_defaults(fn=cmd_speer)

    p = sub.add_parser("analytics", help="corpus-level exploratory statistics")
    common(p)
    p.add_argument("--backend", default="exact")
    p.add_argument("--esg")
    p.add_argument("--labels", help="JSON of per-summary per-sentence SE categories")
    p.add_argument("--figures", help="directory for rendered matplotlib figures")
    p.set_defaults(fn=cmd_analytics)

    p = sub.add_parser("serve", help="annotation HTTP service")
    p.add_argument("--corpus")
    p.add_argument("--port", type=int)
    p.add_argument("--se-file")
    p.add_argument("--labels-log")
    p.add_argument("--vectors")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("demo", help="full pipeline on the bundled synthetic corpus")
    p.add_argument("--out", default="out")
    p.add_argument("--seed", type=int, default=13)
    p.set_defaults(fn=cmd_demo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except CorpusError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
