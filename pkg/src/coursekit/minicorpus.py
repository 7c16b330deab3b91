"""Bundled synthetic mini-corpus: seeded generator for admissions, notes,
reference summaries, entity mentions with exact char spans, an embedding
sidecar, summary-element inventories, and demo candidate pools.

Every salient concept's source mentions live in a single note, which makes
greedy note-ordering dominance hold by construction; distractor concepts may
recur across notes. Reference summaries copy one source sentence verbatim and
occasionally name a concept absent from the source.
"""
from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .calibration import (
    DIVERSE_BEAM_A,
    DIVERSE_BEAM_B,
    MASK_FILL_HIGH,
    MASK_FILL_LOW,
    PARAPHRASE,
    REFERENCE_TAG,
    SWAP_EXTRINSIC_HIGH,
    SWAP_EXTRINSIC_LOW,
    SWAP_INTRINSIC_HIGH,
    SWAP_INTRINSIC_LOW,
    Candidate,
    CandidatePool,
)
from .corpus import (
    PROBLEM,
    REFERENCE,
    TEST,
    TREATMENT,
    AdmissionRecord,
    EntityMention,
    admission_from_dict,
    note_sentences,
    save_corpus,
    split_sentences,
    tokenize,
)
from .corruption import EXTRINSIC, INTRINSIC, CorruptionSpec, delete_spans, swap_entities
from .lexical import extractive_fragments, r12
from .similarity import VectorStore, normalize_mention_text

DEFAULT_SEED = 13
DEFAULT_SIZE = 20

# (cluster id, semantic type, surface forms, shared code)
CONCEPTS = [
    ("chf", PROBLEM, ("chf", "congestive heart failure"), "I50"),
    ("htn", PROBLEM, ("htn", "hypertension"), "I10"),
    ("pna", PROBLEM, ("pneumonia", "pna"), "J18"),
    ("aki", PROBLEM, ("acute kidney injury", "aki"), "N17"),
    ("afib", PROBLEM, ("atrial fibrillation", "afib"), "I48"),
    ("anemia", PROBLEM, ("anemia",), "D64"),
    ("sepsis", PROBLEM, ("sepsis",), "A41"),
    ("edema", PROBLEM, ("edema", "swelling"), "R60"),
    ("gib", PROBLEM, ("gi bleed", "gib"), "K92"),
    ("lasix", TREATMENT, ("lasix", "furosemide"), None),
    ("ctx", TREATMENT, ("ceftriaxone", "rocephin"), None),
    ("dialysis", TREATMENT, ("dialysis",), None),
    ("warfarin", TREATMENT, ("coumadin", "warfarin"), None),
    ("insulin", TREATMENT, ("insulin",), None),
    ("ppi", TREATMENT, ("pantoprazole", "ppi drip"), None),
    ("cbc", TEST, ("cbc", "complete blood count"), None),
    ("cxr", TEST, ("chest x-ray", "cxr"), None),
    ("echo", TEST, ("echocardiogram", "echo"), None),
    ("bmp", TEST, ("bmp",), None),
    ("egd", TEST, ("endoscopy", "egd"), None),
]
CLUSTER_BY_ID = {cid: (cid, t, surfaces, code) for cid, t, surfaces, code in CONCEPTS}

NOTE_TITLES = ("Admission Note", "Progress Note", "Consult Note")

_OPEN_TEMPLATES = (
    "Pt presents with {p}.",
    "Admitted for management of {p}.",
    "Known history of {p} on arrival.",
)
_TREAT_TEMPLATES = (
    "Started {t} for {p}.",
    "Continued {t} with good effect.",
    "Dose of {t} adjusted overnight.",
)
_TEST_TEMPLATES = (
    "{x} obtained and reviewed.",
    "Repeat {x} pending this morning.",
)
_FILLER = (
    "No acute events overnight.",
    "Vitals remain within normal limits.",
    "Family updated at bedside.",
    "Plan discussed with the team.",
)

_PLACEHOLDER_RE = re.compile(r"(\{[a-z]+\})")


def derive_seed(*parts) -> int:
    """Stable cross-process integer seed from arbitrary repr-able parts."""
    digest = hashlib.sha256(repr(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def concept_vector_store() -> VectorStore:
    """One near-orthogonal direction per concept cluster; members of a cluster
    sit at cosine ~0.99 to each other, cross-cluster pairs near 0.15."""
    dim = len(CONCEPTS)
    entries = {}
    for k, (_, _, surfaces, _) in enumerate(CONCEPTS):
        for j, surface in enumerate(surfaces):
            vec = np.zeros(dim)
            vec[k] = 1.0
            if j > 0:
                vec[(k + j) % dim] += 0.15
            entries[normalize_mention_text(surface)] = (vec / np.linalg.norm(vec)).tolist()
    return VectorStore(dim, entries)


@dataclass
class _DocBuilder:
    """Accumulates sentences while tracking mention char offsets."""

    sentences: list[str] = field(default_factory=list)
    mentions: list[tuple[str, str, int, int]] = field(default_factory=list)

    @property
    def offset(self) -> int:
        return sum(len(s) + 1 for s in self.sentences)

    def add(self, template: str, **surfaces: tuple[str, str]) -> None:
        """Fill {placeholder}s with (cluster_id, surface) pairs, recording
        the char span of each inserted surface."""
        pieces: list[str] = []
        local = 0
        pending: list[tuple[str, str, int, int]] = []
        for part in _PLACEHOLDER_RE.split(template):
            name = part[1:-1] if part.startswith("{") and part.endswith("}") else None
            if name in surfaces:
                cluster, surface = surfaces[name]
                pending.append((cluster, surface, local, local + len(surface)))
                pieces.append(surface)
                local += len(surface)
            else:
                pieces.append(part)
                local += len(part)
        base = self.offset
        self.mentions.extend(
            (cluster, surface, base + start, base + end)
            for cluster, surface, start, end in pending
        )
        self.sentences.append("".join(pieces))

    def add_plain(self, sentence: str) -> None:
        self.sentences.append(sentence)

    @property
    def text(self) -> str:
        return " ".join(self.sentences)


def _surface(rng: random.Random, cluster_id: str) -> tuple[str, str]:
    _, _, surfaces, _ = CLUSTER_BY_ID[cluster_id]
    return cluster_id, rng.choice(surfaces)


def _note_body(rng: random.Random, problems, treatments, tests) -> _DocBuilder:
    builder = _DocBuilder()
    for p in problems:
        builder.add(rng.choice(_OPEN_TEMPLATES), p=_surface(rng, p))
    for t, p in treatments:
        builder.add(rng.choice(_TREAT_TEMPLATES), t=_surface(rng, t), p=_surface(rng, p))
    for x in tests:
        builder.add(rng.choice(_TEST_TEMPLATES), x=_surface(rng, x))
    builder.add_plain(rng.choice(_FILLER))
    return builder


def build_admission(admission_index: int, seed: int = DEFAULT_SEED) -> AdmissionRecord:
    rng = random.Random(derive_seed("admission", seed, admission_index))
    admission_id = f"adm-{admission_index:03d}"
    n_notes = rng.randint(3, 6)

    problems = [c for c, t, _, _ in CONCEPTS if t == PROBLEM]
    treatments = [c for c, t, _, _ in CONCEPTS if t == TREATMENT]
    tests = [c for c, t, _, _ in CONCEPTS if t == TEST]
    salient_problems = rng.sample(problems, rng.randint(2, 3))
    salient_treatments = rng.sample(treatments, rng.randint(1, 2))
    salient_tests = rng.sample(tests, 1)
    salient = salient_problems + salient_treatments + salient_tests
    distractors = rng.sample([c for c in problems + treatments + tests if c not in salient], 3)

    home_note = {c: rng.randrange(n_notes) for c in salient}

    note_dicts = []
    start_day = datetime(2021, 3, 1, 8, 0, 0) + timedelta(days=3 * admission_index)
    note_builders: list[tuple[_DocBuilder, _DocBuilder]] = []
    for i in range(n_notes):
        mine = [c for c in salient if home_note[c] == i]
        local_problems = [c for c in mine if CLUSTER_BY_ID[c][1] == PROBLEM]
        local_treatments = [
            (c, rng.choice(local_problems or salient_problems))
            for c in mine
            if CLUSTER_BY_ID[c][1] == TREATMENT
        ]
        local_tests = [c for c in mine if CLUSTER_BY_ID[c][1] == TEST]
        for d in distractors:
            if rng.random() >= 0.5:
                continue
            kind = CLUSTER_BY_ID[d][1]
            if kind == PROBLEM:
                local_problems.append(d)
            elif kind == TREATMENT:
                local_treatments.append((d, rng.choice(salient_problems)))
            else:
                local_tests.append(d)
        hpi = _note_body(rng, local_problems, [], [])
        plan = _note_body(rng, [], local_treatments, local_tests)
        note_builders.append((hpi, plan))
        note_dicts.append(
            {
                "note_id": f"{admission_id}-n{i}",
                "title": NOTE_TITLES[0] if i == 0 else NOTE_TITLES[2] if i == n_notes - 1 else NOTE_TITLES[1],
                "timestamp": (start_day + timedelta(days=i)).strftime("%Y-%m-%dT%H:%M:%S"),
                "day_index": i + 1,
                "total_days": n_notes,
                "sections": [
                    {"header": "hpi", "text": hpi.text},
                    {"header": "assessment and plan", "text": plan.text},
                ],
            }
        )

    # reference: one verbatim source sentence + fresh sentences over salient concepts
    ref_builder = _DocBuilder()
    verbatim_note = rng.randrange(n_notes)
    verbatim_hpi = note_builders[verbatim_note][0]
    verbatim_sentence = verbatim_hpi.sentences[0]
    for cluster, surface, start, end in verbatim_hpi.mentions:
        if end <= len(verbatim_sentence):
            ref_builder.mentions.append((cluster, surface, start, end))
    ref_builder.add_plain(verbatim_sentence)
    for treatment in salient_treatments:
        ref_builder.add(
            "Treated with {t} for {p}.",
            t=_surface(rng, treatment),
            p=_surface(rng, rng.choice(salient_problems)),
        )
    ref_builder.add("Workup included {x}.", x=_surface(rng, salient_tests[0]))
    if rng.random() < 0.35:
        unused = [c for c in problems if c not in salient and c not in distractors]
        if unused:
            ref_builder.add("Also noted {p} at discharge.", p=_surface(rng, rng.choice(unused)))
    ref_builder.add_plain("Discharged in stable condition.")

    record = {
        "admission_id": admission_id,
        "reference": ref_builder.text,
        "notes": note_dicts,
        "mentions": [],
    }
    loaded = admission_from_dict(record)

    mentions = []
    counter = 0
    for i, (hpi, plan) in enumerate(note_builders):
        note = loaded.notes[i]
        for builder, (section, section_start, _) in zip((hpi, plan), note.section_spans()):
            body_start = section_start + len(section.header) + 1
            for cluster, surface, start, end in builder.mentions:
                mentions.append(
                    {
                        "mention_id": f"{admission_id}-m{counter:03d}",
                        "doc_ref": note.note_id,
                        "start": body_start + start,
                        "end": body_start + end,
                        "text": surface,
                        "semantic_type": CLUSTER_BY_ID[cluster][1],
                        "codes": [CLUSTER_BY_ID[cluster][3]] if CLUSTER_BY_ID[cluster][3] else [],
                    }
                )
                counter += 1
    for cluster, surface, start, end in sorted(ref_builder.mentions, key=lambda m: m[2]):
        mentions.append(
            {
                "mention_id": f"{admission_id}-m{counter:03d}",
                "doc_ref": REFERENCE,
                "start": start,
                "end": end,
                "text": surface,
                "semantic_type": CLUSTER_BY_ID[cluster][1],
                "codes": [CLUSTER_BY_ID[cluster][3]] if CLUSTER_BY_ID[cluster][3] else [],
            }
        )
        counter += 1
    record["mentions"] = mentions
    return admission_from_dict(record)


def build_minicorpus(n: int = DEFAULT_SIZE, seed: int = DEFAULT_SEED) -> list[AdmissionRecord]:
    return [build_admission(i, seed) for i in range(n)]


def summary_elements(admission: AdmissionRecord) -> list[dict]:
    """SE inventory: one element per reference mention, spans within sentences."""
    elements = []
    sentences = split_sentences(admission.reference, doc_ref=REFERENCE)
    for k, mention in enumerate(admission.reference_mentions()):
        for sentence in sentences:
            if sentence.start <= mention.start and mention.end <= sentence.end:
                elements.append(
                    {
                        "se_id": f"{admission.admission_id}-se{k:03d}",
                        "sentence_index": sentence.index,
                        "start": mention.start - sentence.start,
                        "end": mention.end - sentence.start,
                        "text": mention.text,
                    }
                )
                break
    return elements


def _mask_spans(tokens: list[str], rng: random.Random) -> list[tuple[int, int]]:
    spans = []
    cursor = 0
    while cursor < len(tokens):
        end = min(len(tokens), cursor + rng.randint(1, 3))
        spans.append((cursor, end))
        cursor = end
    return spans


def _paraphrase(admission: AdmissionRecord, variant: int) -> str:
    """Deterministic paraphrase stand-in: swap mention surfaces for another
    surface from the same concept cluster where one exists."""
    surface_to_cluster = {}
    for cid, _, surfaces, _ in CONCEPTS:
        for s in surfaces:
            surface_to_cluster[s] = cid
    rng = random.Random(derive_seed("para", admission.admission_id, variant))
    text = admission.reference
    for mention in sorted(admission.reference_mentions(), key=lambda m: -m.start):
        cluster = surface_to_cluster.get(mention.text)
        if cluster is None:
            continue
        alternatives = [s for s in CLUSTER_BY_ID[cluster][2] if s != mention.text]
        if not alternatives or rng.random() < 0.3:
            continue
        text = text[: mention.start] + rng.choice(alternatives) + text[mention.end :]
    return text


def build_demo_pools(
    admission: AdmissionRecord, seed: int = DEFAULT_SEED
) -> tuple[CandidatePool, CandidatePool]:
    """(faithfulness pool of 66, relevance pool of 20) with seeded stand-ins
    for the externally supplied generators; scores carry quality and density."""
    rng = random.Random(derive_seed("pools", seed, admission.admission_id))
    source_sents = [s for note in admission.notes for s in note_sentences(note)]
    source_tokens = [t for s in source_sents for t in s.tokens]
    reference_tokens = tokenize(admission.reference)
    ref_sentences = split_sentences(admission.reference, doc_ref=REFERENCE)
    ref_mentions = admission.reference_mentions()
    intrinsic_pool = list(admission.source_mentions())
    extrinsic_pool = [
        EntityMention(f"bank-{cid}-{i}", "BANK", 0, len(s), s, t, frozenset())
        for cid, t, surfaces, _ in CONCEPTS
        for i, s in enumerate(surfaces)
    ]

    def finish(candidate_id, text, tag, *, beam_rank=None, ll=None) -> Candidate:
        tokens = tuple(tokenize(text))
        quality = r12(list(tokens), reference_tokens)
        density = extractive_fragments(list(tokens), source_tokens).density
        return Candidate(
            candidate_id=candidate_id,
            text=text,
            tokens=tokens,
            tag=tag,
            scores={"quality": quality, "density": density},
            log_likelihood=ll if ll is not None else rng.uniform(-3.0, -0.5),
            beam_rank=beam_rank,
        )

    faithful: list[Candidate] = []
    swap_plans = (
        (SWAP_INTRINSIC_LOW, INTRINSIC, 0.5),
        (SWAP_INTRINSIC_HIGH, INTRINSIC, 1.0),
        (SWAP_EXTRINSIC_LOW, EXTRINSIC, 0.5),
        (SWAP_EXTRINSIC_HIGH, EXTRINSIC, 1.0),
    )
    for tag, mode, rate in swap_plans:
        pool = intrinsic_pool if mode == INTRINSIC else extrinsic_pool
        for i in range(10):
            spec = CorruptionSpec(
                swap_rate=rate, swap_mode=mode, seed=derive_seed(seed, tag, i) % 2**31
            )
            result = swap_entities(admission.reference, ref_mentions, pool, spec)
            faithful.append(finish(f"{tag}-{i:02d}", result.text, tag))
    for tag, rate in ((MASK_FILL_LOW, 0.25), (MASK_FILL_HIGH, 0.75)):
        for i in range(10):
            tokens = tokenize(admission.reference)
            spans = _mask_spans(tokens, random.Random(derive_seed("spans", seed, tag, i)))
            masked, _ = delete_spans(tokens, spans, rate, seed=derive_seed(seed, tag, i) % 2**31)
            faithful.append(finish(f"{tag}-{i:02d}", " ".join(masked), tag))
    for i in range(5):
        faithful.append(finish(f"paraphrase-{i:02d}", _paraphrase(admission, i), PARAPHRASE))
    faithful.append(finish("reference-00", admission.reference, REFERENCE_TAG))

    relevance: list[Candidate] = []
    for tag in (DIVERSE_BEAM_A, DIVERSE_BEAM_B):
        for rank in range(1, 11):
            beam_rng = random.Random(derive_seed("beam", seed, admission.admission_id, tag, rank))
            keep = max(1, len(ref_sentences) - (rank - 1) // 3)
            pieces = [s.text for s in ref_sentences[:keep]]
            extra = beam_rng.sample(source_sents, k=min(len(source_sents), (rank - 1) % 3))
            pieces.extend(s.text for s in extra)
            text = " ".join(pieces)
            ll = -0.4 * rank + beam_rng.uniform(-0.05, 0.05)
            relevance.append(finish(f"{tag}-{rank:02d}", text, tag, beam_rank=rank, ll=ll))

    return (
        CandidatePool(admission.admission_id, faithful),
        CandidatePool(admission.admission_id, relevance),
    )


def pool_to_dict(pool: CandidatePool) -> dict:
    return {
        "example_id": pool.example_id,
        "candidates": [
            {
                "candidate_id": c.candidate_id,
                "text": c.text,
                "tag": c.tag,
                "scores": c.scores,
                "log_likelihood": c.log_likelihood,
                **({"beam_rank": c.beam_rank} if c.beam_rank is not None else {}),
            }
            for c in pool.candidates
        ],
    }


def pool_from_dict(obj: dict) -> CandidatePool:
    candidates = [
        Candidate(
            candidate_id=raw["candidate_id"],
            text=raw["text"],
            tokens=tuple(tokenize(raw["text"])),
            tag=raw["tag"],
            scores=dict(raw.get("scores") or {}),
            log_likelihood=float(raw.get("log_likelihood", 0.0)),
            beam_rank=raw.get("beam_rank"),
            vector=tuple(raw["vector"]) if raw.get("vector") else None,
        )
        for raw in obj["candidates"]
    ]
    return CandidatePool(obj["example_id"], candidates)


def write_minicorpus(directory: str | Path, n: int = DEFAULT_SIZE, seed: int = DEFAULT_SEED) -> dict:
    """Write corpus.jsonl, vectors.txt, and summary_elements.jsonl; returns paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    records = build_minicorpus(n, seed)
    corpus_path = directory / "corpus.jsonl"
    save_corpus(records, corpus_path)
    vectors_path = directory / "vectors.txt"
    concept_vector_store().save(vectors_path)
    se_path = directory / "summary_elements.jsonl"
    with open(se_path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(
                json.dumps(
                    {"admission_id": record.admission_id, "elements": summary_elements(record)},
                    sort_keys=True,
                )
                + "\n"
            )
    return {"corpus": corpus_path, "vectors": vectors_path, "summary_elements": se_path}
