"""Shared builders for synthetic simulation and service fixtures."""

import json
import random
from pathlib import Path

from crowdpos.corpus import MappingTable, Token
from crowdpos.qc import QcConfig, TestQuestion
from crowdpos.question_bank import QuestionBank, TsqAnswer, TsqEntry
from crowdpos.router import WordLists
from crowdpos.simulator import SimConfig, WorkerModel
from crowdpos.tags import ALL_TAGS, LangId, UniversalTag

# one all-TSQ utterance template over the shipped wordlists, with a natural
# gold reading per surface
TSQ_SENTENCE = [
    ("can", "eng", "mod", "AUX"),
    ("la", "spa", "det.def", "DET"),
    ("off", "eng", "prep/part", "ADP"),
    ("on", "eng", "prep/part", "ADP"),
    ("como", "spa", "conj.sub/adv", "ADV"),
    ("as", "eng", "conj.sub/prep", "ADP"),
    ("esta", "spa", "det/pron", "DET"),
    ("ese", "spa", "det/pron", "DET"),
    ("no", "spa", "adv", "INTJ"),
]


def write_service_corpus(
    out_dir: Path,
    n_real_utterances: int = 12,
    n_screening: int = 10,
    n_page_tests: int = 8,
):
    """A TSQ-only corpus large enough for multi-page QC scenarios.

    Returns (corpus_path, tests_path, golds) where golds maps every crowd
    token to its designated gold tag.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["# synthetic all-TSQ service corpus"]
    golds: dict[str, str] = {}
    tests: list[dict] = []

    def emit_utterance(utt_id):
        for pos, (surface, lang, bangor, gold) in enumerate(TSQ_SENTENCE):
            lines.append(f"{utt_id}\t{pos}\t{surface}\t{lang}\t{bangor}")
            golds[f"{utt_id}:{pos}"] = gold

    for u in range(n_real_utterances):
        emit_utterance(f"r{u:03d}")

    needed = n_screening + n_page_tests
    test_token_ids = []
    u = 0
    while len(test_token_ids) < needed:
        utt_id = f"t{u:03d}"
        emit_utterance(utt_id)
        test_token_ids.extend(f"{utt_id}:{p}" for p in range(len(TSQ_SENTENCE)))
        u += 1
    test_token_ids = test_token_ids[:needed]
    for i, token_id in enumerate(test_token_ids):
        tests.append(
            {
                "token_id": token_id,
                "task": "tsq",
                "gold": golds[token_id],
                "pools": ["screening"] if i < n_screening else ["page"],
            }
        )

    corpus_path = out_dir / "corpus.tsv"
    corpus_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    tests_path = out_dir / "test_questions.json"
    tests_path.write_text(json.dumps(tests, indent=1), encoding="utf-8")
    return corpus_path, tests_path, {k: UniversalTag(v) for k, v in golds.items()}


def all_tag_bank() -> QuestionBank:
    """One token-specific question offering every Universal tag, so any
    drawn tag is reachable and the projection onto answers is the identity."""
    answers = tuple(TsqAnswer(text=f"reading {t.value.lower()}", tag=t) for t in ALL_TAGS)
    entry = TsqEntry(
        question_id="tsq_all",
        surface="w",
        lang=LangId.ENG,
        prompt="pick the reading of `{{token}}'",
        answers=answers,
    )
    return QuestionBank(tsqs={"tsq_all": entry}, trees={})


def grid_config(
    n_tokens: int,
    p_crowd: float,
    p_bangor: float,
    seed: int,
    *,
    n_workers: int = 40,
    workers: list[WorkerModel] | None = None,
    qc: QcConfig | None = None,
    pages_per_worker: int | None = None,
    with_reports: bool = False,
) -> SimConfig:
    """Synthetic all-TSQ corpus with uniform-random golds; banning is off
    unless a qc config is supplied."""
    rng = random.Random(f"{seed}:setup")
    corpus: list[Token] = []
    golds: dict[str, UniversalTag] = {}
    for i in range(n_tokens):
        token_id = f"u{i}:0"
        corpus.append(Token(token_id, "w", LangId.ENG, "x", f"u{i}", 0, context="w"))
        golds[token_id] = rng.choice(ALL_TAGS)

    if workers is None:
        workers = [WorkerModel(worker_id=f"w{i:03d}", reliability=p_crowd) for i in range(n_workers)]
    pages_needed = (n_tokens * 2 + 8) // 9
    n_tests = max(20, pages_needed // max(1, len(workers)) + 40)
    tests = []
    for i in range(n_tests):
        token_id = f"tq{i}:0"
        corpus.append(Token(token_id, "w", LangId.ENG, "x", f"tq{i}", 0, context="w"))
        tests.append(
            TestQuestion(
                token_id=token_id,
                task="tsq",
                gold_tag=rng.choice(ALL_TAGS),
                pools=frozenset({"page"}),
            )
        )

    return SimConfig(
        seed=seed,
        workers=workers,
        corpus=corpus,
        lists=WordLists(
            unique={},
            manual=frozenset(),
            tsq={("w", LangId.ENG): "tsq_all"},
            interjections=frozenset(),
        ),
        bank=all_tag_bank(),
        mapping=MappingTable(entries={}, fallback=UniversalTag.X),
        golds=golds,
        test_questions=tests,
        bangor_accuracy=p_bangor,
        pages_per_worker=pages_per_worker,
        qc=qc or QcConfig(grace_min=1, threshold=0.0, allowed_locales=None, require_spanish_certified=False),
        with_reports=with_reports,
    )
