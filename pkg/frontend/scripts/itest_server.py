#!/usr/bin/env python3
"""Start a disposable annotation service for the frontend integration tests.

Generates a corpus big enough for one hundred scripted page runs (ten
workers, ten pages each), ingests it with the repo fixtures' wordlists,
question bank, and mapping, writes a meta file with the base URL, access
tokens, and the screening answer key, then serves until killed.

Usage: itest_server.py PORT META_PATH
"""

import json
import sys
import tempfile
from pathlib import Path

import uvicorn

from crowdpos.project import Project
from crowdpos.question_bank import tree_paths
from crowdpos.router import TaskKind
from crowdpos.service import create_app
from crowdpos.tags import LangId

REPO = Path(__file__).resolve().parents[2]
FIXTURES = REPO / "fixtures"

# seven token-specific cards plus one English-tree and one Spanish-tree
# card per utterance, so every page mixes both card kinds
SENTENCE = [
    ("can", "eng", "mod", "AUX"),
    ("la", "spa", "det.def", "DET"),
    ("good", "eng", "adj", "ADJ"),
    ("off", "eng", "prep/part", "ADP"),
    ("como", "spa", "conj.sub/adv", "ADV"),
    ("casa", "spa", "n.f", "NOUN"),
    ("as", "eng", "conj.sub/prep", "ADP"),
    ("esta", "spa", "det/pron", "DET"),
    ("no", "spa", "adv", "INTJ"),
]

N_REAL_UTTERANCES = 52
N_SCREENING = 10
N_PAGE_TESTS = 12
N_WORKERS = 10


def build_inputs(work: Path):
    lines = ["# generated integration corpus"]
    golds = {}

    def emit(utt_id):
        for pos, (surface, lang, bangor, gold) in enumerate(SENTENCE):
            lines.append(f"{utt_id}\t{pos}\t{surface}\t{lang}\t{bangor}")
            golds[f"{utt_id}:{pos}"] = gold

    for u in range(N_REAL_UTTERANCES):
        emit(f"r{u:03d}")
    test_ids = []
    u = 0
    while len(test_ids) < N_SCREENING + N_PAGE_TESTS:
        emit(f"t{u:03d}")
        test_ids.extend(f"t{u:03d}:{p}" for p in range(len(SENTENCE)))
        u += 1
    test_ids = test_ids[: N_SCREENING + N_PAGE_TESTS]
    tests = [
        {
            "token_id": token_id,
            "task": "tsq" if SENTENCE[int(token_id.split(":")[1])][0] not in ("good", "casa") else (
                "eng_qt" if SENTENCE[int(token_id.split(":")[1])][0] == "good" else "spa_qt"
            ),
            "gold": golds[token_id],
            "pools": ["screening"] if i < N_SCREENING else ["page"],
        }
        for i, token_id in enumerate(test_ids)
    ]

    tokens = {f"tok-itw{i:02d}": {"role": "worker", "worker_id": f"itw{i:02d}", "locale": "US", "spanish_certified": True} for i in range(N_WORKERS)}
    tokens["tok-itfail"] = {"role": "worker", "worker_id": "itfail", "locale": "US", "spanish_certified": True}
    tokens["tok-expert"] = {"role": "expert", "expert_id": "e1"}
    tokens["tok-admin"] = {"role": "admin"}
    config = {
        "seed": 11,
        "reservation_ttl_seconds": 3600,
        # threshold 0 disables banning: the scripted runs answer randomly
        "qc": {
            "grace_min": 5,
            "threshold": 0.0,
            "allowed_locales": None,
            "require_spanish_certified": False,
            "prices_cents": {"tsq": 5, "eng_qt": 6, "spa_qt": 6},
        },
        "auth": {"tokens": tokens},
    }

    corpus_path = work / "corpus.tsv"
    corpus_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    tests_path = work / "test_questions.json"
    tests_path.write_text(json.dumps(tests, indent=1), encoding="utf-8")
    config_path = work / "config.json"
    config_path.write_text(json.dumps(config, indent=1), encoding="utf-8")
    return corpus_path, tests_path, config_path, tokens


def answer_key(project):
    """Correct ItemAnswer fragment per test-question token."""
    key = {}
    for tq in project.test_questions:
        assignment = project.assignments[tq.token_id]
        if assignment.kind == TaskKind.TSQ:
            entry = project.bank.tsqs[assignment.question_id]
            index = next(i for i, a in enumerate(entry.answers) if a.tag == tq.gold_tag)
            key[tq.token_id] = {"answer_index": index}
        else:
            lang = LangId.ENG if assignment.kind == TaskKind.ENG_QT else LangId.SPA
            tree = project.bank.tree_for_lang(lang)
            trail = next(t for t, tag in tree_paths(tree) if tag == tq.gold_tag)
            key[tq.token_id] = {
                "trail": [{"node": node, "answer_index": i} for node, i in trail]
            }
    return key


def main():
    port = int(sys.argv[1])
    meta_path = Path(sys.argv[2])
    work = Path(tempfile.mkdtemp(prefix="crowdpos-itest-"))
    corpus_path, tests_path, config_path, tokens = build_inputs(work)
    project = Project.create(
        work / "data",
        corpus_path,
        FIXTURES / "lists",
        FIXTURES / "bank",
        FIXTURES / "mapping.json",
        tests=tests_path,
        config=config_path,
    )
    meta = {
        "baseUrl": f"http://127.0.0.1:{port}",
        "tokens": {name: entry.get("worker_id") or entry["role"] for name, entry in tokens.items()},
        "key": answer_key(project),
    }
    meta_path.write_text(json.dumps(meta), encoding="utf-8")
    uvicorn.run(create_app(project), host="127.0.0.1", port=port, log_level="warning")


if __name__ == "__main__":
    main()
