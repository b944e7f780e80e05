"""Event-sourced project state.

All inputs (corpus, wordlists, question bank, mapping, test questions,
config) are immutable after ingestion; every mutation is an event appended
to a line-delimited JSON log. Replaying the log over the inputs
reconstructs the exact state, so the digest after crash recovery matches
the live digest. Derived values (routing, automatic finals, the mapped
Bangor judgments, pools) are pure functions of the inputs and are rebuilt
at open time rather than logged.
"""

import hashlib
import json
import random
import shutil
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from . import qc as qc_mod
from .aggregate import (
    FinalTag,
    Judgment,
    JudgmentSource,
    JudgmentStore,
    VoteRecord,
    aggregate_token,
    resolve_tie,
)
from .corpus import Token, load_mapping, map_to_universal, parse_corpus_file
from .metrics import MetricsReport, TestJudgmentSet, metrics_report
from .qc import (
    Page,
    PartialPageError,
    QcConfig,
    TestPoolExhausted,
    TestQuestion,
    Worker,
    WorkerStatus,
    build_page,
    load_test_questions,
    register_worker,
)
from .question_bank import (
    QuestionBank,
    SessionError,
    load_bank,
    render_prompt,
    replay_trail,
)
from .router import TaskAssignment, TaskKind, WordLists, assign_task, check_tsq_references, load_wordlists, route_corpus
from .tags import LangId, UniversalTag, parse_tag


class ProjectError(Exception):
    http_status = 500


class NotFoundError(ProjectError):
    http_status = 404


class ConflictError(ProjectError):
    http_status = 409


class GoneError(ProjectError):
    http_status = 410


class ForbiddenError(ProjectError):
    http_status = 403


class TrailRejected(ProjectError):
    http_status = 422


class IngestError(ProjectError):
    http_status = 400


EVENTS_FILE = "events.ndjson"
INPUTS_DIR = "inputs"


@dataclass
class Reservation:
    page: Page
    expires_at: float
    assignments: dict  # item_id -> (token_id, TaskAssignment)


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class Project:
    """One annotation project over one ingested corpus."""

    def __init__(self, data_dir: str | Path, now_fn: Callable[[], float] = time.time):
        self.data_dir = Path(data_dir)
        self.now_fn = now_fn
        self.lock = threading.RLock()
        self._load_inputs()
        self._reset_state()
        self._events_path = self.data_dir / EVENTS_FILE
        self.seq = 0
        if self._events_path.exists():
            with open(self._events_path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    event = json.loads(line)
                    self._apply(event["type"], event["data"])
                    self.seq = event["seq"]
        self._log = open(self._events_path, "a", encoding="utf-8")

    # ---------------------------------------------------------------- ingest

    @classmethod
    def create(
        cls,
        data_dir: str | Path,
        corpus: str | Path,
        lists_dir: str | Path,
        bank_dir: str | Path,
        mapping: str | Path,
        tests: str | Path | None = None,
        config: str | Path | None = None,
        now_fn: Callable[[], float] = time.time,
    ) -> "Project":
        """Validate every input, then copy them into the data dir and open
        the project. Any validation failure aborts before anything is
        written."""
        data_dir = Path(data_dir)
        if (data_dir / INPUTS_DIR).exists():
            raise IngestError(f"{data_dir} already holds an ingested project")

        tokens = parse_corpus_file(corpus)
        lists = load_wordlists(lists_dir)
        bank = load_bank(bank_dir)
        table = load_mapping(mapping)
        check_tsq_references(lists, bank.tsqs.keys())
        assignments = {t.token_id: assign_task(t, lists) for t in tokens}
        for kind, lang in ((TaskKind.ENG_QT, LangId.ENG), (TaskKind.SPA_QT, LangId.SPA)):
            if any(a.kind == kind for a in assignments.values()):
                bank.tree_for_lang(lang)  # raises if missing

        test_questions = load_test_questions(tests) if tests else []
        token_ids = {t.token_id for t in tokens}
        for tq in test_questions:
            if tq.token_id not in token_ids:
                raise IngestError(f"test question {tq.token_id} not in the corpus")
            if not assignments[tq.token_id].is_crowd:
                raise IngestError(f"test question {tq.token_id} routes to a non-crowd task")
            routed = assignments[tq.token_id].kind.value
            if routed != tq.task:
                raise IngestError(
                    f"test question {tq.token_id} declares task {tq.task} but routes to {routed}"
                )
        n_screening = sum(1 for tq in test_questions if "screening" in tq.pools)
        if 0 < n_screening < 10:
            raise IngestError(f"screening pool needs at least 10 questions, found {n_screening}")

        if config is not None:
            with open(config, encoding="utf-8") as fh:
                config_doc = json.load(fh)
            QcConfig.from_json(config_doc.get("qc", {}))  # validates
        else:
            config_doc = {}

        inputs = data_dir / INPUTS_DIR
        inputs.mkdir(parents=True)
        shutil.copy(corpus, inputs / "corpus.tsv")
        shutil.copytree(lists_dir, inputs / "lists")
        shutil.copytree(bank_dir, inputs / "bank")
        shutil.copy(mapping, inputs / "mapping.json")
        if tests:
            shutil.copy(tests, inputs / "test_questions.json")
        (inputs / "config.json").write_text(
            json.dumps(config_doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
        manifest = {
            "inputs": {
                p.name: _sha256_file(p) for p in sorted(inputs.rglob("*")) if p.is_file()
            }
        }
        (data_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
        )
        return cls(data_dir, now_fn=now_fn)

    @classmethod
    def open(cls, data_dir: str | Path, now_fn: Callable[[], float] = time.time) -> "Project":
        data_dir = Path(data_dir)
        if not (data_dir / INPUTS_DIR).exists():
            raise NotFoundError(f"{data_dir} holds no ingested project")
        return cls(data_dir, now_fn=now_fn)

    def _load_inputs(self) -> None:
        inputs = self.data_dir / INPUTS_DIR
        self.tokens_list = parse_corpus_file(inputs / "corpus.tsv")
        self.tokens: dict[str, Token] = {t.token_id: t for t in self.tokens_list}
        self.lists: WordLists = load_wordlists(inputs / "lists")
        self.bank: QuestionBank = load_bank(inputs / "bank")
        self.mapping = load_mapping(inputs / "mapping.json")
        tests_path = inputs / "test_questions.json"
        self.test_questions: list[TestQuestion] = (
            load_test_questions(tests_path) if tests_path.exists() else []
        )
        config_path = inputs / "config.json"
        doc = json.loads(config_path.read_text(encoding="utf-8")) if config_path.exists() else {}
        self.config_doc = doc
        self.qc_config = QcConfig.from_json(doc.get("qc", {}))
        self.seed = int(doc.get("seed", 0))
        self.reservation_ttl = float(doc.get("reservation_ttl_seconds", 1800))

        self.assignments: dict[str, TaskAssignment] = {
            t.token_id: assign_task(t, self.lists) for t in self.tokens_list
        }
        self.routing_report = route_corpus(self.tokens_list, self.lists)
        self.test_by_token = {tq.token_id: tq for tq in self.test_questions}
        self.screening_pool = [tq for tq in self.test_questions if "screening" in tq.pools]
        self.page_test_pool = [tq for tq in self.test_questions if "page" in tq.pools]
        # crowd pool preserves corpus order; test-question tokens are held out
        self.crowd_pool: list[str] = [
            t.token_id
            for t in self.tokens_list
            if self.assignments[t.token_id].is_crowd and t.token_id not in self.test_by_token
        ]
        self._utterance_index: dict[str, list[tuple[int, str]]] = {}
        for t in self.tokens_list:
            self._utterance_index.setdefault(t.utterance_id, []).append((t.position, t.surface))
        for pairs in self._utterance_index.values():
            pairs.sort()

    def _reset_state(self) -> None:
        self.workers: dict[str, Worker] = {}
        self.store = JudgmentStore()
        self.vote_records: dict[str, VoteRecord] = {}
        self.final_tags: dict[str, FinalTag] = {}
        self.tie_queue: set[str] = set()
        self.manual_queue: set[str] = set()
        self.reservations: dict[str, Reservation] = {}
        self._page_counter = 0
        self._judgment_counter = 0

        for token_id, assignment in self.assignments.items():
            if assignment.kind == TaskKind.AUTOMATIC:
                self.final_tags[token_id] = FinalTag(token_id, assignment.tag, "automatic")
            elif assignment.kind == TaskKind.MANUAL:
                self.manual_queue.add(token_id)
        # the mapped Bangor vote is derived state: one per crowd-task token
        for token_id, assignment in self.assignments.items():
            if assignment.is_crowd:
                self.store.append(
                    Judgment(
                        judgment_id=f"b:{token_id}",
                        token_id=token_id,
                        worker_id="bangor",
                        tag=map_to_universal(self.tokens[token_id], self.mapping),
                        source=JudgmentSource.BANGOR_MAPPED,
                    )
                )

    # ---------------------------------------------------------------- events

    def _emit(self, event_type: str, data: dict) -> None:
        self.seq += 1
        record = {"seq": self.seq, "type": event_type, "data": data}
        self._log.write(json.dumps(record, ensure_ascii=False) + "\n")
        self._log.flush()
        self._apply(event_type, data)

    def _apply(self, event_type: str, data: dict) -> None:
        handler = getattr(self, f"_on_{event_type}")
        handler(data)

    def _on_worker_registered(self, d: dict) -> None:
        self.workers[d["worker_id"]] = Worker(
            worker_id=d["worker_id"],
            locale=d["locale"],
            spanish_certified=d["spanish_certified"],
            status=WorkerStatus(d.get("status", "unscreened")),
        )

    def _on_screening_graded(self, d: dict) -> None:
        worker = self.workers[d["worker_id"]]
        worker.status = WorkerStatus.ACTIVE if d["passed"] else WorkerStatus.REJECTED_QUIZ

    def _on_judgment_recorded(self, d: dict) -> None:
        self._judgment_counter += 1
        judgment = Judgment(
            judgment_id=d["judgment_id"],
            token_id=d["token_id"],
            worker_id=d["worker_id"],
            tag=UniversalTag(d["tag"]),
            source=JudgmentSource(d["source"]),
            is_test=d.get("is_test", False),
            submitted_at=d.get("submitted_at", 0.0),
        )
        self.store.append(judgment)
        if judgment.source == JudgmentSource.CROWD and not judgment.is_test:
            self._refresh_token(judgment.token_id)

    def _on_test_result_recorded(self, d: dict) -> None:
        worker = self.workers[d["worker_id"]]
        before = worker.status
        qc_mod.record_test_result(
            worker, d["correct"], self.qc_config, self.store, token_id=d["token_id"]
        )
        if worker.status == WorkerStatus.BANNED and before != WorkerStatus.BANNED:
            self._after_invalidation(worker.worker_id)

    def _on_worker_banned(self, d: dict) -> None:
        worker = self.workers[d["worker_id"]]
        worker.status = WorkerStatus.BANNED
        self.store.invalidate_worker(worker.worker_id)
        self._after_invalidation(worker.worker_id)

    def _on_tie_resolved(self, d: dict) -> None:
        token_id = d["token_id"]
        record = self.vote_records[token_id]
        final, _ = resolve_tie(record, UniversalTag(d["tag"]), d["expert_id"])
        self.final_tags[token_id] = final
        self.tie_queue.discard(token_id)
        self._append_expert_judgment(token_id, d)

    def _on_manual_tagged(self, d: dict) -> None:
        token_id = d["token_id"]
        self.final_tags[token_id] = FinalTag(token_id, UniversalTag(d["tag"]), "expert")
        self.manual_queue.discard(token_id)
        self._append_expert_judgment(token_id, d)

    def _append_expert_judgment(self, token_id: str, d: dict) -> None:
        self._judgment_counter += 1
        self.store.append(
            Judgment(
                judgment_id=f"e{self._judgment_counter}",
                token_id=token_id,
                worker_id=d["expert_id"],
                tag=UniversalTag(d["tag"]),
                source=JudgmentSource.EXPERT,
                submitted_at=d.get("submitted_at", 0.0),
            )
        )

    def _refresh_token(self, token_id: str) -> None:
        """Recompute one token's aggregation state from the store."""
        final = self.final_tags.get(token_id)
        if final is not None and final.source == "expert":
            return  # expert tags are gold; later invalidations do not reopen
        record = aggregate_token(token_id, self.store)
        if record is None:
            self.vote_records.pop(token_id, None)
            self.final_tags.pop(token_id, None)
            self.tie_queue.discard(token_id)
            return
        self.vote_records[token_id] = record
        if record.final_tag is not None:
            self.final_tags[token_id] = FinalTag(
                token_id, record.final_tag, "vote", split=record.split
            )
            self.tie_queue.discard(token_id)
        else:
            self.final_tags.pop(token_id, None)
            self.tie_queue.add(token_id)

    def _after_invalidation(self, worker_id: str) -> None:
        for token_id in sorted(self.store.tokens_touched_by(worker_id)):
            if token_id in self.test_by_token or token_id not in self.tokens:
                continue
            if self.assignments[token_id].is_crowd:
                self._refresh_token(token_id)

    # ---------------------------------------------------------------- digest

    def digest(self) -> str:
        state = {
            "seq": self.seq,
            "routing": self.routing_report.to_json(),
            "workers": [w.to_json() for _, w in sorted(self.workers.items())],
            "judgments": [j.to_json() for j in self.store.judgments],
            "vote_records": [r.to_json() for _, r in sorted(self.vote_records.items())],
            "final_tags": [
                {
                    "token_id": f.token_id,
                    "tag": f.tag.value,
                    "source": f.source,
                    "split": f.split.value if f.split else None,
                }
                for _, f in sorted(self.final_tags.items())
            ],
            "tie_queue": sorted(self.tie_queue),
            "manual_queue": sorted(self.manual_queue),
        }
        return hashlib.sha256(_canonical(state).encode("utf-8")).hexdigest()

    # ------------------------------------------------------------- workers

    def ensure_worker(self, worker_id: str, locale: str, spanish_certified: bool) -> Worker:
        with self.lock:
            worker = self.workers.get(worker_id)
            if worker is not None:
                return worker
            try:
                register_worker(worker_id, locale, spanish_certified, self.qc_config)
            except qc_mod.RegistrationError as exc:
                raise ForbiddenError(str(exc)) from None
            status = "unscreened" if self.screening_pool else "active"
            self._emit(
                "worker_registered",
                {
                    "worker_id": worker_id,
                    "locale": locale,
                    "spanish_certified": spanish_certified,
                    "status": status,
                },
            )
            return self.workers[worker_id]

    # ----------------------------------------------------------- screening

    def _screening_questions(self, worker_id: str) -> list[TestQuestion]:
        rng = random.Random(f"{self.seed}:screening:{worker_id}")
        pool = list(self.screening_pool)
        if len(pool) < 10:
            raise ConflictError("no screening quiz configured")
        picked = rng.sample(range(len(pool)), 10)
        return [pool[i] for i in picked]

    def get_screening(self, worker_id: str) -> dict:
        with self.lock:
            worker = self._require_worker(worker_id)
            if worker.status in (WorkerStatus.REJECTED_QUIZ, WorkerStatus.BANNED):
                raise ForbiddenError(f"worker is {worker.status.value}")
            if worker.status == WorkerStatus.ACTIVE:
                raise ConflictError("worker already screened")
            questions = self._screening_questions(worker_id)
            return {
                "worker_id": worker_id,
                "questions": [
                    self._card_payload(f"q{i}", tq.token_id) for i, tq in enumerate(questions)
                ],
            }

    def submit_screening(self, worker_id: str, answers: Sequence[dict]) -> dict:
        with self.lock:
            worker = self._require_worker(worker_id)
            if worker.status in (WorkerStatus.REJECTED_QUIZ, WorkerStatus.BANNED):
                raise ForbiddenError(f"worker is {worker.status.value}")
            if worker.status == WorkerStatus.ACTIVE:
                raise ConflictError("worker already screened")
            questions = self._screening_questions(worker_id)
            if len(answers) != len(questions):
                raise TrailRejected(f"expected {len(questions)} answers, got {len(answers)}")
            by_id = {a.get("item_id"): a for a in answers}
            picks: list[UniversalTag] = []
            for i, tq in enumerate(questions):
                a = by_id.get(f"q{i}")
                if a is None:
                    raise TrailRejected(f"missing answer for item q{i}")
                picks.append(self._replay_answer(tq.token_id, a))
            key = [tq.gold_tag for tq in questions]
            wrong = sum(1 for p, g in zip(picks, key) if p != g)
            passed = wrong < 2
            self._emit(
                "screening_graded",
                {
                    "worker_id": worker_id,
                    "picks": [p.value for p in picks],
                    "wrong": wrong,
                    "passed": passed,
                },
            )
            return {"passed": passed, "correct": 10 - wrong, "wrong": wrong}

    # ---------------------------------------------------------------- pages

    def _require_worker(self, worker_id: str) -> Worker:
        worker = self.workers.get(worker_id)
        if worker is None:
            raise NotFoundError(f"unknown worker {worker_id}")
        return worker

    def _purge_reservations(self) -> None:
        now = self.now_fn()
        for page_id in [p for p, r in self.reservations.items() if r.expires_at <= now]:
            del self.reservations[page_id]

    def _reserved_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for r in self.reservations.values():
            for item in r.page.items:
                if not item.is_test:
                    counts[item.token_id] = counts.get(item.token_id, 0) + 1
        return counts

    def next_page(self, worker_id: str) -> dict:
        with self.lock:
            worker = self._require_worker(worker_id)
            if worker.status != WorkerStatus.ACTIVE:
                raise ForbiddenError(f"worker is {worker.status.value}")
            self._purge_reservations()
            for r in self.reservations.values():
                if r.page.worker_id == worker_id:
                    return self._page_payload(r.page)

            reserved = self._reserved_counts()
            seen = self.store.tokens_touched_by(worker_id)
            eligible = []
            for token_id in self.crowd_pool:
                if token_id in seen:
                    continue
                committed = len(self.store.valid_crowd(token_id)) + reserved.get(token_id, 0)
                if committed < 2 and self.final_tags.get(token_id) is None:
                    eligible.append(token_id)
            page_id = f"p{self._page_counter}"
            try:
                page = build_page(
                    page_id,
                    worker,
                    eligible,
                    self.page_test_pool,
                    f"{self.seed}:page:{page_id}:{worker_id}",
                    item_price=self._price_for_token,
                )
            except (PartialPageError, TestPoolExhausted) as exc:
                raise ConflictError(str(exc)) from None
            self._page_counter += 1
            item_map = {
                item.item_id: (item.token_id, self.assignments[item.token_id])
                for item in page.items
            }
            self.reservations[page_id] = Reservation(
                page=page,
                expires_at=self.now_fn() + self.reservation_ttl,
                assignments=item_map,
            )
            return self._page_payload(page)

    def _price_for_token(self, token_id: str) -> int:
        kind = self.assignments[token_id].kind.value
        return int(self.qc_config.prices_cents.get(kind, 0))

    def submit_page(self, worker_id: str, page_id: str, answers: Sequence[dict]) -> dict:
        with self.lock:
            worker = self._require_worker(worker_id)
            reservation = self.reservations.get(page_id)
            if reservation is None:
                raise GoneError(f"page {page_id} is not reserved (unknown or expired)")
            if reservation.page.worker_id != worker_id:
                raise ForbiddenError("page reserved by another worker")
            if reservation.expires_at <= self.now_fn():
                del self.reservations[page_id]
                raise GoneError(f"page {page_id} expired")
            if worker.status != WorkerStatus.ACTIVE:
                raise ForbiddenError(f"worker is {worker.status.value}")

            page = reservation.page
            by_id = {a.get("item_id"): a for a in answers}
            if set(by_id) != {i.item_id for i in page.items} or len(answers) != 10:
                raise TrailRejected("answers must cover exactly the 10 page items")
            # replay every trail before recording anything
            tags: dict[str, UniversalTag] = {}
            for item in page.items:
                tags[item.item_id] = self._replay_answer(item.token_id, by_id[item.item_id])

            now = self.now_fn()
            for item in page.items:
                tag = tags[item.item_id]
                # the reducer owns the counter; peek at the next id
                self._emit(
                    "judgment_recorded",
                    {
                        "judgment_id": f"j{self._judgment_counter + 1}",
                        "token_id": item.token_id,
                        "worker_id": worker_id,
                        "tag": tag.value,
                        "source": "crowd",
                        "is_test": item.is_test,
                        "submitted_at": now,
                    },
                )
                if item.is_test:
                    gold = self.test_by_token[item.token_id].gold_tag
                    self._emit(
                        "test_result_recorded",
                        {
                            "worker_id": worker_id,
                            "token_id": item.token_id,
                            "correct": tag == gold,
                        },
                    )
            del self.reservations[page_id]
            return {
                "page_id": page_id,
                "accepted": len(page.items),
                "worker_status": worker.status.value,
            }

    def _replay_answer(self, token_id: str, answer: dict) -> UniversalTag:
        token = self.tokens[token_id]
        assignment = self.assignments[token_id]
        raw = answer.get("trail")
        if raw is None and "answer_index" in answer:
            qid = assignment.question_id or ""
            raw = [{"node": qid, "answer_index": answer["answer_index"]}]
        if not isinstance(raw, list) or not raw:
            raise TrailRejected(f"item {token_id}: missing answer trail")
        try:
            trail = [(str(s["node"]), int(s["answer_index"])) for s in raw]
        except (KeyError, TypeError, ValueError):
            raise TrailRejected(f"item {token_id}: malformed trail") from None
        try:
            return replay_trail(token, assignment, self.bank, trail)
        except SessionError as exc:
            raise TrailRejected(f"item {token_id}: {exc}") from None

    # ------------------------------------------------------------ payloads

    def _card_payload(self, item_id: str, token_id: str) -> dict:
        token = self.tokens[token_id]
        assignment = self.assignments[token_id]
        pairs = self._utterance_index[token.utterance_id]
        card = {
            "item_id": item_id,
            "token_id": token.token_id,
            "surface": token.surface,
            "context": token.context,
            "context_tokens": [s for _, s in pairs],
            "target_index": next(i for i, (p, _) in enumerate(pairs) if p == token.position),
        }
        if assignment.kind == TaskKind.TSQ:
            entry = self.bank.tsqs[assignment.question_id]
            card["task"] = {
                "kind": "tsq",
                "question_id": entry.question_id,
                "prompt": render_prompt(entry.prompt, token),
                "answers": [{"text": a.text, "example": a.example} for a in entry.answers],
            }
        else:
            lang = LangId.ENG if assignment.kind == TaskKind.ENG_QT else LangId.SPA
            tree = self.bank.tree_for_lang(lang)
            nodes = {}
            for node_id, node in tree.nodes.items():
                nodes[node_id] = {
                    "prompt": render_prompt(node.prompt, token),
                    "answers": [
                        {"text": a.text, "example": a.example, "next": a.next_node}
                        for a in node.answers  # leaf tags are never serialized
                    ],
                }
            card["task"] = {
                "kind": "tree",
                "tree_id": tree.tree_id,
                "root": tree.root,
                "nodes": nodes,
            }
        return card

    def _page_payload(self, page: Page) -> dict:
        return {
            "page_id": page.page_id,
            "price_cents": page.price_cents,
            "items": [self._card_payload(i.item_id, i.token_id) for i in page.items],
        }

    # --------------------------------------------------------------- expert

    def list_ties(self) -> list[dict]:
        with self.lock:
            out = []
            for token_id in sorted(self.tie_queue):
                token = self.tokens[token_id]
                record = self.vote_records[token_id]
                out.append(
                    {
                        "token_id": token_id,
                        "surface": token.surface,
                        "context": token.context,
                        "lang": token.lang.value,
                        "tags": sorted(t.value for t in record.tied),
                    }
                )
            return out

    def resolve_tie_token(self, token_id: str, tag_name: str, expert_id: str) -> dict:
        with self.lock:
            if token_id not in self.tokens:
                raise NotFoundError(f"unknown token {token_id}")
            if token_id not in self.tie_queue:
                raise ConflictError(f"token {token_id} is not tied")
            tag = parse_tag(tag_name)
            record = self.vote_records[token_id]
            _, warning = resolve_tie(record, tag, expert_id)
            self._emit(
                "tie_resolved",
                {
                    "token_id": token_id,
                    "tag": tag.value,
                    "expert_id": expert_id,
                    "submitted_at": self.now_fn(),
                },
            )
            return {"token_id": token_id, "tag": tag.value, "warning": warning}

    def manual_tasks(self) -> list[dict]:
        with self.lock:
            out = []
            for token_id in sorted(self.manual_queue):
                token = self.tokens[token_id]
                out.append(
                    {
                        "token_id": token_id,
                        "surface": token.surface,
                        "context": token.context,
                        "lang": token.lang.value,
                    }
                )
            return out

    def tag_manual(self, token_id: str, tag_name: str, expert_id: str) -> dict:
        with self.lock:
            if token_id not in self.tokens:
                raise NotFoundError(f"unknown token {token_id}")
            if token_id not in self.manual_queue:
                raise ConflictError(f"token {token_id} is not queued for manual tagging")
            tag = parse_tag(tag_name)
            self._emit(
                "manual_tagged",
                {
                    "token_id": token_id,
                    "tag": tag.value,
                    "expert_id": expert_id,
                    "submitted_at": self.now_fn(),
                },
            )
            return {"token_id": token_id, "tag": tag.value}

    # ---------------------------------------------------------------- admin

    def ban_worker(self, worker_id: str, dry_run: bool = False) -> dict:
        with self.lock:
            worker = self._require_worker(worker_id)
            if worker.status == WorkerStatus.BANNED:
                raise ConflictError(f"worker {worker_id} already banned")
            would_invalidate = sum(
                1
                for j in self.store.for_worker(worker_id)
                if j.valid and j.source == JudgmentSource.CROWD
            )
            if dry_run:
                return {"worker_id": worker_id, "would_invalidate": would_invalidate, "dry_run": True}
            self._emit("worker_banned", {"worker_id": worker_id, "reason": "admin"})
            return {"worker_id": worker_id, "invalidated": would_invalidate, "dry_run": False}

    # -------------------------------------------------------------- reports

    def build_test_judgment_sets(self) -> dict[str, list[TestJudgmentSet]]:
        sets: dict[str, list[TestJudgmentSet]] = {"tsq": [], "eng_qt": [], "spa_qt": []}
        for tq in self.test_questions:
            if "page" not in tq.pools:
                continue
            crowd = tuple(
                j.tag
                for j in self.store.for_token(tq.token_id)
                if j.is_test and j.valid and j.source == JudgmentSource.CROWD
            )
            bangor = self.store.bangor_judgment(tq.token_id)
            sets.setdefault(tq.task, []).append(
                TestJudgmentSet(
                    question_id=tq.token_id,
                    task=tq.task,
                    gold=tq.gold_tag,
                    bangor=bangor.tag if bangor else self.mapping.fallback,
                    crowd=crowd,
                )
            )
        return sets

    def reports(self, task: str | None = None) -> dict:
        with self.lock:
            tests = self.build_test_judgment_sets()
            records_by_task: dict[str, list[VoteRecord]] = {"tsq": [], "eng_qt": [], "spa_qt": []}
            for token_id, record in self.vote_records.items():
                records_by_task[self.assignments[token_id].kind.value].append(record)
            tasks = [task] if task else ["tsq", "eng_qt", "spa_qt"]
            metrics = {
                t: metrics_report(t, tests[t], records_by_task[t], seed=self.seed).to_json()
                for t in tasks
            }
            expert_final = sum(1 for f in self.final_tags.values() if f.source == "expert")
            return {
                "routing": self.routing_report.to_json(),
                "metrics": metrics,
                "progress": {
                    "corpus_tokens": len(self.tokens_list),
                    "final_tags": len(self.final_tags),
                    "pending_crowd": sum(
                        1 for t in self.crowd_pool if t not in self.final_tags
                    ),
                    "ties_pending": len(self.tie_queue),
                    "manual_pending": len(self.manual_queue),
                    "expert_final": expert_final,
                    "expert_share_percent": round(
                        100.0 * expert_final / len(self.tokens_list), 2
                    )
                    if self.tokens_list
                    else 0.0,
                },
            }

    def export_rows(self) -> list[tuple[str, str, str, str, str, str]]:
        with self.lock:
            rows = []
            for token in self.tokens_list:
                final = self.final_tags.get(token.token_id)
                if final is None:
                    continue
                rows.append(
                    (
                        token.token_id,
                        token.surface,
                        token.lang.value,
                        final.tag.value,
                        final.source,
                        final.split.value if final.split else "",
                    )
                )
            return rows

    def close(self) -> None:
        self._log.close()
