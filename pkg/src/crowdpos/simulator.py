"""Synthetic worker populations driving the real pipeline end to end.

Workers are generative models (per-task reliability, a confusion
distribution over wrong tags, quiz skill). Every simulated judgment passes
through the real screening, page construction, test-question scoring,
banning, and aggregation code paths. Analytic companions enumerate the
exact expected majority-vote accuracy and split distribution so simulated
runs can be checked against closed-form values.

Randomness derives from a single root seed: every stream (golds, Bangor
tags, per-worker draws, per-page shuffles) is seeded from a distinct
string key, so runs are reproducible and order-robust.
"""

import json
import random
from collections import Counter, deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .aggregate import (
    Judgment,
    JudgmentSource,
    JudgmentStore,
    Split,
    VoteRecord,
    aggregate_token,
)
from .corpus import MappingTable, Token, load_mapping, map_to_universal, parse_corpus_file
from .metrics import MetricsReport, TestJudgmentSet, metrics_report
from .qc import (
    PartialPageError,
    QcConfig,
    TestPoolExhausted,
    TestQuestion,
    Worker,
    WorkerStatus,
    build_page,
    grade_screening,
    load_test_questions,
    record_test_result,
    register_worker,
)
from .question_bank import QuestionBank, load_bank, replay_trail, tree_paths
from .router import TaskAssignment, TaskKind, WordLists, assign_task, load_wordlists
from .tags import ALL_TAGS, LangId, UniversalTag


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class WorkerModel:
    """Generative model of one annotator.

    reliability: probability of emitting the gold tag, either one float or
    a per-task map; confusion: per-gold-tag distribution over the 16 wrong
    tags (None = uniform); quiz_skill: probability of answering a screening
    question correctly.
    """

    worker_id: str
    reliability: float | dict = 1.0
    confusion: dict | None = None  # UniversalTag -> {UniversalTag: prob over wrong tags}
    quiz_skill: float = 1.0

    def __post_init__(self):
        for p in self._reliability_values():
            if not 0.0 <= p <= 1.0:
                raise SimulationError(f"reliability {p} outside [0, 1]")
        if not 0.0 <= self.quiz_skill <= 1.0:
            raise SimulationError(f"quiz_skill {self.quiz_skill} outside [0, 1]")
        if self.confusion is not None:
            for gold, row in self.confusion.items():
                if gold in row:
                    raise SimulationError(f"confusion row for {gold} includes the gold tag")
                total = sum(row.values())
                if abs(total - 1.0) > 1e-9:
                    raise SimulationError(f"confusion row for {gold} sums to {total}, not 1")

    def _reliability_values(self):
        if isinstance(self.reliability, dict):
            return list(self.reliability.values())
        return [self.reliability]

    def reliability_for(self, task: str) -> float:
        if isinstance(self.reliability, dict):
            return self.reliability[task]
        return self.reliability

    def draw_tag(self, gold: UniversalTag, task: str, rng: random.Random) -> UniversalTag:
        if rng.random() < self.reliability_for(task):
            return gold
        return self.draw_wrong(gold, rng)

    def draw_wrong(self, gold: UniversalTag, rng: random.Random) -> UniversalTag:
        if self.confusion is None:
            others = _OTHERS[gold]
            return others[rng.randrange(len(others))]
        row = self.confusion[gold]
        x = rng.random()
        acc = 0.0
        last = None
        for tag, p in row.items():
            acc += p
            last = tag
            if x < acc:
                return tag
        return last


_OTHERS: dict[UniversalTag, tuple[UniversalTag, ...]] = {
    g: tuple(t for t in ALL_TAGS if t != g) for g in ALL_TAGS
}


def calibrate(target_single_judgment_accuracy: float) -> WorkerModel:
    """Worker model whose expected per-judgment accuracy equals the target
    (uniform confusion over the 16 wrong tags)."""
    if not 0.0 <= target_single_judgment_accuracy <= 1.0:
        raise SimulationError("target accuracy must be in [0, 1]")
    return WorkerModel(worker_id="calibrated", reliability=target_single_judgment_accuracy)


def _emit_probability(
    tag: UniversalTag, gold: UniversalTag, p: float, confusion: dict | None
) -> float:
    if tag == gold:
        return p
    if confusion is None:
        return (1.0 - p) / 16.0
    return (1.0 - p) * confusion[gold].get(tag, 0.0)


def _mv_credit(t1: UniversalTag, t2: UniversalTag, tb: UniversalTag, gold: UniversalTag) -> float:
    if t1 == t2 or t1 == tb:
        return 1.0 if t1 == gold else 0.0
    if t2 == tb:
        return 1.0 if t2 == gold else 0.0
    return (1.0 / 3.0) if gold in (t1, t2, tb) else 0.0


def analytic_mv_accuracy(
    p_crowd: float,
    p_bangor: float,
    confusion: dict | None = None,
    bangor_confusion: dict | None = None,
) -> float:
    """Exact expected majority-vote accuracy (fractional tie credit) by
    enumerating all (tag1, tag2, bangor) outcomes under independence.

    With per-gold confusion rows the value is averaged uniformly over gold
    tags; with uniform confusion it is gold-invariant.
    """
    for p in (p_crowd, p_bangor):
        if not 0.0 <= p <= 1.0:
            raise SimulationError(f"probability {p} outside [0, 1]")
    golds = ALL_TAGS if (confusion is not None or bangor_confusion is not None) else ALL_TAGS[:1]
    total = 0.0
    for gold in golds:
        acc = 0.0
        for t1 in ALL_TAGS:
            p1 = _emit_probability(t1, gold, p_crowd, confusion)
            if p1 == 0.0:
                continue
            for t2 in ALL_TAGS:
                p2 = _emit_probability(t2, gold, p_crowd, confusion)
                if p2 == 0.0:
                    continue
                p12 = p1 * p2
                for tb in ALL_TAGS:
                    pb = _emit_probability(tb, gold, p_bangor, bangor_confusion)
                    if pb == 0.0:
                        continue
                    acc += p12 * pb * _mv_credit(t1, t2, tb, gold)
        total += acc
    return total / len(golds)


def analytic_split_percentages(
    p_crowd: float,
    p_bangor: float,
    confusion: dict | None = None,
    bangor_confusion: dict | None = None,
) -> dict[Split, float]:
    """Exact expected Table-3-style split distribution (percent), by the
    same enumeration as analytic_mv_accuracy."""
    golds = ALL_TAGS if (confusion is not None or bangor_confusion is not None) else ALL_TAGS[:1]
    sums = {s: 0.0 for s in Split}
    for gold in golds:
        for t1 in ALL_TAGS:
            p1 = _emit_probability(t1, gold, p_crowd, confusion)
            if p1 == 0.0:
                continue
            for t2 in ALL_TAGS:
                p2 = _emit_probability(t2, gold, p_crowd, confusion)
                if p2 == 0.0:
                    continue
                p12 = p1 * p2
                for tb in ALL_TAGS:
                    pb = _emit_probability(tb, gold, p_bangor, bangor_confusion)
                    if pb == 0.0:
                        continue
                    prob = p12 * pb
                    if t1 == t2 == tb:
                        sums[Split.UNANIMOUS_3_0] += prob
                    elif t1 != t2 and tb != t1 and tb != t2:
                        sums[Split.THREE_WAY_1_1_1] += prob
                    elif t1 == t2:
                        sums[Split.BANGOR_IN_MINORITY_2_1] += prob
                    else:
                        sums[Split.BANGOR_IN_MAJORITY_2_1] += prob
    n = len(golds)
    return {s: 100.0 * v / n for s, v in sums.items()}


@dataclass
class SimConfig:
    """Inputs for one simulation run; seed is mandatory.

    Fixture fields hold loaded objects; from_file resolves paths relative
    to the config file's directory.
    """

    seed: int
    workers: list[WorkerModel]
    corpus: list[Token]
    lists: WordLists
    bank: QuestionBank
    mapping: MappingTable
    golds: dict[str, UniversalTag]
    test_questions: list[TestQuestion]
    bangor_accuracy: float | None = 0.8  # None: map the corpus Bangor tags instead
    bangor_confusion: dict | None = None
    pages_per_worker: int | None = None
    qc: QcConfig = field(default_factory=QcConfig)
    with_reports: bool = True  # skip the metrics tables on huge convergence runs

    def __post_init__(self):
        if self.seed is None:
            raise SimulationError("seed is mandatory")
        if self.bangor_accuracy is not None and not 0.0 <= self.bangor_accuracy <= 1.0:
            raise SimulationError("bangor_accuracy outside [0, 1]")

    @classmethod
    def from_file(cls, path: str | Path) -> "SimConfig":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        base = path.parent
        fx = doc["fixtures"]

        def resolve(p: str) -> Path:
            q = Path(p)
            if q.exists():
                return q
            return base / p

        corpus = parse_corpus_file(resolve(fx["corpus"]))
        golds_doc = json.loads(Path(resolve(fx["golds"])).read_text(encoding="utf-8"))
        workers = []
        idx = 0
        for group in doc["workers"]:
            for _ in range(int(group.get("count", 1))):
                workers.append(
                    WorkerModel(
                        worker_id=f"sw{idx:04d}",
                        reliability=group.get("reliability", 1.0),
                        quiz_skill=group.get("quiz_skill", 1.0),
                    )
                )
                idx += 1
        return cls(
            seed=int(doc["seed"]),
            workers=workers,
            corpus=corpus,
            lists=load_wordlists(resolve(fx["lists"])),
            bank=load_bank(resolve(fx["bank"])),
            mapping=load_mapping(resolve(fx["mapping"])),
            golds={k: UniversalTag(v) for k, v in golds_doc.items()},
            test_questions=load_test_questions(resolve(fx["test_questions"])),
            bangor_accuracy=doc.get("bangor_accuracy", 0.8),
            pages_per_worker=doc.get("pages_per_worker"),
            qc=QcConfig.from_json(doc.get("qc", {})),
        )


class _TrailIndex:
    """Per-assignment map from a terminal tag to the answer trail reaching
    it; unreachable tags fall back to the first path (counted)."""

    def __init__(self, bank: QuestionBank):
        self._bank = bank
        self._tsq: dict[str, dict] = {}
        self._tree: dict[TaskKind, dict] = {}

    def trails_for(self, assignment: TaskAssignment) -> dict:
        if assignment.kind == TaskKind.TSQ:
            qid = assignment.question_id
            if qid not in self._tsq:
                entry = self._bank.tsqs[qid]
                by_tag = {}
                for i, a in enumerate(entry.answers):
                    by_tag.setdefault(a.tag, [(qid, i)])
                self._tsq[qid] = {"by_tag": by_tag, "fallback": [(qid, 0)]}
            return self._tsq[qid]
        if assignment.kind not in self._tree:
            lang = LangId.ENG if assignment.kind == TaskKind.ENG_QT else LangId.SPA
            tree = self._bank.tree_for_lang(lang)
            by_tag = {}
            first = None
            for trail, tag in tree_paths(tree):
                if first is None:
                    first = list(trail)
                by_tag.setdefault(tag, list(trail))
            self._tree[assignment.kind] = {"by_tag": by_tag, "fallback": first}
        return self._tree[assignment.kind]


@dataclass
class SimulationTrace:
    seed: int
    store: JudgmentStore
    workers: dict[str, Worker]
    vote_records: dict[str, VoteRecord]
    golds: dict[str, UniversalTag]
    pages_built: int = 0
    completed_tokens: int = 0
    pending_tokens: int = 0
    rejected_workers: int = 0
    banned_workers: int = 0
    unreachable_tag_fallbacks: int = 0
    reports: dict[str, MetricsReport] = field(default_factory=dict)

    def mv_accuracy_vs_gold(self) -> float:
        """Fractional-credit accuracy of aggregated outcomes against the
        generative gold tags, over completed tokens."""
        if not self.vote_records:
            raise SimulationError("no aggregated tokens")
        total = Fraction(0)
        n = 0
        for token_id, record in self.vote_records.items():
            gold = self.golds.get(token_id)
            if gold is None:
                continue
            n += 1
            if record.final_tag is not None:
                total += int(record.final_tag == gold)
            elif gold in record.tied:
                total += Fraction(1, len(record.tied))
        if n == 0:
            raise SimulationError("no aggregated tokens with golds")
        return float(total / n)

    def split_percentages(self) -> dict[Split, float]:
        counts = Counter(r.split for r in self.vote_records.values())
        total = sum(counts.values())
        return {s: 100.0 * counts.get(s, 0) / total for s in Split}

    def judgment_log_ndjson(self) -> str:
        return "".join(json.dumps(j.to_json(), sort_keys=True) + "\n" for j in self.store.judgments)


def simulate(config: SimConfig) -> SimulationTrace:
    """Run the full pipeline over synthetic workers; deterministic given
    the config seed."""
    tokens = {t.token_id: t for t in config.corpus}
    assignments = {t.token_id: assign_task(t, config.lists) for t in config.corpus}

    test_by_id = {tq.token_id: tq for tq in config.test_questions}
    for tq in config.test_questions:
        if tq.token_id not in tokens:
            raise SimulationError(f"test question {tq.token_id} not in the corpus")
        if assignments[tq.token_id].kind.value != tq.task:
            raise SimulationError(
                f"test question {tq.token_id} declares task {tq.task} but routes to "
                f"{assignments[tq.token_id].kind.value}"
            )
    screening_pool = [tq for tq in config.test_questions if "screening" in tq.pools]
    page_test_pool = [tq for tq in config.test_questions if "page" in tq.pools]

    crowd_tokens = [
        t.token_id
        for t in config.corpus
        if assignments[t.token_id].is_crowd and t.token_id not in test_by_id
    ]
    missing_golds = [t for t in crowd_tokens if t not in config.golds]
    if missing_golds:
        raise SimulationError(f"{len(missing_golds)} crowd tokens lack gold tags (e.g. {missing_golds[0]})")
    if not page_test_pool:
        raise SimulationError("no page test questions configured")

    store = JudgmentStore()
    trail_index = _TrailIndex(config.bank)
    warnings = 0

    # the Bangor vote (real tokens and test questions alike): generated from
    # gold at the configured accuracy, or mapped from the corpus tag when
    # bangor_accuracy is None
    bangor_rng = random.Random(f"{config.seed}:bangor")
    bangor_model = WorkerModel(worker_id="bangor", reliability=1.0, confusion=config.bangor_confusion)
    gold_of = dict(config.golds)
    for tq in config.test_questions:
        gold_of.setdefault(tq.token_id, tq.gold_tag)
    for token_id in crowd_tokens + [tq.token_id for tq in config.test_questions]:
        gold = gold_of[token_id]
        if config.bangor_accuracy is None:
            tag = map_to_universal(tokens[token_id], config.mapping)
        elif bangor_rng.random() < config.bangor_accuracy:
            tag = gold
        else:
            tag = bangor_model.draw_wrong(gold, bangor_rng)
        store.append(
            Judgment(
                judgment_id=f"b:{token_id}",
                token_id=token_id,
                worker_id="bangor",
                tag=tag,
                source=JudgmentSource.BANGOR_MAPPED,
            )
        )

    # screening
    workers: dict[str, Worker] = {}
    models: dict[str, WorkerModel] = {}
    rejected = 0
    for model in config.workers:
        worker = register_worker(model.worker_id, "US", True, config.qc)
        quiz_rng = random.Random(f"{config.seed}:quiz:{model.worker_id}")
        if len(screening_pool) >= 10:
            quiz = screening_pool[:10]
            key = [tq.gold_tag for tq in quiz]
            picks = [
                tq.gold_tag
                if quiz_rng.random() < model.quiz_skill
                else model.draw_wrong(tq.gold_tag, quiz_rng)
                for tq in quiz
            ]
            if not grade_screening(worker, picks, key):
                rejected += 1
                workers[worker.worker_id] = worker
                continue
        else:
            worker.status = WorkerStatus.ACTIVE  # no quiz configured
        workers[worker.worker_id] = worker
        models[worker.worker_id] = model

    # scheduling state: each pending token appears in the deque exactly once
    needs = {t: 2 for t in crowd_tokens}
    pending = deque(crowd_tokens)
    in_deque = set(crowd_tokens)
    seen_by: dict[str, set[str]] = {w: set() for w in models}
    vote_records: dict[str, VoteRecord] = {}
    judgment_seq = 0
    pages_built = 0
    pages_by_worker = {w: 0 for w in models}
    draw_rngs = {w: random.Random(f"{config.seed}:draw:{w}") for w in models}

    def answer_item(worker: Worker, model: WorkerModel, token_id: str, is_test: bool) -> Judgment:
        nonlocal judgment_seq, warnings
        token = tokens[token_id]
        assignment = assignments[token_id]
        gold = test_by_id[token_id].gold_tag if is_test else config.golds[token_id]
        rng = draw_rngs[worker.worker_id]
        wanted = model.draw_tag(gold, assignment.kind.value, rng)
        index = trail_index.trails_for(assignment)
        trail = index["by_tag"].get(wanted)
        if trail is None:
            trail = index["fallback"]
            warnings += 1
        tag = replay_trail(token, assignment, config.bank, trail)
        judgment_seq += 1
        judgment = Judgment(
            judgment_id=f"j{judgment_seq}",
            token_id=token_id,
            worker_id=worker.worker_id,
            tag=tag,
            source=JudgmentSource.CROWD,
            is_test=is_test,
            submitted_at=float(judgment_seq),
        )
        store.append(judgment)
        if is_test:
            before = worker.status
            record_test_result(worker, tag == gold, config.qc, store, token_id=token_id)
            if worker.status == WorkerStatus.BANNED and before != WorkerStatus.BANNED:
                for touched in store.tokens_touched_by(worker.worker_id):
                    if touched in test_by_id or touched not in needs:
                        continue
                    vote_records.pop(touched, None)
                    needs[touched] = max(0, 2 - len(store.valid_crowd(touched)))
                    if needs[touched] > 0 and touched not in in_deque:
                        pending.append(touched)
                        in_deque.add(touched)
        return judgment

    def gather_real(worker_id: str) -> list[str] | None:
        picked: list[str] = []
        stashed: list[str] = []
        while pending and len(picked) < 9:
            token_id = pending.popleft()
            in_deque.discard(token_id)
            if needs.get(token_id, 0) <= 0:
                continue
            if token_id in seen_by[worker_id]:
                stashed.append(token_id)
                continue
            picked.append(token_id)
        for token_id in stashed:
            pending.append(token_id)
            in_deque.add(token_id)
        if len(picked) < 9:
            for token_id in picked:  # put them back; no partial pages
                pending.append(token_id)
                in_deque.add(token_id)
            return None
        return picked

    active = [w for w in models if workers[w].status == WorkerStatus.ACTIVE]
    progress = True
    while progress:
        progress = False
        for worker_id in active:
            worker = workers[worker_id]
            if worker.status != WorkerStatus.ACTIVE:
                continue
            if config.pages_per_worker is not None and pages_by_worker[worker_id] >= config.pages_per_worker:
                continue
            picked = gather_real(worker_id)
            if picked is None:
                continue
            try:
                page = build_page(
                    f"p{pages_built}",
                    worker,
                    picked,
                    page_test_pool,
                    f"{config.seed}:page:{pages_built}",
                )
            except (PartialPageError, TestPoolExhausted):
                for token_id in picked:
                    pending.append(token_id)
                    in_deque.add(token_id)
                continue
            pages_built += 1
            pages_by_worker[worker_id] += 1
            progress = True
            model = models[worker_id]
            for item in page.items:
                if item.is_test:
                    answer_item(worker, model, item.token_id, is_test=True)
                    continue
                judgment = answer_item(worker, model, item.token_id, is_test=False)
                seen_by[worker_id].add(item.token_id)
                if judgment.valid:  # post-ban appends arrive pre-invalidated
                    needs[item.token_id] -= 1
                if needs[item.token_id] > 0:
                    if item.token_id not in in_deque:
                        pending.append(item.token_id)
                        in_deque.add(item.token_id)
                else:
                    record = aggregate_token(item.token_id, store)
                    if record is not None:
                        vote_records[item.token_id] = record

    banned = sum(1 for w in workers.values() if w.status == WorkerStatus.BANNED)
    trace = SimulationTrace(
        seed=config.seed,
        store=store,
        workers=workers,
        vote_records=vote_records,
        golds=dict(config.golds),
        pages_built=pages_built,
        completed_tokens=len(vote_records),
        pending_tokens=sum(1 for t in crowd_tokens if needs[t] > 0),
        rejected_workers=rejected,
        banned_workers=banned,
        unreachable_tag_fallbacks=warnings,
    )
    if config.with_reports:
        trace.reports = _build_reports(config, assignments, store, vote_records)
    return trace


def _build_reports(
    config: SimConfig,
    assignments: dict[str, TaskAssignment],
    store: JudgmentStore,
    vote_records: dict[str, VoteRecord],
) -> dict[str, MetricsReport]:
    tests_by_task: dict[str, list[TestJudgmentSet]] = {k.value: [] for k in TaskKind if k.value}
    for tq in config.test_questions:
        if "page" not in tq.pools:
            continue  # screening questions never collect page judgments
        crowd = tuple(
            j.tag for j in store.for_token(tq.token_id) if j.is_test and j.valid
        )
        bangor = store.bangor_judgment(tq.token_id)
        bangor_tag = bangor.tag if bangor else config.mapping.fallback
        tests_by_task.setdefault(tq.task, []).append(
            TestJudgmentSet(
                question_id=tq.token_id,
                task=tq.task,
                gold=tq.gold_tag,
                bangor=bangor_tag,
                crowd=crowd,
            )
        )
    records_by_task: dict[str, list[VoteRecord]] = {}
    for token_id, record in vote_records.items():
        records_by_task.setdefault(assignments[token_id].kind.value, []).append(record)
    out = {}
    for task in ("tsq", "eng_qt", "spa_qt"):
        out[task] = metrics_report(
            task,
            tests_by_task.get(task, []),
            records_by_task.get(task, []),
            seed=config.seed,
        )
    return out
