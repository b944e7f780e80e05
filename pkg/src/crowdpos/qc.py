"""Worker lifecycle and quality control.

Workers are pre-screened with a ten-question quiz (two or more misses deny
access), every page carries one hidden test question, and a worker whose
cumulative test accuracy drops below the threshold after a grace window is
banned with all judgments discarded.
"""

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

from .aggregate import JudgmentStore
from .tags import UniversalTag, parse_tag


class QcError(ValueError):
    pass


class RegistrationError(QcError):
    pass


class PartialPageError(QcError):
    pass


class TestPoolExhausted(QcError):
    __test__ = False  # not a pytest class


class WorkerStatus(str, Enum):
    UNSCREENED = "unscreened"
    ACTIVE = "active"
    REJECTED_QUIZ = "rejected_quiz"
    BANNED = "banned"

    def __str__(self) -> str:
        return self.value


@dataclass
class Worker:
    worker_id: str
    locale: str
    spanish_certified: bool
    status: WorkerStatus = WorkerStatus.UNSCREENED
    test_answered: int = 0
    test_correct: int = 0
    tests_seen: set[str] = field(default_factory=set)

    @property
    def test_accuracy(self) -> float:
        if self.test_answered == 0:
            return 1.0
        return self.test_correct / self.test_answered

    def to_json(self) -> dict:
        return {
            "worker_id": self.worker_id,
            "locale": self.locale,
            "spanish_certified": self.spanish_certified,
            "status": self.status.value,
            "test_answered": self.test_answered,
            "test_correct": self.test_correct,
            "tests_seen": sorted(self.tests_seen),
        }


@dataclass(frozen=True)
class QcConfig:
    grace_min: int = 5
    threshold: float = 0.85
    allowed_locales: frozenset[str] | None = None  # None means any
    require_spanish_certified: bool = True
    prices_cents: dict = field(default_factory=lambda: {"tsq": 5, "eng_qt": 6, "spa_qt": 6})

    @classmethod
    def from_json(cls, doc: dict) -> "QcConfig":
        locales = doc.get("allowed_locales")
        return cls(
            grace_min=int(doc.get("grace_min", 5)),
            threshold=float(doc.get("threshold", 0.85)),
            allowed_locales=frozenset(locales) if locales is not None else None,
            require_spanish_certified=bool(doc.get("require_spanish_certified", True)),
            prices_cents=dict(doc.get("prices_cents", {"tsq": 5, "eng_qt": 6, "spa_qt": 6})),
        )


@dataclass(frozen=True, slots=True)
class TestQuestion:
    """An item with an expert gold tag, hidden one per page."""

    __test__ = False  # not a pytest class

    token_id: str
    task: str  # tsq | eng_qt | spa_qt
    gold_tag: UniversalTag
    pools: frozenset[str] = frozenset({"page"})  # "screening" and/or "page"


def load_test_questions(path: str | Path) -> list[TestQuestion]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    out = []
    for i, e in enumerate(doc):
        try:
            out.append(
                TestQuestion(
                    token_id=str(e["token_id"]),
                    task=str(e["task"]),
                    gold_tag=parse_tag(str(e["gold"])),
                    pools=frozenset(e.get("pools", ["page"])),
                )
            )
        except (KeyError, ValueError) as exc:
            raise QcError(f"test question {i}: {exc}") from None
    return out


@dataclass(frozen=True, slots=True)
class PageItem:
    item_id: str
    token_id: str
    is_test: bool = False


@dataclass(frozen=True)
class Page:
    page_id: str
    worker_id: str
    items: tuple[PageItem, ...]  # exactly 10 ordered items, exactly 1 test
    price_cents: int = 0

    @property
    def test_item(self) -> PageItem:
        return next(i for i in self.items if i.is_test)

    @property
    def real_items(self) -> tuple[PageItem, ...]:
        return tuple(i for i in self.items if not i.is_test)


def register_worker(worker_id: str, locale: str, spanish_certified: bool, config: QcConfig) -> Worker:
    if config.allowed_locales is not None and locale not in config.allowed_locales:
        raise RegistrationError(f"locale {locale} is not allowed")
    if config.require_spanish_certified and not spanish_certified:
        raise RegistrationError("Spanish language certification is required")
    return Worker(worker_id=worker_id, locale=locale, spanish_certified=spanish_certified)


def grade_screening(worker: Worker, picks: Sequence, key: Sequence) -> bool:
    """Grade the ten-question entry quiz; fail (and reject) iff two or more
    answers are wrong."""
    if worker.status != WorkerStatus.UNSCREENED:
        raise QcError(f"worker {worker.worker_id} is {worker.status.value}, not unscreened")
    if len(picks) != 10 or len(key) != 10:
        raise QcError(f"screening requires exactly 10 answers, got {len(picks)}")
    wrong = sum(1 for pick, gold in zip(picks, key) if pick != gold)
    passed = wrong < 2
    worker.status = WorkerStatus.ACTIVE if passed else WorkerStatus.REJECTED_QUIZ
    return passed


def build_page(
    page_id: str,
    worker: Worker,
    real_pool: Sequence[str],
    test_pool: Sequence[TestQuestion],
    rng_seed,
    *,
    exclude_token_ids: frozenset[str] | set[str] = frozenset(),
    item_price: Callable[[str], int] | None = None,
) -> Page:
    """Assemble 9 unseen real items plus 1 unseen test item, the test slot
    uniformly random; deterministic given the seed.

    `real_pool` is in scheduler priority order; `exclude_token_ids` holds
    tokens this worker must not see again.
    """
    if worker.status != WorkerStatus.ACTIVE:
        raise QcError(f"worker {worker.worker_id} is {worker.status.value}")
    eligible = [t for t in real_pool if t not in exclude_token_ids]
    if len(eligible) < 9:
        raise PartialPageError(
            f"only {len(eligible)} eligible items for worker {worker.worker_id}, need 9"
        )
    unseen_tests = [t for t in test_pool if t.token_id not in worker.tests_seen]
    if not unseen_tests:
        raise TestPoolExhausted(f"test pool exhausted for worker {worker.worker_id}")

    rng = random.Random(rng_seed)
    chosen_real = eligible[:9]
    test_q = unseen_tests[rng.randrange(len(unseen_tests))]
    slot = rng.randrange(10)

    token_ids = chosen_real[:slot] + [test_q.token_id] + chosen_real[slot:]
    items = tuple(
        PageItem(item_id=f"{page_id}:{i}", token_id=tid, is_test=(i == slot))
        for i, tid in enumerate(token_ids)
    )
    price = max((item_price(i.token_id) for i in items), default=0) if item_price else 0
    return Page(page_id=page_id, worker_id=worker.worker_id, items=items, price_cents=price)


def record_test_result(
    worker: Worker,
    correct: bool,
    config: QcConfig,
    store: JudgmentStore | None = None,
    token_id: str | None = None,
) -> WorkerStatus:
    """Update a worker's cumulative test score; ban (and invalidate all the
    worker's judgments) once accuracy drops below the threshold after the
    grace window. The threshold is a strict less-than."""
    if worker.status != WorkerStatus.ACTIVE:
        raise QcError(f"worker {worker.worker_id} is {worker.status.value}")
    worker.test_answered += 1
    if correct:
        worker.test_correct += 1
    if token_id is not None:
        worker.tests_seen.add(token_id)
    if worker.test_answered >= config.grace_min and worker.test_accuracy < config.threshold:
        worker.status = WorkerStatus.BANNED
        if store is not None:
            invalidate_worker_judgments(worker, store)
    return worker.status


def invalidate_worker_judgments(worker: Worker, store: JudgmentStore) -> int:
    """Flag every judgment by a banned worker invalid; idempotent."""
    if worker.status != WorkerStatus.BANNED:
        raise QcError(f"worker {worker.worker_id} is not banned")
    return store.invalidate_worker(worker.worker_id)
