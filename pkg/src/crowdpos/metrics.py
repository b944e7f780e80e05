"""Evaluation suite over hidden test questions and vote records.

Covers majority-vote accuracy, accuracy over size-k judgment subsets plus
the Bangor tag, single-judgment accuracy and agreement, vote-split
percentages, and per-tag recall. Plurality ties earn fractional credit
(1/|tied set| when the gold tag is among the tied winners) so every number
is deterministic. Exhaustive subset enumeration runs in exact rational
arithmetic; floats appear only in reports.
"""

import random
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import comb
from typing import Iterable, Sequence

from .aggregate import Split, VoteRecord
from .tags import UniversalTag


class MetricsError(ValueError):
    pass


SUBSET_CAP = 10_000
MC_SAMPLES = 10_000


@dataclass(frozen=True)
class TestJudgmentSet:
    """One test question's gold tag, mapped Bangor tag, and the valid crowd
    judgments collected for it."""

    __test__ = False  # not a pytest class

    question_id: str
    task: str  # tsq | eng_qt | spa_qt
    gold: UniversalTag
    bangor: UniversalTag
    crowd: tuple[UniversalTag, ...]


def plurality_credit(tags: Sequence[UniversalTag], gold: UniversalTag) -> Fraction:
    """1 if gold is the unique plurality tag, 1/|winners| if it ties,
    else 0."""
    counts: dict[UniversalTag, int] = {}
    for t in tags:
        counts[t] = counts.get(t, 0) + 1
    top = max(counts.values())
    winners = [t for t, c in counts.items() if c == top]
    if gold not in winners:
        return Fraction(0)
    return Fraction(1, len(winners))


def plurality_top_count(tags: Sequence[UniversalTag]) -> int:
    counts: dict[UniversalTag, int] = {}
    for t in tags:
        counts[t] = counts.get(t, 0) + 1
    return max(counts.values())


def mv_accuracy(tests: Sequence[TestJudgmentSet]) -> float:
    """Fraction of test questions whose plurality tag over all crowd
    judgments equals gold (fractional credit on plurality ties)."""
    if not tests:
        raise MetricsError("no test questions")
    total = sum((plurality_credit(t.crowd, t.gold) for t in tests), Fraction(0))
    return float(total / len(tests))


@dataclass
class KPlusOneResult:
    k: int
    value: float | None
    evaluated: int
    skipped: int  # tests with fewer than k judgments
    exhaustive: int
    sampled: int


def _exact_subset_accuracy(test: TestJudgmentSet, k: int) -> Fraction:
    total = Fraction(0)
    n_subsets = 0
    for subset in combinations(test.crowd, k):
        total += plurality_credit(list(subset) + [test.bangor], test.gold)
        n_subsets += 1
    return total / n_subsets


def _credit_float(tags: list, gold: UniversalTag) -> float:
    counts: dict[UniversalTag, int] = {}
    for t in tags:
        counts[t] = counts.get(t, 0) + 1
    top = max(counts.values())
    winners = [t for t, c in counts.items() if c == top]
    if gold not in winners:
        return 0.0
    return 1.0 / len(winners)


def _sampled_subset_accuracy(test: TestJudgmentSet, k: int, rng: random.Random, samples: int) -> float:
    # float credits: the estimate is approximate anyway, and exact rational
    # arithmetic only matters on the exhaustive path
    n = len(test.crowd)
    indices = tuple(range(n))
    total = 0.0
    for _ in range(samples):
        subset = [test.crowd[i] for i in rng.sample(indices, k)]
        subset.append(test.bangor)
        total += _credit_float(subset, test.gold)
    return total / samples


def accuracy_k_plus_1(
    tests: Sequence[TestJudgmentSet],
    k: int,
    *,
    cap: int = SUBSET_CAP,
    samples: int = MC_SAMPLES,
    seed: int = 0,
    force_sampling: bool = False,
) -> KPlusOneResult:
    """Majority-vote accuracy re-estimated over size-k crowd-judgment
    subsets with the Bangor tag added as the (k+1)-th vote.

    Per test: the mean over all C(n, k) subsets when that count is within
    `cap`, otherwise over `samples` seeded draws. Tests with fewer than k
    judgments are skipped and counted. The reported value is the unweighted
    mean over evaluated tests.
    """
    if k < 1:
        raise MetricsError(f"k must be >= 1, got {k}")
    per_test: list[Fraction] = []
    skipped = exhaustive = sampled = 0
    for i, test in enumerate(tests):
        n = len(test.crowd)
        if n < k:
            skipped += 1
            continue
        if not force_sampling and comb(n, k) <= cap:
            per_test.append(_exact_subset_accuracy(test, k))
            exhaustive += 1
        else:
            rng = random.Random(f"{seed}:{k}:{test.question_id}:{i}")
            per_test.append(_sampled_subset_accuracy(test, k, rng, samples))
            sampled += 1
    value = float(sum(per_test, Fraction(0)) / len(per_test)) if per_test else None
    return KPlusOneResult(
        k=k, value=value, evaluated=len(per_test), skipped=skipped,
        exhaustive=exhaustive, sampled=sampled,
    )


def single_judgment_stats(tests: Sequence[TestJudgmentSet]) -> tuple[float, float]:
    """(average per-test accuracy of single judgments, average per-test
    agreement of single judgments with the plurality tag)."""
    if not tests:
        raise MetricsError("no test questions")
    acc = Fraction(0)
    agree = Fraction(0)
    for t in tests:
        if not t.crowd:
            raise MetricsError(f"test {t.question_id} has no judgments")
        n = len(t.crowd)
        acc += Fraction(sum(1 for c in t.crowd if c == t.gold), n)
        # agreement with "the" plurality tag = top count / n, well defined
        # even when winners tie (all winners share the top count)
        agree += Fraction(plurality_top_count(t.crowd), n)
    return float(acc / len(tests)), float(agree / len(tests))


def vote_split_percentages(records: Sequence[VoteRecord | Split]) -> dict[Split, float]:
    if not records:
        raise MetricsError("no vote records")
    counts = {s: 0 for s in Split}
    for r in records:
        counts[r if isinstance(r, Split) else r.split] += 1
    return {s: 100.0 * c / len(records) for s, c in counts.items()}


@dataclass
class TagRecallReport:
    per_tag: dict[UniversalTag, float | None]  # None = not applicable
    average: float | None  # unweighted mean over applicable tags

    def to_json(self) -> dict:
        return {
            "per_tag": {
                t.value: (round(v, 4) if v is not None else None)
                for t, v in self.per_tag.items()
            },
            "average": round(self.average, 4) if self.average is not None else None,
        }


def per_tag_recall(tests: Sequence[TestJudgmentSet]) -> TagRecallReport:
    """For each tag with gold-tag test questions, the fraction whose
    plurality judgment recovers it; tags without gold tests are marked
    not applicable."""
    by_tag: dict[UniversalTag, list[TestJudgmentSet]] = {}
    for t in tests:
        by_tag.setdefault(t.gold, []).append(t)
    per_tag: dict[UniversalTag, float | None] = {}
    applicable: list[Fraction] = []
    for tag in UniversalTag:
        group = by_tag.get(tag)
        if not group:
            per_tag[tag] = None
            continue
        credit = sum((plurality_credit(t.crowd, tag) for t in group), Fraction(0))
        value = credit / len(group)
        per_tag[tag] = float(value)
        applicable.append(value)
    average = float(sum(applicable, Fraction(0)) / len(applicable)) if applicable else None
    return TagRecallReport(per_tag=per_tag, average=average)


@dataclass
class MetricsReport:
    """Everything the evaluation tables report, for one task."""

    task: str
    n_test_questions: int = 0
    avg_judgments_per_tq: float | None = None
    mv_accuracy: float | None = None
    avg_sj_accuracy: float | None = None
    avg_sj_mv_agreement: float | None = None
    accuracy_k_plus_1: dict[int, float | None] = field(default_factory=dict)
    k_plus_1_skipped: dict[int, int] = field(default_factory=dict)
    split_percentages: dict[Split, float] | None = None
    n_vote_records: int = 0
    tag_recall: TagRecallReport | None = None

    @property
    def no_data(self) -> bool:
        # configured test questions without judgments are still "no data"
        return self.mv_accuracy is None and self.n_vote_records == 0

    def to_json(self) -> dict:
        return {
            "task": self.task,
            "no_data": self.no_data,
            "n_test_questions": self.n_test_questions,
            "avg_judgments_per_tq": (
                round(self.avg_judgments_per_tq, 2)
                if self.avg_judgments_per_tq is not None
                else None
            ),
            "mv_accuracy": round(self.mv_accuracy, 4) if self.mv_accuracy is not None else None,
            "avg_sj_accuracy": (
                round(self.avg_sj_accuracy, 4) if self.avg_sj_accuracy is not None else None
            ),
            "avg_sj_mv_agreement": (
                round(self.avg_sj_mv_agreement, 4)
                if self.avg_sj_mv_agreement is not None
                else None
            ),
            "accuracy_k_plus_1": {
                str(k): (round(v, 4) if v is not None else None)
                for k, v in self.accuracy_k_plus_1.items()
            },
            "k_plus_1_skipped": {str(k): v for k, v in self.k_plus_1_skipped.items()},
            "n_vote_records": self.n_vote_records,
            "split_percentages": (
                {s.value: round(p, 2) for s, p in self.split_percentages.items()}
                if self.split_percentages is not None
                else None
            ),
            "tag_recall": self.tag_recall.to_json() if self.tag_recall else None,
        }


def metrics_report(
    task: str,
    tests: Sequence[TestJudgmentSet],
    records: Iterable[VoteRecord],
    *,
    ks: Sequence[int] = (1, 2, 3, 4),
    seed: int = 0,
) -> MetricsReport:
    records = list(records)
    report = MetricsReport(task=task, n_test_questions=len(tests), n_vote_records=len(records))
    usable = [t for t in tests if t.crowd]
    if usable:
        report.avg_judgments_per_tq = sum(len(t.crowd) for t in usable) / len(usable)
        report.mv_accuracy = mv_accuracy(usable)
        report.avg_sj_accuracy, report.avg_sj_mv_agreement = single_judgment_stats(usable)
        for k in ks:
            result = accuracy_k_plus_1(usable, k, seed=seed)
            report.accuracy_k_plus_1[k] = result.value
            report.k_plus_1_skipped[k] = result.skipped
        report.tag_recall = per_tag_recall(usable)
    if records:
        report.split_percentages = vote_split_percentages(records)
    return report
