"""Three-vote aggregation: two crowd judgments plus the mapped Bangor tag.

Final tag = tag occurring at least twice; a three-way split is a tie for
the expert queue. The split taxonomy records whether the Bangor tag sided
with the majority.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .tags import UniversalTag


class AggregationError(ValueError):
    pass


class JudgmentSource(str, Enum):
    CROWD = "crowd"
    BANGOR_MAPPED = "bangor_mapped"
    EXPERT = "expert"

    def __str__(self) -> str:
        return self.value


class Split(str, Enum):
    UNANIMOUS_3_0 = "3-0"
    BANGOR_IN_MAJORITY_2_1 = "2-1-bangor"  # one crowd tag dissents
    BANGOR_IN_MINORITY_2_1 = "2-1-cf"  # crowd agrees, Bangor dissents
    THREE_WAY_1_1_1 = "1-1-1"

    def __str__(self) -> str:
        return self.value


@dataclass(slots=True)
class Judgment:
    judgment_id: str
    token_id: str
    worker_id: str
    tag: UniversalTag
    source: JudgmentSource
    valid: bool = True
    is_test: bool = False  # test-question responses never reach aggregation
    submitted_at: float = 0.0

    def to_json(self) -> dict:
        return {
            "judgment_id": self.judgment_id,
            "token_id": self.token_id,
            "worker_id": self.worker_id,
            "tag": self.tag.value,
            "source": self.source.value,
            "valid": self.valid,
            "is_test": self.is_test,
            "submitted_at": self.submitted_at,
        }


@dataclass(frozen=True, slots=True)
class VoteResult:
    """Outcome of a 3-tag majority vote: a final tag or a tie set."""

    final: UniversalTag | None
    tied: frozenset[UniversalTag] | None

    @property
    def is_tie(self) -> bool:
        return self.tied is not None


@dataclass(frozen=True, slots=True)
class VoteRecord:
    token_id: str
    votes: tuple[UniversalTag, UniversalTag, UniversalTag]  # (crowd, crowd, bangor)
    final_tag: UniversalTag | None
    tied: frozenset[UniversalTag] | None
    split: Split

    @property
    def is_tie(self) -> bool:
        return self.tied is not None

    def to_json(self) -> dict:
        return {
            "token_id": self.token_id,
            "votes": [t.value for t in self.votes],
            "final_tag": self.final_tag.value if self.final_tag else None,
            "tied": sorted(t.value for t in self.tied) if self.tied else None,
            "split": self.split.value,
        }


@dataclass(frozen=True, slots=True)
class FinalTag:
    token_id: str
    tag: UniversalTag
    source: str  # "automatic" | "vote" | "expert"
    split: Split | None = None


def majority_vote(tags: Sequence[UniversalTag]) -> VoteResult:
    """Majority over exactly 3 tags; permutation-invariant."""
    if len(tags) != 3:
        raise AggregationError(f"majority vote needs exactly 3 tags, got {len(tags)}")
    a, b, c = tags
    if a == b or a == c:
        return VoteResult(final=a, tied=None)
    if b == c:
        return VoteResult(final=b, tied=None)
    return VoteResult(final=None, tied=frozenset((a, b, c)))


def classify_split(crowd: Sequence[UniversalTag], bangor: UniversalTag) -> Split:
    """Table-3 taxonomy over (2 crowd tags, Bangor tag)."""
    if len(crowd) != 2:
        raise AggregationError(f"expected 2 crowd tags, got {len(crowd)}")
    c1, c2 = crowd
    if c1 == c2 == bangor:
        return Split.UNANIMOUS_3_0
    if c1 != c2 and bangor not in (c1, c2):
        return Split.THREE_WAY_1_1_1
    if c1 == c2:
        return Split.BANGOR_IN_MINORITY_2_1
    return Split.BANGOR_IN_MAJORITY_2_1


class JudgmentStore:
    """Append-only judgment log with per-token and per-worker indexes.

    Aggregation is a pure fold over the valid entries of one token, so
    replaying the log in any order yields the same vote records.
    """

    def __init__(self) -> None:
        self.judgments: list[Judgment] = []
        self._by_token: dict[str, list[Judgment]] = {}
        self._by_worker: dict[str, list[Judgment]] = {}
        self._invalidated_workers: set[str] = set()

    def __len__(self) -> int:
        return len(self.judgments)

    def append(self, judgment: Judgment) -> None:
        if judgment.worker_id in self._invalidated_workers and judgment.source == JudgmentSource.CROWD:
            judgment.valid = False
        self.judgments.append(judgment)
        self._by_token.setdefault(judgment.token_id, []).append(judgment)
        self._by_worker.setdefault(judgment.worker_id, []).append(judgment)

    def for_token(self, token_id: str) -> list[Judgment]:
        return self._by_token.get(token_id, [])

    def for_worker(self, worker_id: str) -> list[Judgment]:
        return self._by_worker.get(worker_id, [])

    def valid_crowd(self, token_id: str) -> list[Judgment]:
        return [
            j
            for j in self.for_token(token_id)
            if j.valid and not j.is_test and j.source == JudgmentSource.CROWD
        ]

    def bangor_judgment(self, token_id: str) -> Judgment | None:
        for j in self.for_token(token_id):
            if j.source == JudgmentSource.BANGOR_MAPPED and j.valid:
                return j
        return None

    def crowd_workers(self, token_id: str) -> set[str]:
        return {j.worker_id for j in self.for_token(token_id) if j.source == JudgmentSource.CROWD}

    def invalidate_worker(self, worker_id: str) -> int:
        """Flag every crowd judgment by a worker invalid; idempotent, returns
        the number newly flagged."""
        self._invalidated_workers.add(worker_id)
        flipped = 0
        for j in self._by_worker.get(worker_id, []):
            if j.valid and j.source == JudgmentSource.CROWD:
                j.valid = False
                flipped += 1
        return flipped

    def tokens_touched_by(self, worker_id: str) -> set[str]:
        return {j.token_id for j in self._by_worker.get(worker_id, [])}


def aggregate_token(token_id: str, store: JudgmentStore) -> VoteRecord | None:
    """Fold one token's valid judgments into a VoteRecord.

    Returns None ("pending") while the token lacks its 2 valid crowd
    judgments or its mapped Bangor judgment.
    """
    crowd = store.valid_crowd(token_id)
    bangor = store.bangor_judgment(token_id)
    if len(crowd) < 2 or bangor is None:
        return None
    pair = sorted((crowd[0].tag, crowd[1].tag), key=lambda t: t.value)
    result = majority_vote([pair[0], pair[1], bangor.tag])
    return VoteRecord(
        token_id=token_id,
        votes=(pair[0], pair[1], bangor.tag),
        final_tag=result.final,
        tied=result.tied,
        split=classify_split(pair, bangor.tag),
    )


def resolve_tie(
    record: VoteRecord, expert_tag: UniversalTag, expert_id: str
) -> tuple[FinalTag, str | None]:
    """Break a three-way tie with an expert tag.

    Experts may overrule with a tag outside the tied set; that is accepted
    with a warning since expert tags are the gold authority.
    """
    if not record.is_tie:
        raise AggregationError(f"token {record.token_id} is not tied")
    warning = None
    if expert_tag not in record.tied:
        tied = ",".join(sorted(t.value for t in record.tied))
        warning = (
            f"expert {expert_id} resolved {record.token_id} as {expert_tag.value}, "
            f"outside the tied set {{{tied}}}"
        )
    final = FinalTag(
        token_id=record.token_id,
        tag=expert_tag,
        source="expert",
        split=record.split,
    )
    return final, warning


def split_counts(records: Iterable[VoteRecord]) -> dict[Split, int]:
    counts = {s: 0 for s in Split}
    for r in records:
        counts[r.split] += 1
    return counts
