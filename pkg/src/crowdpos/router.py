"""Deterministic task routing: every token goes to exactly one annotation task.

Precedence: Named-Entity flag (PROPN), interjection list (INTJ), unique
wordlist (its tag), manual list (expert queue), token-specific question
list, and otherwise the per-language question tree. Tokens with an
undetermined language fall back to the English tree and are counted.
"""

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Token
from .tags import LangId, UniversalTag, parse_lang, parse_tag


class WordListError(ValueError):
    pass


class TaskKind(str, Enum):
    AUTOMATIC = "automatic"
    MANUAL = "manual"
    TSQ = "tsq"
    ENG_QT = "eng_qt"
    SPA_QT = "spa_qt"

    def __str__(self) -> str:
        return self.value


CROWD_TASKS = (TaskKind.TSQ, TaskKind.ENG_QT, TaskKind.SPA_QT)


@dataclass(frozen=True, slots=True)
class TaskAssignment:
    kind: TaskKind
    tag: UniversalTag | None = None  # automatic routes carry the resolved tag
    question_id: str | None = None  # tsq routes carry the question id

    @property
    def is_crowd(self) -> bool:
        return self.kind in CROWD_TASKS


@dataclass(frozen=True)
class WordLists:
    """The routing wordlists; unique/manual/tsq keys are pairwise disjoint."""

    unique: dict[tuple[str, LangId], UniversalTag]
    manual: frozenset[tuple[str, LangId]]
    tsq: dict[tuple[str, LangId], str]
    interjections: frozenset[str]
    propn_bangor_tags: frozenset[str] = frozenset()

    def propn_marked(self, token: Token) -> bool:
        return token.bangor_tag in self.propn_bangor_tags


def validate_disjoint(lists: WordLists) -> None:
    keys = [set(lists.unique), set(lists.manual), set(lists.tsq)]
    names = ["unique", "manual", "tsq"]
    problems = []
    for i in range(3):
        for j in range(i + 1, 3):
            overlap = keys[i] & keys[j]
            if overlap:
                shown = ", ".join(f"{s}/{l.value}" for s, l in sorted(overlap))
                problems.append(f"{names[i]} and {names[j]} share: {shown}")
    if problems:
        raise WordListError("wordlists are not disjoint: " + "; ".join(problems))


def _load_json(path: Path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_wordlists(lists_dir: str | Path) -> WordLists:
    """Load unique.json, manual.json, tsq.json, interjections.json and the
    optional propn_tags.json from a directory; validates disjointness."""
    d = Path(lists_dir)
    problems: list[str] = []

    unique: dict[tuple[str, LangId], UniversalTag] = {}
    for i, e in enumerate(_load_json(d / "unique.json")):
        try:
            key = (str(e["surface"]).strip().lower(), parse_lang(str(e["lang"])))
            tag = parse_tag(str(e["tag"]))
        except (KeyError, ValueError) as exc:
            problems.append(f"unique entry {i}: {exc}")
            continue
        if key in unique and unique[key] != tag:
            problems.append(f"unique entry {i}: conflicting tags for {key[0]}/{key[1].value}")
            continue
        unique[key] = tag

    manual: set[tuple[str, LangId]] = set()
    for i, e in enumerate(_load_json(d / "manual.json")):
        try:
            manual.add((str(e["surface"]).strip().lower(), parse_lang(str(e["lang"]))))
        except (KeyError, ValueError) as exc:
            problems.append(f"manual entry {i}: {exc}")

    tsq: dict[tuple[str, LangId], str] = {}
    for i, e in enumerate(_load_json(d / "tsq.json")):
        try:
            key = (str(e["surface"]).strip().lower(), parse_lang(str(e["lang"])))
            qid = str(e["question_id"]).strip()
        except (KeyError, ValueError) as exc:
            problems.append(f"tsq entry {i}: {exc}")
            continue
        if not qid:
            problems.append(f"tsq entry {i}: empty question_id")
            continue
        if key in tsq and tsq[key] != qid:
            problems.append(f"tsq entry {i}: conflicting question ids for {key[0]}/{key[1].value}")
            continue
        tsq[key] = qid

    interjections = frozenset(str(s).strip().lower() for s in _load_json(d / "interjections.json"))

    propn_path = d / "propn_tags.json"
    propn = frozenset(str(s).strip() for s in _load_json(propn_path)) if propn_path.exists() else frozenset()

    if problems:
        raise WordListError("invalid wordlists: " + "; ".join(problems))

    lists = WordLists(
        unique=unique,
        manual=frozenset(manual),
        tsq=tsq,
        interjections=interjections,
        propn_bangor_tags=propn,
    )
    validate_disjoint(lists)
    return lists


def check_tsq_references(lists: WordLists, known_question_ids: Iterable[str]) -> None:
    known = set(known_question_ids)
    missing = sorted({qid for qid in lists.tsq.values() if qid not in known})
    if missing:
        raise WordListError("tsq list references unknown questions: " + ", ".join(missing))


def assign_task(token: Token, lists: WordLists) -> TaskAssignment:
    """Route one token; total over well-formed tokens.

    The Named-Entity flag is token-level evidence and outranks the
    type-level lists; lookups use the lowercased surface except on the
    PROPN path.
    """
    if lists.propn_marked(token):
        return TaskAssignment(TaskKind.AUTOMATIC, tag=UniversalTag.PROPN)
    surface = token.surface.strip().lower()
    if surface in lists.interjections:
        return TaskAssignment(TaskKind.AUTOMATIC, tag=UniversalTag.INTJ)
    key = (surface, token.lang)
    if key in lists.unique:
        return TaskAssignment(TaskKind.AUTOMATIC, tag=lists.unique[key])
    if key in lists.manual:
        return TaskAssignment(TaskKind.MANUAL)
    if key in lists.tsq:
        return TaskAssignment(TaskKind.TSQ, question_id=lists.tsq[key])
    if token.lang == LangId.SPA:
        return TaskAssignment(TaskKind.SPA_QT)
    return TaskAssignment(TaskKind.ENG_QT)  # eng, and und falls back to eng


@dataclass
class RoutingReport:
    counts: dict[TaskKind, int] = field(default_factory=dict)
    total: int = 0
    und_fallbacks: int = 0

    @property
    def percentages(self) -> dict[TaskKind, float]:
        if self.total == 0:
            return {k: 0.0 for k in TaskKind}
        return {k: 100.0 * self.counts.get(k, 0) / self.total for k in TaskKind}

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "counts": {k.value: self.counts.get(k, 0) for k in TaskKind},
            "percentages": {k.value: round(p, 2) for k, p in self.percentages.items()},
            "und_fallbacks": self.und_fallbacks,
        }


def route_corpus(tokens: Sequence[Token], lists: WordLists) -> RoutingReport:
    """Per-task token counts and percentages over a whole corpus."""
    report = RoutingReport(counts={k: 0 for k in TaskKind}, total=len(tokens))
    for token in tokens:
        assignment = assign_task(token, lists)
        report.counts[assignment.kind] += 1
        if token.lang == LangId.UND and assignment.kind == TaskKind.ENG_QT:
            report.und_fallbacks += 1
    return report
