"""Token-specific questions and per-language question trees.

Both are deterministic state machines whose terminal states are Universal
tags. Banks are immutable after load; annotation sessions are independent
values that replay deterministically from their answer trail. Tags are
never part of the worker-facing payload.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Token
from .router import TaskAssignment, TaskKind
from .tags import LangId, UniversalTag, parse_lang, parse_tag


class BankError(ValueError):
    pass


class SessionError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class TsqAnswer:
    text: str
    tag: UniversalTag
    example: str | None = None


@dataclass(frozen=True)
class TsqEntry:
    question_id: str
    surface: str
    lang: LangId
    prompt: str
    answers: tuple[TsqAnswer, ...]


@dataclass(frozen=True, slots=True)
class TreeAnswer:
    text: str
    next_node: str | None = None  # exactly one of next_node / leaf_tag is set
    leaf_tag: UniversalTag | None = None
    example: str | None = None

    @property
    def is_leaf(self) -> bool:
        return self.leaf_tag is not None


@dataclass(frozen=True)
class TreeNode:
    node_id: str
    prompt: str
    answers: tuple[TreeAnswer, ...]


@dataclass(frozen=True)
class QuestionTree:
    tree_id: str
    lang: LangId
    root: str
    nodes: dict[str, TreeNode]


@dataclass(frozen=True)
class QuestionBank:
    tsqs: dict[str, TsqEntry]
    trees: dict[str, QuestionTree]

    def tree_for_lang(self, lang: LangId) -> QuestionTree:
        for tree in self.trees.values():
            if tree.lang == lang:
                return tree
        raise BankError(f"no question tree for language {lang.value}")


@dataclass(frozen=True, slots=True)
class ValidationFinding:
    severity: str  # "error" | "warning"
    location: str
    message: str


def _parse_tsq(doc: dict, source: str) -> list[TsqEntry]:
    entries = []
    for i, q in enumerate(doc.get("questions", [])):
        where = f"{source}: question {q.get('question_id', i)}"
        try:
            answers = tuple(
                TsqAnswer(
                    text=str(a["text"]),
                    tag=parse_tag(str(a["tag"])),
                    example=a.get("example"),
                )
                for a in q.get("answers", [])
            )
            entries.append(
                TsqEntry(
                    question_id=str(q["question_id"]),
                    surface=str(q["surface"]).strip().lower(),
                    lang=parse_lang(str(q["lang"])),
                    prompt=str(q["prompt"]),
                    answers=answers,
                )
            )
        except (KeyError, ValueError) as exc:
            raise BankError(f"{where}: {exc}") from None
    return entries


def _parse_tree(doc: dict, source: str) -> QuestionTree:
    tree_id = str(doc.get("tree_id", ""))
    where = f"{source}: tree {tree_id or '?'}"
    try:
        lang = parse_lang(str(doc["lang"]))
        root = str(doc["root"])
        nodes = {}
        for node_id, n in doc["nodes"].items():
            answers = []
            for a in n.get("answers", []):
                has_next = "next" in a and a["next"] is not None
                has_leaf = "leaf" in a and a["leaf"] is not None
                if has_next == has_leaf:
                    raise BankError(
                        f"{where}: node {node_id}: answer needs exactly one of next/leaf"
                    )
                answers.append(
                    TreeAnswer(
                        text=str(a["text"]),
                        next_node=str(a["next"]) if has_next else None,
                        leaf_tag=parse_tag(str(a["leaf"])) if has_leaf else None,
                        example=a.get("example"),
                    )
                )
            nodes[str(node_id)] = TreeNode(node_id=str(node_id), prompt=str(n["prompt"]), answers=tuple(answers))
    except BankError:
        raise
    except (KeyError, ValueError) as exc:
        raise BankError(f"{where}: {exc}") from None
    if not tree_id:
        raise BankError(f"{source}: tree is missing tree_id")
    return QuestionTree(tree_id=tree_id, lang=lang, root=root, nodes=nodes)


def load_bank(bank_dir: str | Path) -> QuestionBank:
    """Load every *.json file in a directory into a validated QuestionBank.

    Files holding a "questions" array are TSQ files; files holding a
    "tree_id" are question trees. Raises BankError listing the findings if
    any validation rule fails.
    """
    d = Path(bank_dir)
    tsqs: dict[str, TsqEntry] = {}
    trees: dict[str, QuestionTree] = {}
    paths = sorted(d.glob("*.json"))
    if not paths:
        raise BankError(f"no bank files found in {d}")
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if "questions" in doc:
            for entry in _parse_tsq(doc, path.name):
                if entry.question_id in tsqs:
                    raise BankError(f"{path.name}: duplicate question_id {entry.question_id}")
                tsqs[entry.question_id] = entry
        elif "tree_id" in doc:
            tree = _parse_tree(doc, path.name)
            if tree.tree_id in trees:
                raise BankError(f"{path.name}: duplicate tree_id {tree.tree_id}")
            trees[tree.tree_id] = tree
        else:
            raise BankError(f"{path.name}: neither a TSQ file nor a tree file")

    bank = QuestionBank(tsqs=tsqs, trees=trees)
    errors = [f for f in validate_bank(bank) if f.severity == "error"]
    if errors:
        raise BankError("; ".join(f"{f.location}: {f.message}" for f in errors))
    return bank


def validate_bank(bank: QuestionBank) -> list[ValidationFinding]:
    """Run every structural rule; empty list iff all invariants hold."""
    findings: list[ValidationFinding] = []

    for qid, tsq in bank.tsqs.items():
        if len(tsq.answers) < 2:
            findings.append(ValidationFinding("error", f"tsq {qid}", "fewer than 2 answers"))

    langs_seen: dict[LangId, str] = {}
    for tree_id, tree in bank.trees.items():
        loc = f"tree {tree_id}"
        if tree.lang in langs_seen:
            findings.append(
                ValidationFinding(
                    "error", loc, f"duplicate tree for {tree.lang.value} (also {langs_seen[tree.lang]})"
                )
            )
        else:
            langs_seen[tree.lang] = tree_id
        if tree.lang == LangId.UND:
            findings.append(ValidationFinding("error", loc, "trees must be eng or spa"))
        if tree.root not in tree.nodes:
            findings.append(ValidationFinding("error", loc, f"root {tree.root} is not a node"))
            continue

        dangling = []
        for node in tree.nodes.values():
            if not node.answers:
                findings.append(
                    ValidationFinding("error", f"{loc} node {node.node_id}", "no answers")
                )
            for a in node.answers:
                if a.next_node is not None and a.next_node not in tree.nodes:
                    dangling.append(f"{node.node_id}->{a.next_node}")
        if dangling:
            findings.append(
                ValidationFinding("error", loc, "dangling references: " + ", ".join(dangling))
            )
            continue

        cycle = _find_cycle(tree)
        if cycle:
            findings.append(
                ValidationFinding("error", loc, "cycle " + ",".join(cycle))
            )
            continue

        reachable = _reachable(tree)
        unreachable = sorted(set(tree.nodes) - reachable)
        if unreachable:
            findings.append(
                ValidationFinding(
                    "error", loc, "unreachable nodes: " + ", ".join(unreachable)
                )
            )

        # Convention: the root gates proper nouns and interjections before
        # anything else, so every word can still be tagged PROPN or INTJ.
        root_leaves = {a.leaf_tag for a in tree.nodes[tree.root].answers if a.is_leaf}
        if not {UniversalTag.PROPN, UniversalTag.INTJ} <= root_leaves:
            findings.append(
                ValidationFinding(
                    "warning", loc, "root does not gate PROPN and INTJ directly"
                )
            )

    return findings


def _find_cycle(tree: QuestionTree) -> list[str] | None:
    WHITE, GREY, BLACK = 0, 1, 2
    color = {nid: WHITE for nid in tree.nodes}
    stack: list[str] = []

    def visit(nid: str) -> list[str] | None:
        color[nid] = GREY
        stack.append(nid)
        for a in tree.nodes[nid].answers:
            nxt = a.next_node
            if nxt is None:
                continue
            if color[nxt] == GREY:
                return stack[stack.index(nxt):]
            if color[nxt] == WHITE:
                found = visit(nxt)
                if found:
                    return found
        color[nid] = BLACK
        stack.pop()
        return None

    for nid in tree.nodes:
        if color[nid] == WHITE:
            found = visit(nid)
            if found:
                return found
    return None


def _reachable(tree: QuestionTree) -> set[str]:
    seen = {tree.root}
    frontier = [tree.root]
    while frontier:
        nid = frontier.pop()
        for a in tree.nodes[nid].answers:
            if a.next_node is not None and a.next_node not in seen:
                seen.add(a.next_node)
                frontier.append(a.next_node)
    return seen


def tree_paths(tree: QuestionTree) -> list[tuple[tuple[tuple[str, int], ...], UniversalTag]]:
    """Enumerate every root-to-leaf path as (trail, terminal tag).

    Only valid on acyclic trees; used by `bank paths` and the fixtures'
    exhaustive termination checks.
    """
    paths: list[tuple[tuple[tuple[str, int], ...], UniversalTag]] = []

    def walk(node_id: str, trail: tuple[tuple[str, int], ...]) -> None:
        node = tree.nodes[node_id]
        for i, a in enumerate(node.answers):
            step = trail + ((node_id, i),)
            if a.is_leaf:
                paths.append((step, a.leaf_tag))
            else:
                walk(a.next_node, step)

    walk(tree.root, ())
    return paths


def render_prompt(template: str, token: Token) -> str:
    return template.replace("{{token}}", token.surface).replace("{{sentence}}", token.context)


@dataclass
class AnnotationSession:
    """One worker's walk through a TSQ or question tree for one token.

    The trail replays deterministically from the root; `answer` advances
    the session until a terminal tag is reached.
    """

    session_id: str
    token: Token
    kind: TaskKind
    tsq: TsqEntry | None = None
    tree: QuestionTree | None = None
    node_id: str | None = None
    trail: list[tuple[str, int]] = field(default_factory=list)
    terminal: UniversalTag | None = None

    @property
    def is_terminal(self) -> bool:
        return self.terminal is not None

    def prompt(self) -> str:
        if self.is_terminal:
            raise SessionError("session is terminal")
        if self.kind == TaskKind.TSQ:
            return render_prompt(self.tsq.prompt, self.token)
        return render_prompt(self.tree.nodes[self.node_id].prompt, self.token)

    def current_answers(self) -> list[tuple[str, str | None]]:
        """Worker-facing (text, example) pairs; never exposes tags."""
        if self.is_terminal:
            raise SessionError("session is terminal")
        if self.kind == TaskKind.TSQ:
            return [(a.text, a.example) for a in self.tsq.answers]
        return [(a.text, a.example) for a in self.tree.nodes[self.node_id].answers]


def start_session(token: Token, assignment: TaskAssignment, bank: QuestionBank, session_id: str = "") -> AnnotationSession:
    """Open a session at the TSQ prompt or tree root for a crowd assignment."""
    if assignment.kind == TaskKind.TSQ:
        tsq = bank.tsqs.get(assignment.question_id or "")
        if tsq is None:
            raise SessionError(f"unknown question {assignment.question_id}")
        return AnnotationSession(
            session_id=session_id or f"s:{token.token_id}",
            token=token,
            kind=TaskKind.TSQ,
            tsq=tsq,
        )
    if assignment.kind in (TaskKind.ENG_QT, TaskKind.SPA_QT):
        lang = LangId.ENG if assignment.kind == TaskKind.ENG_QT else LangId.SPA
        tree = bank.tree_for_lang(lang)
        return AnnotationSession(
            session_id=session_id or f"s:{token.token_id}",
            token=token,
            kind=assignment.kind,
            tree=tree,
            node_id=tree.root,
        )
    raise SessionError(f"not a question task: {assignment.kind.value}")


def answer(session: AnnotationSession, answer_index: int) -> AnnotationSession:
    """Apply one answer; TSQ sessions terminate immediately, tree sessions
    advance to the next node or terminate at a leaf."""
    if session.is_terminal:
        raise SessionError("cannot answer a terminal session")
    if session.kind == TaskKind.TSQ:
        answers = session.tsq.answers
        if not 0 <= answer_index < len(answers):
            raise SessionError(
                f"answer index {answer_index} out of range for {session.tsq.question_id}"
            )
        session.trail.append((session.tsq.question_id, answer_index))
        session.terminal = answers[answer_index].tag
        return session

    node = session.tree.nodes[session.node_id]
    if not 0 <= answer_index < len(node.answers):
        raise SessionError(f"answer index {answer_index} out of range at node {node.node_id}")
    chosen = node.answers[answer_index]
    session.trail.append((node.node_id, answer_index))
    if chosen.is_leaf:
        session.terminal = chosen.leaf_tag
        session.node_id = None
    else:
        session.node_id = chosen.next_node
    return session


def replay_trail(
    token: Token,
    assignment: TaskAssignment,
    bank: QuestionBank,
    trail: Sequence[tuple[str, int]],
) -> UniversalTag:
    """Replay a submitted answer trail; it must follow the exact node path
    from the root to a leaf. Raises SessionError on any deviation."""
    session = start_session(token, assignment, bank)
    for step_id, idx in trail:
        if session.is_terminal:
            raise SessionError("trail continues past a terminal state")
        expected = session.tsq.question_id if session.kind == TaskKind.TSQ else session.node_id
        if step_id != expected:
            raise SessionError(f"trail step {step_id} does not match expected {expected}")
        answer(session, idx)
    if not session.is_terminal:
        raise SessionError("trail ends before reaching a terminal state")
    return session.terminal


def tsq_ids(bank: QuestionBank) -> Iterable[str]:
    return bank.tsqs.keys()
