import json

import pytest

from crowdpos.corpus import Token
from crowdpos.question_bank import (
    BankError,
    SessionError,
    answer,
    load_bank,
    replay_trail,
    start_session,
    tree_paths,
    validate_bank,
)
from crowdpos.router import TaskAssignment, TaskKind, assign_task
from crowdpos.tags import LangId, UniversalTag


def tok(surface, lang=LangId.ENG, context="", utt="u1", pos=0):
    return Token(f"{utt}:{pos}", surface, lang, "n", utt, pos, context=context)


def write_bank(tmp_path, docs):
    d = tmp_path / "bank"
    d.mkdir()
    for name, doc in docs.items():
        (d / name).write_text(json.dumps(doc), encoding="utf-8")
    return d


MINIMAL_TSQ = {
    "questions": [
        {
            "question_id": "q1",
            "surface": "w",
            "lang": "eng",
            "prompt": "how is `{{token}}' used?",
            "answers": [
                {"text": "a", "tag": "NOUN"},
                {"text": "b", "tag": "VERB"},
            ],
        }
    ]
}


class TestLoadBank:
    def test_fixture_counts(self, bank):
        assert len(bank.tsqs) == 17
        assert len(bank.trees) == 2

    def test_cycle_detected(self, tmp_path):
        doc = {
            "tree_id": "t",
            "lang": "eng",
            "root": "a",
            "nodes": {
                "a": {"prompt": "p", "answers": [{"text": "x", "next": "b"}]},
                "b": {"prompt": "p", "answers": [{"text": "x", "next": "a"}]},
            },
        }
        with pytest.raises(BankError, match="cycle"):
            load_bank(write_bank(tmp_path, {"tree.json": doc}))

    def test_unknown_leaf_tag(self, tmp_path):
        doc = {
            "tree_id": "t",
            "lang": "eng",
            "root": "a",
            "nodes": {"a": {"prompt": "p", "answers": [{"text": "x", "leaf": "VRB"}]}},
        }
        with pytest.raises(BankError, match="unknown tag VRB"):
            load_bank(write_bank(tmp_path, {"tree.json": doc}))

    def test_dangling_reference(self, tmp_path):
        doc = {
            "tree_id": "t",
            "lang": "eng",
            "root": "a",
            "nodes": {"a": {"prompt": "p", "answers": [{"text": "x", "next": "ghost"}]}},
        }
        with pytest.raises(BankError, match="dangling"):
            load_bank(write_bank(tmp_path, {"tree.json": doc}))

    def test_single_answer_tsq_rejected(self, tmp_path):
        doc = {
            "questions": [
                {
                    "question_id": "q1",
                    "surface": "w",
                    "lang": "eng",
                    "prompt": "p",
                    "answers": [{"text": "a", "tag": "NOUN"}],
                }
            ]
        }
        with pytest.raises(BankError, match="fewer than 2 answers"):
            load_bank(write_bank(tmp_path, {"tsq.json": doc}))


class TestValidateBank:
    def test_fixture_bank_is_clean(self, bank):
        assert validate_bank(bank) == []

    def test_missing_root_gate_is_a_warning(self, tmp_path):
        doc = {
            "tree_id": "t",
            "lang": "eng",
            "root": "a",
            "nodes": {
                "a": {
                    "prompt": "p",
                    "answers": [{"text": "x", "leaf": "NOUN"}, {"text": "y", "leaf": "VERB"}],
                }
            },
        }
        loaded = load_bank(write_bank(tmp_path, {"tree.json": doc, "tsq.json": MINIMAL_TSQ}))
        findings = validate_bank(loaded)
        assert [f.severity for f in findings] == ["warning"]
        assert "PROPN and INTJ" in findings[0].message


class TestWorkedExamples:
    """The three printed annotation walks: can, la, good."""

    def test_can_tsq(self, bank, wordlists, tokens_by_id):
        token = tokens_by_id["u02:3"]
        session = start_session(token, assign_task(token, wordlists), bank)
        assert "is `can' a verb that takes the meaning" in session.prompt()
        assert answer(session, 0).terminal == UniversalTag.AUX

    def test_can_container_reading(self, bank, wordlists, tokens_by_id):
        token = tokens_by_id["u02:3"]
        session = start_session(token, assign_task(token, wordlists), bank)
        assert answer(session, 1).terminal == UniversalTag.NOUN

    def test_la_tsq(self, bank, wordlists, tokens_by_id):
        token = tokens_by_id["u04:4"]
        session = start_session(token, assign_task(token, wordlists), bank)
        assert "translated in English as `her' or `the'" in session.prompt()
        assert answer(session, 0).terminal == UniversalTag.DET

    def test_good_tree_walk(self, bank, wordlists, tokens_by_id):
        token = tokens_by_id["u01:7"]
        session = start_session(token, assign_task(token, wordlists), bank)
        assert "is the word `good'" in session.prompt()
        assert token.context in session.prompt()
        session = answer(session, 2)  # none of the above
        assert not session.is_terminal
        session = answer(session, 1)  # adjective
        assert not session.is_terminal
        assert "noun or a verb" in session.prompt()
        session = answer(session, 2)  # definitely an adjective
        assert session.terminal == UniversalTag.ADJ
        assert session.trail == [("root", 2), ("pos_class", 1), ("adj_confirm", 2)]


class TestSessions:
    def test_manual_task_is_not_a_question_task(self, bank, tokens_by_id):
        with pytest.raises(SessionError, match="not a question task"):
            start_session(tokens_by_id["u04:3"], TaskAssignment(TaskKind.MANUAL), bank)

    def test_unknown_question_id(self, bank, tokens_by_id):
        with pytest.raises(SessionError, match="unknown question"):
            start_session(
                tokens_by_id["u02:3"], TaskAssignment(TaskKind.TSQ, question_id="nope"), bank
            )

    def test_out_of_range_answer(self, bank, wordlists, tokens_by_id):
        token = tokens_by_id["u02:3"]
        session = start_session(token, assign_task(token, wordlists), bank)
        with pytest.raises(SessionError, match="out of range"):
            answer(session, 5)

    def test_answering_terminal_session(self, bank, wordlists, tokens_by_id):
        token = tokens_by_id["u02:3"]
        session = start_session(token, assign_task(token, wordlists), bank)
        answer(session, 0)
        with pytest.raises(SessionError, match="terminal"):
            answer(session, 0)

    def test_worker_facing_answers_carry_no_tags(self, bank, wordlists, tokens_by_id):
        token = tokens_by_id["u02:3"]
        session = start_session(token, assign_task(token, wordlists), bank)
        for text, example in session.current_answers():
            assert "AUX" not in text and "NOUN" not in text
            assert example is None or "AUX" not in example


class TestReplay:
    def test_every_tree_path_replays(self, bank, wordlists, tokens_by_id):
        token = tokens_by_id["u01:7"]
        assignment = assign_task(token, wordlists)
        tree = bank.tree_for_lang(LangId.ENG)
        for trail, tag in tree_paths(tree):
            assert replay_trail(token, assignment, bank, trail) == tag

    def test_tampered_trail_rejected(self, bank, wordlists, tokens_by_id):
        token = tokens_by_id["u01:7"]
        assignment = assign_task(token, wordlists)
        with pytest.raises(SessionError):
            replay_trail(token, assignment, bank, [("adj_confirm", 2)])  # skips the root
        with pytest.raises(SessionError):
            replay_trail(token, assignment, bank, [("root", 2)])  # stops mid-tree

    def test_trail_past_terminal_rejected(self, bank, wordlists, tokens_by_id):
        token = tokens_by_id["u02:3"]
        assignment = assign_task(token, wordlists)
        with pytest.raises(SessionError, match="past a terminal"):
            replay_trail(token, assignment, bank, [("tsq_can_eng", 0), ("tsq_can_eng", 0)])


class TestTreeProperties:
    def test_termination_and_depth(self, bank):
        for tree in bank.trees.values():
            paths = tree_paths(tree)
            assert paths, tree.tree_id
            for trail, tag in paths:
                assert 1 <= len(trail) <= len(tree.nodes)
                assert tag in set(UniversalTag)

    def test_eng_leaf_coverage(self, bank):
        tree = bank.tree_for_lang(LangId.ENG)
        leaves = {tag for _, tag in tree_paths(tree)}
        assert {
            UniversalTag.PROPN,
            UniversalTag.INTJ,
            UniversalTag.NOUN,
            UniversalTag.ADJ,
            UniversalTag.VERB,
            UniversalTag.AUX,
            UniversalTag.ADV,
        } <= leaves

    def test_spa_tree_distinguishes_main_verb_from_aux(self, bank):
        tree = bank.tree_for_lang(LangId.SPA)
        leaves = {tag for _, tag in tree_paths(tree)}
        assert UniversalTag.VERB in leaves and UniversalTag.AUX in leaves
        # both come out of the verb branch, behind the infinitive-as-noun gate
        verb_branch = [
            (trail, tag)
            for trail, tag in tree_paths(tree)
            if any(node == "verb_aux" for node, _ in trail)
        ]
        assert {tag for _, tag in verb_branch} == {UniversalTag.VERB, UniversalTag.AUX}
