"""Crowdsourced Universal POS annotation for code-switched text.

Pipeline: parse a corpus, route every token to one annotation task,
collect crowd judgments through token-specific questions and question
trees under quality control, aggregate two crowd votes with the mapped
Bangor tag, break ties with experts, and report the evaluation metrics.
"""

from .aggregate import (
    FinalTag,
    Judgment,
    JudgmentSource,
    JudgmentStore,
    Split,
    VoteRecord,
    VoteResult,
    aggregate_token,
    classify_split,
    majority_vote,
    resolve_tie,
)
from .corpus import (
    CorpusFormatError,
    MappingError,
    MappingTable,
    Token,
    load_mapping,
    map_to_universal,
    parse_corpus,
    parse_corpus_file,
    serialize_corpus,
)
from .metrics import (
    MetricsReport,
    TestJudgmentSet,
    accuracy_k_plus_1,
    metrics_report,
    mv_accuracy,
    per_tag_recall,
    single_judgment_stats,
    vote_split_percentages,
)
from .qc import (
    Page,
    QcConfig,
    TestQuestion,
    Worker,
    WorkerStatus,
    build_page,
    grade_screening,
    invalidate_worker_judgments,
    record_test_result,
    register_worker,
)
from .question_bank import (
    AnnotationSession,
    QuestionBank,
    QuestionTree,
    TsqEntry,
    answer,
    load_bank,
    replay_trail,
    start_session,
    tree_paths,
    validate_bank,
)
from .router import (
    RoutingReport,
    TaskAssignment,
    TaskKind,
    WordLists,
    assign_task,
    load_wordlists,
    route_corpus,
)
from .tags import ALL_TAGS, LangId, UniversalTag

__all__ = [
    "ALL_TAGS",
    "AnnotationSession",
    "CorpusFormatError",
    "FinalTag",
    "Judgment",
    "JudgmentSource",
    "JudgmentStore",
    "LangId",
    "MappingError",
    "MappingTable",
    "MetricsReport",
    "Page",
    "QcConfig",
    "QuestionBank",
    "QuestionTree",
    "RoutingReport",
    "Split",
    "TaskAssignment",
    "TaskKind",
    "TestJudgmentSet",
    "TestQuestion",
    "Token",
    "TsqEntry",
    "UniversalTag",
    "VoteRecord",
    "VoteResult",
    "Worker",
    "WorkerStatus",
    "accuracy_k_plus_1",
    "aggregate_token",
    "answer",
    "assign_task",
    "build_page",
    "classify_split",
    "grade_screening",
    "invalidate_worker_judgments",
    "load_bank",
    "load_mapping",
    "load_wordlists",
    "majority_vote",
    "map_to_universal",
    "metrics_report",
    "mv_accuracy",
    "parse_corpus",
    "parse_corpus_file",
    "per_tag_recall",
    "record_test_result",
    "register_worker",
    "replay_trail",
    "resolve_tie",
    "route_corpus",
    "serialize_corpus",
    "single_judgment_stats",
    "start_session",
    "tree_paths",
    "validate_bank",
    "vote_split_percentages",
]

__version__ = "0.1.0"
