from statedelta.environment.bm25 import RetrievalIndex, analyze, build_index, retrieve, score_all, shard_docs
from statedelta.environment.corpus import CorpusError, Document, load_corpus, split_sentences, write_corpus
from statedelta.environment.datasets import (
    FEVER_LABELS,
    KINDS,
    DatasetError,
    QuestionRecord,
    fixture_path,
    load_dataset,
    write_dataset,
)
from statedelta.environment.workflow_env import (
    EnvState,
    ParseFailure,
    ToolEnvironment,
    WorkflowAction,
    env_step,
    parse_action,
)

__all__ = [
    "FEVER_LABELS",
    "KINDS",
    "CorpusError",
    "DatasetError",
    "Document",
    "EnvState",
    "ParseFailure",
    "QuestionRecord",
    "RetrievalIndex",
    "ToolEnvironment",
    "WorkflowAction",
    "analyze",
    "build_index",
    "env_step",
    "fixture_path",
    "load_corpus",
    "load_dataset",
    "parse_action",
    "retrieve",
    "score_all",
    "shard_docs",
    "split_sentences",
    "write_corpus",
    "write_dataset",
]
