from statedelta.model.archive import (
    ArchiveError,
    ShapeMismatch,
    TruncatedArchive,
    UnknownDtype,
    export_tensor_archive,
    load_tensor_archive,
)
from statedelta.model.config import ConfigError, DecodeSettings, LLAMA_DEFAULTS, ModelConfig, QWEN_DEFAULTS
from statedelta.model.engine import (
    GenerationError,
    GenerationRecord,
    HookBus,
    ModelHandle,
    Session,
    build_toy_model,
    generate,
    softmax_at,
)
from statedelta.model.tokenizer import Tokenizer

__all__ = [
    "ArchiveError",
    "ConfigError",
    "DecodeSettings",
    "GenerationError",
    "GenerationRecord",
    "HookBus",
    "LLAMA_DEFAULTS",
    "ModelConfig",
    "ModelHandle",
    "QWEN_DEFAULTS",
    "Session",
    "ShapeMismatch",
    "Tokenizer",
    "TruncatedArchive",
    "UnknownDtype",
    "build_toy_model",
    "export_tensor_archive",
    "generate",
    "load_tensor_archive",
    "softmax_at",
]
