from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


class ConfigError(ValueError):
    """Invalid model or decoding configuration."""


_DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 4
    d_model: int = 32
    n_heads: int = 4
    vocab_size: int = 256
    max_seq: int = 2048
    dtype: str = "float32"
    norm_eps: float = 1e-5
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.n_layers < 1:
            raise ConfigError(f"n_layers must be >= 1, got {self.n_layers}")
        if self.n_heads < 1 or self.d_model < 1:
            raise ConfigError("d_model and n_heads must be positive")
        if self.d_model % self.n_heads:
            raise ConfigError(
                f"d_model ({self.d_model}) is not divisible by n_heads ({self.n_heads})"
            )
        if self.vocab_size < 2:
            raise ConfigError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.max_seq < 1:
            raise ConfigError(f"max_seq must be >= 1, got {self.max_seq}")
        if self.dtype not in _DTYPES:
            raise ConfigError(f"unsupported dtype {self.dtype!r}")
        if self.mlp_ratio < 1:
            raise ConfigError("mlp_ratio must be >= 1")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def d_ff(self) -> int:
        return self.d_model * self.mlp_ratio

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        return cls(**known)


@dataclass(frozen=True)
class DecodeSettings:
    """Decoding controls. Greedy mode ignores every sampling field."""

    mode: str = "greedy"
    temperature: float = 1.0
    top_p: float = 1.0
    top_k: int = 0
    repetition_penalty: float = 1.0
    max_new_tokens: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("greedy", "sampled"):
            raise ConfigError(f"mode must be 'greedy' or 'sampled', got {self.mode!r}")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.max_new_tokens < 1:
            raise ConfigError("max_new_tokens must be >= 1")
        if not 0 < self.top_p <= 1:
            raise ConfigError("top_p must be in (0, 1]")
        if self.top_k < 0:
            raise ConfigError("top_k must be >= 0")
        if self.repetition_penalty <= 0:
            raise ConfigError("repetition_penalty must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DecodeSettings":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        return cls(**known)


# generation_config defaults shipped with the Qwen2.5 and Llama 3.1 instruct
# checkpoints; debate runs decode with these
QWEN_DEFAULTS = DecodeSettings(
    mode="sampled", temperature=0.7, top_p=0.8, top_k=20, repetition_penalty=1.05
)
LLAMA_DEFAULTS = DecodeSettings(mode="sampled", temperature=0.6, top_p=0.9)
