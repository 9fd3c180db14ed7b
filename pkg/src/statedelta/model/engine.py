"""Decoder-only transformer inference with a KV cache and layer hooks.

Architecture: learned token and absolute position embeddings, ``n_layers``
pre-norm blocks (RMSNorm -> multi-head causal attention -> residual,
RMSNorm -> SiLU-gated MLP -> residual), final RMSNorm and an untied output
projection. The "hidden state" of layer ``l`` is the residual stream after
block ``l``; that is where states are captured and where injected deltas are
added, before block ``l + 1`` sees them.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

from statedelta.model import kernels
from statedelta.model.config import ConfigError, DecodeSettings, ModelConfig
from statedelta.model.tokenizer import Tokenizer


class GenerationError(RuntimeError):
    """Raised for position overflow or an inconsistent hook configuration."""


PromptItem = Union[int, np.integer, np.ndarray]


def weight_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, ff, V = config.d_model, config.d_ff, config.vocab_size
    shapes: dict[str, tuple[int, ...]] = {
        "tok_emb": (V, d),
        "pos_emb": (config.max_seq, d),
    }
    for i in range(config.n_layers):
        p = f"layers.{i}."
        shapes[p + "attn_norm"] = (d,)
        shapes[p + "wq"] = (d, d)
        shapes[p + "wk"] = (d, d)
        shapes[p + "wv"] = (d, d)
        shapes[p + "wo"] = (d, d)
        shapes[p + "mlp_norm"] = (d,)
        shapes[p + "w_gate"] = (d, ff)
        shapes[p + "w_up"] = (d, ff)
        shapes[p + "w_down"] = (ff, d)
    shapes["final_norm"] = (d,)
    shapes["lm_head"] = (d, V)
    return shapes


class ModelHandle:
    """Immutable weights + config + tokenizer. Safe to share across threads."""

    def __init__(self, config: ModelConfig, weights: Mapping[str, np.ndarray], tokenizer: Tokenizer | None = None):
        expected = weight_shapes(config)
        missing = sorted(set(expected) - set(weights))
        if missing:
            raise ConfigError(f"missing tensors: {missing[:5]}")
        extra = sorted(set(weights) - set(expected))
        if extra:
            raise ConfigError(f"unexpected tensors: {extra[:5]}")
        dtype = np.dtype(config.dtype)
        frozen = {}
        for name, shape in expected.items():
            arr = np.asarray(weights[name])
            if arr.shape != shape:
                raise ConfigError(f"tensor {name!r} has shape {arr.shape}, expected {shape}")
            arr = np.array(arr, dtype=dtype, order="C", copy=True)
            arr.setflags(write=False)
            frozen[name] = arr
        if tokenizer is None:
            tokenizer = Tokenizer(mode="byte")
        self.config = config
        self.weights = frozen
        self.tokenizer = tokenizer

    @property
    def n_layers(self) -> int:
        return self.config.n_layers

    def embedding_row(self, token: int) -> np.ndarray:
        token = int(token)
        if not 0 <= token < self.config.vocab_size:
            raise IndexError(f"token id {token} outside [0, {self.config.vocab_size})")
        return self.weights["tok_emb"][token]

    @property
    def embedding_table(self) -> np.ndarray:
        return self.weights["tok_emb"]

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.weights):
            arr = self.weights[name]
            h.update(name.encode())
            h.update(str(arr.shape).encode())
            h.update(arr.tobytes())
        return h.hexdigest()

    def new_session(self) -> "Session":
        return Session(self)


def build_toy_model(config: ModelConfig, seed: int, tokenizer: Tokenizer | None = None) -> ModelHandle:
    """Random weights from ``numpy.random.default_rng(seed)``, in a fixed draw order."""
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in weight_shapes(config).items():
        if name.endswith("norm"):
            weights[name] = np.ones(shape)
        elif name in ("tok_emb", "pos_emb"):
            weights[name] = rng.standard_normal(shape) * (1.0 if name == "tok_emb" else 0.3)
        else:
            weights[name] = rng.standard_normal(shape) / np.sqrt(shape[0])
    return ModelHandle(config, weights, tokenizer)


class HookBus:
    """Which layers to capture and which deltas to add where.

    Several plans may be added; deltas landing on the same (layer, position)
    are summed before touching the hidden state, so a plan followed by its
    negation cancels exactly.
    """

    def __init__(self, capture_layers: Iterable[int] = (), plans: Iterable = ()):
        self.capture_layers = frozenset(int(l) for l in capture_layers)
        self.injections: dict[int, dict[int, np.ndarray]] = {}
        for plan in plans:
            self.add_plan(plan)

    def add_plan(self, plan) -> "HookBus":
        """Accept an object with ``as_mapping()`` or a ``{layer: {pos: delta}}`` mapping."""
        mapping = plan.as_mapping() if hasattr(plan, "as_mapping") else plan
        for layer, by_pos in mapping.items():
            slot = self.injections.setdefault(int(layer), {})
            for pos, delta in by_pos.items():
                delta = np.asarray(delta, dtype=np.float32)
                pos = int(pos)
                if pos in slot:
                    slot[pos] = slot[pos] + delta
                else:
                    slot[pos] = delta.copy()
        return self

    @property
    def positions(self) -> set[int]:
        return {p for by_pos in self.injections.values() for p in by_pos}

    def validate(self, n_layers: int, start: int, end: int, d_model: int) -> None:
        for layer, by_pos in self.injections.items():
            if not 0 <= layer < n_layers:
                raise GenerationError(f"injection layer {layer} outside [0, {n_layers})")
            for pos, delta in by_pos.items():
                if pos >= end:
                    raise GenerationError(f"injection position {pos} >= sequence length {end}")
                if pos < start:
                    raise GenerationError(f"injection position {pos} was already processed (cache starts at {start})")
                if delta.shape != (d_model,):
                    raise GenerationError(f"delta at layer {layer} position {pos} has shape {delta.shape}")
        for layer in self.capture_layers:
            if not 0 <= layer < n_layers:
                raise GenerationError(f"capture layer {layer} outside [0, {n_layers})")


@dataclass
class ForwardResult:
    logits: np.ndarray  # (m, V) or (1, V) when only the last row was requested
    states: dict[int, np.ndarray]  # layer -> (m, d) residual after that block


@dataclass
class GenerationRecord:
    tokens: list[int]
    trajectories: dict[int, np.ndarray]  # layer -> (n + 1, d); row 0 = last prompt position
    start: int  # sequence position of the first generated token
    finish_reason: str  # "length" | "stop" | "eos" | "script"
    text: str = ""
    step_distributions: np.ndarray | None = None  # (n, V), CIPHER only
    fed_embeddings: np.ndarray | None = None  # (n, d), CIPHER only

    def __post_init__(self):
        n = len(self.tokens)
        for layer, traj in self.trajectories.items():
            if traj.shape[0] != n + 1:
                raise GenerationError(f"trajectory at layer {layer} has {traj.shape[0]} rows for {n} tokens")


def _silu(x):
    return x / (np.float32(1.0) + np.exp(-x))


class Session:
    """Incremental decoding state (KV cache) over one growing sequence.

    Not thread-safe; run one session per agent/question.
    """

    def __init__(self, handle: ModelHandle):
        cfg = handle.config
        self.handle = handle
        self.config = cfg
        shape = (cfg.n_layers, cfg.max_seq, cfg.n_heads, cfg.head_dim)
        self._k = np.zeros(shape, dtype=np.float32)
        self._v = np.zeros(shape, dtype=np.float32)
        self.length = 0
        self.history: list[int] = []  # token ids fed so far, -1 for raw embeddings
        self._last_states = np.zeros((cfg.n_layers, cfg.d_model), dtype=np.float32)
        self._last_logits: np.ndarray | None = None

    def _embed(self, inputs: Sequence[PromptItem]) -> tuple[np.ndarray, list[int]]:
        W = self.handle.weights
        d = self.config.d_model
        x = np.empty((len(inputs), d), dtype=np.float32)
        ids = []
        for i, item in enumerate(inputs):
            if isinstance(item, np.ndarray) and item.ndim == 1:
                if item.shape != (d,):
                    raise GenerationError(f"raw embedding at offset {i} has shape {item.shape}")
                x[i] = item
                ids.append(-1)
            else:
                t = int(item)
                if not 0 <= t < self.config.vocab_size:
                    raise GenerationError(f"token id {t} outside vocabulary")
                x[i] = W["tok_emb"][t]
                ids.append(t)
        return x, ids

    def forward(
        self,
        inputs: Sequence[PromptItem],
        hooks: HookBus | None = None,
        capture: Iterable[int] = (),
        all_logits: bool = False,
    ) -> ForwardResult:
        """Process ``inputs`` at the next positions, updating the cache."""
        cfg = self.config
        W = self.handle.weights
        m = len(inputs)
        if m == 0:
            raise GenerationError("forward called with no inputs")
        start = self.length
        end = start + m
        if end > cfg.max_seq:
            raise GenerationError(f"position overflow: {end} > max_seq {cfg.max_seq}")
        capture = set(capture)
        if hooks is not None:
            hooks.validate(cfg.n_layers, start, end, cfg.d_model)
            capture |= hooks.capture_layers
        x, ids = self._embed(inputs)
        x = x + W["pos_emb"][start:end]
        H, dh = cfg.n_heads, cfg.head_dim
        states = {}
        for l in range(cfg.n_layers):
            p = f"layers.{l}."
            a = kernels.rms_norm(x, W[p + "attn_norm"], cfg.norm_eps)
            q = (a @ W[p + "wq"]).reshape(m, H, dh)
            self._k[l, start:end] = (a @ W[p + "wk"]).reshape(m, H, dh)
            self._v[l, start:end] = (a @ W[p + "wv"]).reshape(m, H, dh)
            att = kernels.causal_attention(q, self._k[l], self._v[l], start)
            x = x + att.reshape(m, cfg.d_model) @ W[p + "wo"]
            b = kernels.rms_norm(x, W[p + "mlp_norm"], cfg.norm_eps)
            x = x + (_silu(b @ W[p + "w_gate"]) * (b @ W[p + "w_up"])) @ W[p + "w_down"]
            if hooks is not None and l in hooks.injections:
                for pos, delta in hooks.injections[l].items():
                    x[pos - start] = x[pos - start] + delta
            if l in capture:
                states[l] = x.copy()
            self._last_states[l] = x[-1]
        x_out = x if all_logits else x[-1:]
        logits = kernels.rms_norm(x_out, W["final_norm"], cfg.norm_eps) @ W["lm_head"]
        self.length = end
        self.history.extend(ids)
        self._last_logits = logits[-1].copy()
        return ForwardResult(logits=logits, states=states)

    def last_state(self, layer: int) -> np.ndarray:
        return self._last_states[layer].copy()

    @property
    def last_logits(self) -> np.ndarray | None:
        return self._last_logits

    def generate(
        self,
        prompt: Sequence[PromptItem],
        settings: DecodeSettings,
        hooks: HookBus | None = None,
        capture_layers: Iterable[int] = (),
        stop: Callable[[str], bool] | None = None,
        forced_tokens: Sequence[int] | None = None,
        cipher_temperature: float | None = None,
        cipher_source: str = "logits",
        keep_distributions: bool = False,
    ) -> GenerationRecord:
        """Feed ``prompt`` (with ``hooks`` applied), then decode.

        Every generated token is itself fed back so that its hidden state is
        captured and cached; the trajectory therefore has ``n + 1`` rows.

        ``forced_tokens`` replaces token choice by a script (states are still
        real). ``cipher_temperature`` switches to CIPHER feedback: the
        probability-weighted embedding is fed instead of the chosen token and
        the argmax token is recorded.
        """
        cfg = self.config
        capture = sorted(set(capture_layers) | (hooks.capture_layers if hooks else set()))
        for l in capture:
            if not 0 <= l < cfg.n_layers:
                raise GenerationError(f"capture layer {l} outside [0, {cfg.n_layers})")
        if self.length + len(prompt) + settings.max_new_tokens > cfg.max_seq:
            raise GenerationError(
                f"position overflow: {self.length} cached + {len(prompt)} prompt + "
                f"{settings.max_new_tokens} new > max_seq {cfg.max_seq}"
            )
        if len(prompt):
            self.forward(prompt, hooks=hooks)
        elif hooks is not None and hooks.injections:
            raise GenerationError("injection plan given without prompt positions")
        if self.length == 0:
            raise GenerationError("cannot generate from an empty sequence")
        start = self.length
        rows = {l: [self._last_states[l].copy()] for l in capture}
        logits = self._last_logits
        rng = np.random.default_rng(settings.seed)
        tok = self.handle.tokenizer
        table = self.handle.embedding_table
        tokens: list[int] = []
        dists: list[np.ndarray] = []
        fed: list[np.ndarray] = []
        finish = "length"
        for step in range(settings.max_new_tokens):
            dist = None
            if forced_tokens is not None:
                if step >= len(forced_tokens):
                    finish = "script"
                    break
                token = int(forced_tokens[step])
            elif cipher_temperature is not None:
                if cipher_source == "sampling":
                    dist = sampling_distribution(logits, settings, self.history)
                else:
                    dist = softmax_at(logits, cipher_temperature)
                token = int(np.argmax(dist))
            else:
                token = choose_token(logits, settings, self.history, rng)
            if token == tok.eos_id:
                finish = "eos"
                break
            tokens.append(token)
            if dist is not None:
                emb = (dist.astype(np.float32)[None, :] @ table)[0]
                fed.append(emb)
                if keep_distributions:
                    dists.append(dist.astype(np.float32))
                res = self.forward([emb], capture=capture)
                self.history[-1] = token
            else:
                res = self.forward([token], capture=capture)
            for l in capture:
                rows[l].append(res.states[l][0])
            logits = self._last_logits
            if stop is not None and stop(tok.detokenize(tokens)):
                finish = "stop"
                break
        trajectories = {l: np.stack(r).astype(np.float32) for l, r in rows.items()}
        return GenerationRecord(
            tokens=tokens,
            trajectories=trajectories,
            start=start,
            finish_reason=finish,
            text=tok.detokenize(tokens),
            step_distributions=np.stack(dists) if dists else None,
            fed_embeddings=np.stack(fed) if fed else None,
        )


def softmax_at(logits: np.ndarray, temperature: float) -> np.ndarray:
    """Softmax of ``logits / temperature``; temperature 0 gives the argmax one-hot."""
    logits = np.asarray(logits, dtype=np.float64)
    if temperature <= 0:
        out = np.zeros_like(logits)
        out[int(np.argmax(logits))] = 1.0
        return out
    z = logits / temperature
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def _apply_repetition_penalty(logits: np.ndarray, history: Sequence[int], penalty: float) -> np.ndarray:
    if penalty == 1.0:
        return logits
    seen = np.unique(np.asarray([t for t in history if t >= 0], dtype=np.int64))
    if seen.size == 0:
        return logits
    out = logits.copy()
    vals = out[seen]
    out[seen] = np.where(vals > 0, vals / penalty, vals * penalty)
    return out


def sampling_distribution(logits: np.ndarray, settings: DecodeSettings, history: Sequence[int]) -> np.ndarray:
    """Next-token distribution after repetition penalty, temperature, top-k and top-p."""
    logits = _apply_repetition_penalty(np.asarray(logits, dtype=np.float64), history, settings.repetition_penalty)
    probs = softmax_at(logits, settings.temperature)
    if settings.temperature <= 0:
        return probs
    order = np.argsort(-probs, kind="stable")
    keep = np.zeros(probs.shape, dtype=bool)
    ranked = probs[order]
    n_keep = len(ranked)
    if settings.top_k > 0:
        n_keep = min(n_keep, settings.top_k)
    if settings.top_p < 1.0:
        cum = np.cumsum(ranked)
        # smallest prefix whose mass reaches top_p
        n_keep = min(n_keep, int(np.searchsorted(cum, settings.top_p)) + 1)
    keep[order[:n_keep]] = True
    probs = np.where(keep, probs, 0.0)
    return probs / probs.sum()


def choose_token(logits: np.ndarray, settings: DecodeSettings, history: Sequence[int], rng: np.random.Generator) -> int:
    if settings.mode == "greedy" or settings.temperature == 0:
        return int(np.argmax(logits))
    probs = sampling_distribution(logits, settings, history)
    return int(rng.choice(len(probs), p=probs))


def generate(
    handle: ModelHandle,
    prompt_positions: Sequence[PromptItem],
    settings: DecodeSettings,
    hooks: HookBus | None = None,
    **kwargs,
) -> GenerationRecord:
    """One-shot generation in a fresh session."""
    return Session(handle).generate(prompt_positions, settings, hooks=hooks, **kwargs)
