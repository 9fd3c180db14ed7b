"""Agents: one shared model handle, per-agent session and method."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from statedelta.codecs.message import (
    CipherPayload,
    DeltaPayload,
    Message,
    RawStatePayload,
    build_injection_plan,
    raw_payload,
    sde_payload,
)
from statedelta.codecs.sde import InjectionPlan
from statedelta.model.config import DecodeSettings
from statedelta.model.engine import GenerationRecord, HookBus, ModelHandle, Session
from statedelta.orchestration.prompt import AssembledPrompt

METHODS = ("nl", "sde", "cipher", "raw")
_PAYLOAD_TYPES = {"sde": DeltaPayload, "raw": RawStatePayload, "cipher": CipherPayload}


class AgentError(RuntimeError):
    pass


@dataclass(frozen=True)
class AgentProfile:
    agent_id: str
    method: str = "nl"
    layers: tuple[int, ...] = ()
    settings: DecodeSettings = DecodeSettings()
    documents: tuple = ()
    cipher_temperature: float | None = None
    script: tuple[str, ...] | None = None  # forced response texts, one per turn

    def __post_init__(self):
        if self.method not in METHODS:
            raise AgentError(f"unknown method {self.method!r}")
        if self.method in ("sde", "raw") and not self.layers:
            raise AgentError(f"{self.method} agent needs at least one layer")
        if self.method == "cipher" and self.cipher_temperature is None:
            raise AgentError("cipher agent needs a temperature")


@dataclass
class Agent:
    profile: AgentProfile
    handle: ModelHandle
    session: Session | None = None
    turns_taken: int = 0

    def __post_init__(self):
        if self.session is None:
            self.session = self.handle.new_session()

    @property
    def agent_id(self) -> str:
        return self.profile.agent_id

    def reset_session(self) -> None:
        self.session = self.handle.new_session()


@dataclass
class Response:
    message: Message
    record: GenerationRecord
    prompt: AssembledPrompt
    plans: list[InjectionPlan] = field(default_factory=list)
    embedded: list[str] = field(default_factory=list)  # CIPHER spans fed as vectors


def _expected_payload(method: str, msg: Message) -> None:
    want = _PAYLOAD_TYPES[method]
    if not isinstance(msg.payload, want):
        raise AgentError(
            f"span/payload mismatch: {method} receiver got message {msg.msg_id} with {msg.method} payload"
        )


def agent_respond(
    agent: Agent,
    prompt: AssembledPrompt,
    msg_id: str | None = None,
    stop: Callable[[str], bool] | None = None,
    seed: int | None = None,
    payload_transform: Callable[[Message], Message] | None = None,
) -> Response:
    """Feed ``prompt`` into the agent's session and generate its reply.

    Peer messages in the prompt are augmented per the agent's method; the
    agent's own earlier messages never are.
    """
    prof = agent.profile
    session = agent.session
    if prompt.offset != session.length:
        raise AgentError(f"prompt assembled at offset {prompt.offset}, session holds {session.length}")
    plans: list[InjectionPlan] = []
    embedded: list[str] = []
    for mid, span in sorted(prompt.spans.items(), key=lambda kv: kv[1]):
        msg = prompt.messages[mid]
        if msg.sender == prof.agent_id or prof.method == "nl":
            continue
        _expected_payload(prof.method, msg)
        if prof.method == "cipher":
            embedded.append(mid)
        else:
            plans.append(build_injection_plan(msg, span))
    capture = prof.layers if prof.method in ("sde", "raw") else ()
    hooks = HookBus(capture_layers=capture, plans=plans)
    settings = prof.settings if seed is None else replace(prof.settings, seed=seed)
    forced = None
    if prof.script is not None and agent.turns_taken < len(prof.script):
        tok = agent.handle.tokenizer
        forced = tok.tokenize(prof.script[agent.turns_taken])[: settings.max_new_tokens]
    cipher_t = prof.cipher_temperature if prof.method == "cipher" and forced is None else None
    record = session.generate(
        prompt.inputs(embed_cipher=prof.method == "cipher"),
        settings,
        hooks=hooks,
        stop=stop,
        forced_tokens=forced,
        cipher_temperature=cipher_t,
    )
    agent.turns_taken += 1
    payload = None
    if prof.method == "sde":
        payload = sde_payload({l: record.trajectories[l] for l in prof.layers})
    elif prof.method == "raw":
        payload = raw_payload({l: record.trajectories[l] for l in prof.layers})
    elif prof.method == "cipher":
        if record.fed_embeddings is not None:
            emb = record.fed_embeddings
        else:
            d = agent.handle.config.d_model
            emb = np.stack([agent.handle.embedding_row(t) for t in record.tokens]) if record.tokens else np.zeros((0, d), np.float32)
        payload = CipherPayload(np.asarray(emb, dtype=np.float32), tuple(record.tokens))
    kw = {"msg_id": msg_id} if msg_id else {}
    msg = Message(prof.agent_id, tuple(record.tokens), record.text, payload, **kw)
    if payload_transform is not None:
        msg = payload_transform(msg)
    return Response(msg, record, prompt, plans, embedded)


def share_handle(agents: Sequence[Agent]) -> ModelHandle:
    """The single model all agents run on; mixing models is an error."""
    if not agents:
        raise AgentError("no agents")
    handle = agents[0].handle
    for a in agents[1:]:
        if a.handle is not handle and a.handle.checksum() != handle.checksum():
            raise AgentError("agents in one run must share one model handle")
        if a.handle.tokenizer != handle.tokenizer:
            raise AgentError("agents in one run must share one tokenizer")
    return handle
