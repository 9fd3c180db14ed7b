from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import numpy as np

from statedelta.codecs.sde import CodecError, DeltaTrajectory, HiddenStateTrajectory, InjectionPlan, encode_sde

# pseudo layer id under which CIPHER embeddings travel on the wire
EMBED_LAYER = 0xFFFF


@dataclass(frozen=True)
class DeltaPayload:
    layers: Mapping[int, DeltaTrajectory]
    kind = "sde"

    def arrays(self) -> dict[int, np.ndarray]:
        return {l: t.deltas for l, t in sorted(self.layers.items())}


@dataclass(frozen=True)
class RawStatePayload:
    """``h_1..h_n`` per layer (``h_0`` excluded, one row per token)."""

    layers: Mapping[int, np.ndarray]
    kind = "raw"

    def arrays(self) -> dict[int, np.ndarray]:
        return {l: np.asarray(a, dtype=np.float32) for l, a in sorted(self.layers.items())}


@dataclass(frozen=True)
class CipherPayload:
    embeddings: np.ndarray  # (n, d)
    nearest: tuple[int, ...]  # argmax token per step
    kind = "cipher"

    def arrays(self) -> dict[int, np.ndarray]:
        return {EMBED_LAYER: np.asarray(self.embeddings, dtype=np.float32)}


Payload = Union[DeltaPayload, RawStatePayload, CipherPayload, None]

_ids = itertools.count()


def _next_id() -> str:
    return f"m{next(_ids)}"


@dataclass(frozen=True)
class Message:
    sender: str
    tokens: tuple[int, ...]
    text: str = ""
    payload: Payload = None
    msg_id: str = field(default_factory=_next_id)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        n = len(self.tokens)
        if self.payload is not None:
            for layer, arr in self.payload.arrays().items():
                if arr.shape[0] != n:
                    raise CodecError(
                        f"payload at layer {layer} has {arr.shape[0]} rows for {n} tokens"
                    )

    @property
    def method(self) -> str:
        return "nl" if self.payload is None else self.payload.kind

    @property
    def payload_layers(self) -> tuple[int, ...]:
        if isinstance(self.payload, (DeltaPayload, RawStatePayload)):
            return tuple(sorted(self.payload.layers))
        return ()


def sde_payload(trajectories: Mapping[int, np.ndarray]) -> DeltaPayload:
    return DeltaPayload({l: encode_sde(HiddenStateTrajectory(l, t)) for l, t in sorted(trajectories.items())})


def raw_payload(trajectories: Mapping[int, np.ndarray]) -> RawStatePayload:
    return RawStatePayload({l: np.asarray(t[1:], dtype=np.float32) for l, t in sorted(trajectories.items())})


def build_injection_plan(msg: Message, span: tuple[int, int]) -> InjectionPlan:
    """Map the additive term for token ``i`` of ``msg`` to position ``span[0] + i``."""
    start, end = span
    if end - start != len(msg.tokens):
        raise CodecError(f"span {span} has length {end - start}, message has {len(msg.tokens)} tokens")
    if not isinstance(msg.payload, (DeltaPayload, RawStatePayload)):
        raise CodecError(f"message {msg.msg_id} carries no injectable payload ({msg.method})")
    return InjectionPlan(start, msg.payload.arrays())


def scale_payload(msg: Message, factor: float) -> Message:
    """Copy of ``msg`` with every latent row multiplied by ``factor``."""
    p = msg.payload
    f = np.float32(factor)
    if p is None:
        return msg
    if isinstance(p, DeltaPayload):
        new = DeltaPayload({l: DeltaTrajectory(l, t.deltas * f) for l, t in p.layers.items()})
    elif isinstance(p, RawStatePayload):
        new = RawStatePayload({l: np.asarray(a) * f for l, a in p.layers.items()})
    else:
        new = CipherPayload(np.asarray(p.embeddings) * f, p.nearest)
    return Message(msg.sender, msg.tokens, msg.text, new, msg.msg_id)
