from statedelta.codecs.cipher import cipher_distributions, encode_cipher
from statedelta.codecs.message import (
    EMBED_LAYER,
    CipherPayload,
    DeltaPayload,
    Message,
    RawStatePayload,
    build_injection_plan,
    raw_payload,
    scale_payload,
    sde_payload,
)
from statedelta.codecs.sde import (
    CodecError,
    DeltaTrajectory,
    HiddenStateTrajectory,
    InjectionPlan,
    decode_sde,
    encode_sde,
    inject,
)
from statedelta.codecs.wire import WireError, WirePacket, deserialize, overhead_report, payload_size, serialize

__all__ = [
    "EMBED_LAYER",
    "CipherPayload",
    "CodecError",
    "DeltaPayload",
    "DeltaTrajectory",
    "HiddenStateTrajectory",
    "InjectionPlan",
    "Message",
    "RawStatePayload",
    "WireError",
    "WirePacket",
    "build_injection_plan",
    "cipher_distributions",
    "decode_sde",
    "deserialize",
    "encode_cipher",
    "encode_sde",
    "inject",
    "overhead_report",
    "payload_size",
    "raw_payload",
    "scale_payload",
    "sde_payload",
    "serialize",
]
