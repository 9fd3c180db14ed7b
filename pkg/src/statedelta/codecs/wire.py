"""Binary transport for latent payloads.

Packet layout, all integers little-endian::

    b"SDE1"                 magic
    u16                     format version (1)
    u16                     layer count L
    L x u16                 layer ids
    u32                     n_tokens
    u32                     d_model
    u8                      dtype tag (1 = float32, 2 = float16)
    u32                     CRC-32 of every header byte above
    payload                 L * n_tokens * d_model elements,
                            layer-major, token-minor, row-major rows

The CRC makes any single corrupted header byte a parse error instead of a
silently relabelled payload.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import Mapping

import numpy as np

MAGIC = b"SDE1"
VERSION = 1
DTYPE_TAGS = {1: np.dtype("<f4"), 2: np.dtype("<f2")}
_TAG_OF = {"float32": 1, "f32": 1, "float16": 2, "f16": 2}


class WireError(ValueError):
    pass


@dataclass(frozen=True)
class WirePacket:
    version: int
    layer_ids: tuple[int, ...]
    n_tokens: int
    d_model: int
    dtype_tag: int
    payload: bytes

    @property
    def bytes_per_element(self) -> int:
        return DTYPE_TAGS[self.dtype_tag].itemsize

    def header_bytes(self) -> bytes:
        head = MAGIC + struct.pack("<HH", self.version, len(self.layer_ids))
        head += struct.pack(f"<{len(self.layer_ids)}H", *self.layer_ids)
        head += struct.pack("<IIB", self.n_tokens, self.d_model, self.dtype_tag)
        return head + struct.pack("<I", zlib.crc32(head))

    def to_bytes(self) -> bytes:
        return self.header_bytes() + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "WirePacket":
        data = bytes(data)
        if len(data) < 8 or data[:4] != MAGIC:
            raise WireError("bad magic")
        version, n_layers = struct.unpack_from("<HH", data, 4)
        off = 8
        fixed = 2 * n_layers + 4 + 4 + 1
        if len(data) < off + fixed + 4:
            raise WireError("truncated header")
        layer_ids = struct.unpack_from(f"<{n_layers}H", data, off)
        off += 2 * n_layers
        n_tokens, d_model, tag = struct.unpack_from("<IIB", data, off)
        off += 9
        (crc,) = struct.unpack_from("<I", data, off)
        if zlib.crc32(data[:off]) != crc:
            raise WireError("header checksum mismatch")
        off += 4
        if version != VERSION:
            raise WireError(f"version mismatch: packet {version}, reader {VERSION}")
        if tag not in DTYPE_TAGS:
            raise WireError(f"unknown dtype tag {tag}")
        if len(set(layer_ids)) != len(layer_ids):
            raise WireError("duplicate layer ids")
        expected = n_layers * n_tokens * d_model * DTYPE_TAGS[tag].itemsize
        payload = data[off:]
        if len(payload) != expected:
            raise WireError(f"length mismatch: payload {len(payload)} bytes, header implies {expected}")
        return cls(version, tuple(layer_ids), n_tokens, d_model, tag, payload)


def _arrays(payload) -> dict[int, np.ndarray]:
    if hasattr(payload, "arrays"):
        return payload.arrays()
    return {int(l): np.asarray(a) for l, a in payload.items()}


def serialize(payload, dtype: str = "float32") -> WirePacket:
    """Pack a latent payload (``Payload`` object or ``{layer: (n, d)}``)."""
    if dtype not in _TAG_OF:
        raise WireError(f"unknown dtype {dtype!r}")
    tag = _TAG_OF[dtype]
    arrays = _arrays(payload)
    layer_ids = tuple(arrays)
    shapes = {a.shape for a in arrays.values()}
    if len(shapes) > 1:
        raise WireError(f"layers disagree on shape: {sorted(shapes)}")
    n, d = shapes.pop() if shapes else (0, 0)
    for l in layer_ids:
        if not 0 <= l <= 0xFFFF:
            raise WireError(f"layer id {l} does not fit in u16")
    dt = DTYPE_TAGS[tag]
    body = b"".join(np.ascontiguousarray(arrays[l], dtype=dt).tobytes() for l in layer_ids)
    return WirePacket(VERSION, layer_ids, n, d, tag, body)


def deserialize(packet) -> dict[int, np.ndarray]:
    if not isinstance(packet, WirePacket):
        packet = WirePacket.from_bytes(packet)
    dt = DTYPE_TAGS[packet.dtype_tag]
    n, d = packet.n_tokens, packet.d_model
    flat = np.frombuffer(packet.payload, dtype=dt)
    if flat.size != len(packet.layer_ids) * n * d:
        raise WireError("length mismatch")
    out = {}
    for i, l in enumerate(packet.layer_ids):
        out[l] = flat[i * n * d : (i + 1) * n * d].reshape(n, d).astype(np.float32)
    return out


def payload_size(n_tokens: int, n_layers: int, d_model: int, bytes_per_element: int = 4) -> int:
    return n_tokens * n_layers * d_model * bytes_per_element


TOKEN_ID_BYTES = 4  # token ids travel as u32


def overhead_report(msg, dtype: str = "float32") -> dict:
    """Bytes for the token ids vs the latent payload of one message."""
    n = len(msg.tokens)
    token_bytes = n * TOKEN_ID_BYTES
    if msg.payload is None:
        latent = 0
    else:
        arrays = _arrays(msg.payload)
        d = next(iter(arrays.values())).shape[1] if arrays else 0
        latent = payload_size(n, len(arrays), d, DTYPE_TAGS[_TAG_OF[dtype]].itemsize)
    ratio = latent / token_bytes if token_bytes and latent else 0.0
    return {"token_bytes": token_bytes, "latent_bytes": latent, "ratio": ratio}
