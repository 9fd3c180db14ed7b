"""Flat tensor container.

Layout::

    u64 little-endian  header length N
    N bytes            UTF-8 JSON header
    ...                tensor payloads, raw little-endian, back to back

The header holds ``config`` (a :class:`ModelConfig` dict), optional
``tokenizer`` and ``tensors``: a list of ``{name, shape, dtype, offset,
nbytes}`` with offsets counted from the first payload byte.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from statedelta.model.config import ConfigError, ModelConfig
from statedelta.model.engine import ModelHandle, weight_shapes
from statedelta.model.tokenizer import Tokenizer

FORMAT = "statedelta-tensors"
VERSION = 1
_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8"), "f16": np.dtype("<f2")}
_DTYPE_TAGS = {v: k for k, v in _DTYPES.items()}


class ArchiveError(ValueError):
    pass


class TruncatedArchive(ArchiveError):
    pass


class ShapeMismatch(ArchiveError):
    pass


class UnknownDtype(ArchiveError):
    pass


def export_tensor_archive(handle: ModelHandle, path) -> None:
    tensors = []
    blobs = []
    offset = 0
    for name in sorted(handle.weights):
        arr = handle.weights[name]
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        tag = _DTYPE_TAGS[np.dtype(le.dtype)]
        blob = le.tobytes(order="C")
        tensors.append({"name": name, "shape": list(arr.shape), "dtype": tag, "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = {
        "format": FORMAT,
        "version": VERSION,
        "config": handle.config.to_dict(),
        "tokenizer": handle.tokenizer.to_dict(),
        "tensors": tensors,
    }
    raw = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        for blob in blobs:
            fh.write(blob)
    tmp.replace(path)


def load_tensor_archive(path) -> ModelHandle:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise TruncatedArchive(f"{path}: file shorter than the length prefix")
    (hlen,) = struct.unpack_from("<Q", data, 0)
    if 8 + hlen > len(data):
        raise TruncatedArchive(f"{path}: header length {hlen} exceeds file size {len(data)}")
    try:
        header = json.loads(data[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArchiveError(f"{path}: unreadable header: {exc}") from None
    if header.get("format") != FORMAT:
        raise ArchiveError(f"{path}: not a {FORMAT} archive")
    if header.get("version") != VERSION:
        raise ArchiveError(f"{path}: unsupported version {header.get('version')}")
    try:
        config = ModelConfig.from_dict(header["config"])
    except (KeyError, TypeError, ConfigError) as exc:
        raise ArchiveError(f"{path}: bad config: {exc}") from None
    expected = weight_shapes(config)
    payload = memoryview(data)[8 + hlen :]
    weights = {}
    for entry in header.get("tensors", []):
        name = entry["name"]
        tag = entry["dtype"]
        if tag not in _DTYPES:
            raise UnknownDtype(f"tensor {name!r}: unknown dtype {tag!r}")
        dtype = _DTYPES[tag]
        shape = tuple(entry["shape"])
        if name in expected and shape != expected[name]:
            raise ShapeMismatch(f"tensor {name!r} has shape {shape}, config expects {expected[name]}")
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if entry.get("nbytes", nbytes) != nbytes:
            raise ShapeMismatch(f"tensor {name!r}: byte count {entry['nbytes']} does not match shape {shape}")
        off = int(entry["offset"])
        if off < 0 or off + nbytes > len(payload):
            raise TruncatedArchive(f"tensor {name!r} extends past end of file")
        weights[name] = np.frombuffer(payload[off : off + nbytes], dtype=dtype).reshape(shape)
    tok = Tokenizer.from_dict(header["tokenizer"]) if header.get("tokenizer") else None
    try:
        return ModelHandle(config, weights, tok)
    except ConfigError as exc:
        raise ShapeMismatch(str(exc)) from None
