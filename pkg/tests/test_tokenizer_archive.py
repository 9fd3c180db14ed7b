import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from statedelta.model import (
    ArchiveError,
    ModelConfig,
    ShapeMismatch,
    Tokenizer,
    TruncatedArchive,
    UnknownDtype,
    build_toy_model,
    export_tensor_archive,
    load_tensor_archive,
)
from statedelta.model.tokenizer import EOS_ID, FIRST_PIECE_ID


def test_byte_mode_is_utf8():
    tok = Tokenizer(mode="byte")
    assert tok.tokenize("hé") == list("hé".encode())
    assert tok.detokenize(tok.tokenize("hé")) == "hé"
    assert tok.vocab_size == FIRST_PIECE_ID and tok.eos_id == EOS_ID


@settings(max_examples=60, deadline=None)
@given(st.text(max_size=80))
def test_word_roundtrip(text):
    tok = Tokenizer([" the", "cat", " sat", "\n"])
    assert tok.detokenize(tok.tokenize(text)) == text


def test_known_pieces_and_fallback():
    tok = Tokenizer(["Hello", " world"])
    ids = tok.tokenize("Hello world ?")
    assert ids[:2] == [FIRST_PIECE_ID, FIRST_PIECE_ID + 1]
    # unknown pieces fall back to their bytes
    assert ids[2:] == list(b" ?")


def test_unknown_ids_render_replacement():
    tok = Tokenizer(mode="byte")
    assert tok.detokenize([104, 9999]) == "h�"
    assert tok.detokenize([EOS_ID]) == ""


def test_train_ranks_by_frequency():
    tok = Tokenizer.train(["a bb bb cc", "bb cc dd"], min_count=2)
    assert tok.pieces[0] == " bb"
    assert "dd" not in "".join(tok.pieces)


def test_duplicate_pieces_rejected():
    with pytest.raises(ValueError):
        Tokenizer(["x1", "x1"])


def test_save_load(tmp_path):
    tok = Tokenizer(["alpha", " beta"])
    tok.save(tmp_path / "v.json")
    assert Tokenizer.load(tmp_path / "v.json") == tok


@pytest.fixture
def archive(tmp_path):
    tok = Tokenizer(["one", " two"])
    h = build_toy_model(ModelConfig(n_layers=2, d_model=8, n_heads=2, vocab_size=300, max_seq=32), seed=3, tokenizer=tok)
    path = tmp_path / "m.sdt"
    export_tensor_archive(h, path)
    return h, path


def test_archive_roundtrip(archive):
    h, path = archive
    back = load_tensor_archive(path)
    assert back.checksum() == h.checksum()
    assert back.config == h.config
    assert back.tokenizer == h.tokenizer
    for name, arr in h.weights.items():
        assert np.array_equal(back.weights[name], arr)


def _header(path):
    data = path.read_bytes()
    (n,) = struct.unpack_from("<Q", data, 0)
    return data, n, json.loads(data[8 : 8 + n])


def _rewrite(path, header, payload):
    raw = json.dumps(header).encode()
    path.write_bytes(struct.pack("<Q", len(raw)) + raw + payload)


def test_archive_truncated(archive):
    _, path = archive
    data = path.read_bytes()
    path.write_bytes(data[:-10])
    with pytest.raises(TruncatedArchive):
        load_tensor_archive(path)
    path.write_bytes(data[:4])
    with pytest.raises(TruncatedArchive):
        load_tensor_archive(path)


def test_archive_shape_mismatch(archive):
    _, path = archive
    data, n, header = _header(path)
    header["tensors"][0]["shape"] = [1, 1]
    _rewrite(path, header, data[8 + n :])
    with pytest.raises(ShapeMismatch):
        load_tensor_archive(path)


def test_archive_unknown_dtype(archive):
    _, path = archive
    data, n, header = _header(path)
    header["tensors"][0]["dtype"] = "bf16"
    _rewrite(path, header, data[8 + n :])
    with pytest.raises(UnknownDtype):
        load_tensor_archive(path)


def test_archive_missing_tensor(archive):
    _, path = archive
    data, n, header = _header(path)
    header["tensors"] = header["tensors"][1:]
    _rewrite(path, header, data[8 + n :])
    with pytest.raises(ArchiveError):
        load_tensor_archive(path)


def test_archive_not_an_archive(tmp_path):
    p = tmp_path / "x"
    raw = b'{"format": "other"}'
    p.write_bytes(struct.pack("<Q", len(raw)) + raw)
    with pytest.raises(ArchiveError):
        load_tensor_archive(p)
