"""Toy tokenizer: whitespace splitting with a byte-level fallback.

Ids ``0..255`` are raw bytes, ``256`` is the end-of-sequence marker and ids
from ``257`` on are whole pieces from the vocabulary. A piece is a maximal run
of whitespace or of non-whitespace characters. Pieces not in the vocabulary
are emitted as their UTF-8 bytes, so every string is covered and
``detokenize(tokenize(s)) == s`` for any ``s``.
"""
from __future__ import annotations

import json
import re
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

N_BYTES = 256
EOS_ID = 256
FIRST_PIECE_ID = 257

# a word carries its leading whitespace, as in common BPE pre-tokenizers
_PIECE_RE = re.compile(r"\s*\S+|\s+")
_UNKNOWN = "\ufffd".encode("utf-8")


class Tokenizer:
    def __init__(self, pieces: Sequence[str] = (), mode: str = "word"):
        if mode not in ("word", "byte"):
            raise ValueError(f"unknown tokenizer mode {mode!r}")
        self.mode = mode
        self.pieces = list(pieces)
        if len(set(self.pieces)) != len(self.pieces):
            raise ValueError("duplicate vocabulary pieces")
        self._piece_to_id = {p: FIRST_PIECE_ID + i for i, p in enumerate(self.pieces)}
        self._id_bytes = [bytes([b]) for b in range(N_BYTES)] + [b""]
        self._id_bytes += [p.encode("utf-8") for p in self.pieces]

    @property
    def vocab_size(self) -> int:
        return FIRST_PIECE_ID + len(self.pieces)

    @property
    def eos_id(self) -> int:
        return EOS_ID

    def tokenize(self, text: str) -> list[int]:
        if self.mode == "byte":
            return list(text.encode("utf-8"))
        ids: list[int] = []
        for piece in _PIECE_RE.findall(text):
            pid = self._piece_to_id.get(piece)
            if pid is None:
                ids.extend(piece.encode("utf-8"))
            else:
                ids.append(pid)
        return ids

    def token_bytes(self, ids: Iterable[int]) -> bytes:
        # ids the model knows but the vocabulary does not render as U+FFFD
        table = self._id_bytes
        n = len(table)
        return b"".join(table[i] if 0 <= i < n else _UNKNOWN for i in map(int, ids))

    def detokenize(self, ids: Iterable[int]) -> str:
        # generated byte tokens need not form valid UTF-8
        return self.token_bytes(ids).decode("utf-8", errors="replace")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "pieces": self.pieces}

    @classmethod
    def from_dict(cls, data: dict) -> "Tokenizer":
        return cls(data.get("pieces", ()), mode=data.get("mode", "word"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Tokenizer":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def train(cls, texts: Iterable[str], max_pieces: int = 4096, min_count: int = 2) -> "Tokenizer":
        """Vocabulary of the most frequent multi-byte pieces in ``texts``."""
        counts: Counter[str] = Counter()
        for text in texts:
            counts.update(_PIECE_RE.findall(text))
        ranked = sorted(
            (p for p, c in counts.items() if c >= min_count and len(p.encode("utf-8")) > 1),
            key=lambda p: (-counts[p], p),
        )
        return cls(ranked[:max_pieces])

    def __eq__(self, other):
        return isinstance(other, Tokenizer) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"Tokenizer(mode={self.mode!r}, vocab_size={self.vocab_size})"
