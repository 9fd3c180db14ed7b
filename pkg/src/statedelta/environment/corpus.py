from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

ABBREVIATIONS = frozenset(
    "mr mrs ms dr prof st jr sr vs etc inc ltd co corp no fig gen col lt sgt rev mt ft e.g i.e u.s u.k a.d b.c approx".split()
)
_BOUNDARY = re.compile(r"(?<=[.!?])\s+")


class CorpusError(ValueError):
    pass


def split_sentences(text: str) -> list[str]:
    """Split on ". ", "! ", "? " unless the word before the stop is a known abbreviation."""
    out: list[str] = []
    buf = ""
    pos = 0
    for m in _BOUNDARY.finditer(text):
        piece = text[pos : m.start()]
        pos = m.end()
        buf = f"{buf} {piece}" if buf else piece
        last = buf.rsplit(None, 1)[-1].lower().rstrip(".!?") if buf.strip() else ""
        if buf.endswith(".") and (last in ABBREVIATIONS or re.fullmatch(r"[a-z]", last)):
            continue
        out.append(buf.strip())
        buf = ""
    tail = text[pos:]
    buf = f"{buf} {tail}" if buf else tail
    if buf.strip():
        out.append(buf.strip())
    return out


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    text: str
    paragraphs: tuple[str, ...] = field(init=False, repr=False, compare=False)
    sentences: tuple[str, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise CorpusError(f"document {self.id!r} has empty text")
        paras = tuple(p.strip() for p in self.text.split("\n") if p.strip())
        object.__setattr__(self, "paragraphs", paras)
        object.__setattr__(self, "sentences", tuple(s for p in paras for s in split_sentences(p)))

    @property
    def first_paragraph(self) -> str:
        return self.paragraphs[0]

    def to_dict(self) -> dict:
        return {"id": self.id, "title": self.title, "text": self.text}


def load_corpus(path) -> list[Document]:
    docs = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                doc = Document(str(rec["id"]), str(rec["title"]), str(rec["text"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: malformed corpus record ({exc})") from None
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
            if doc.id in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate id {doc.id!r}")
            seen.add(doc.id)
            docs.append(doc)
    return docs


def write_corpus(docs: Iterable[Document], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_dict(), ensure_ascii=False) + "\n")
