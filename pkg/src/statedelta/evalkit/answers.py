"""Answer extraction and normalization."""
from __future__ import annotations

import re
import string
from dataclasses import dataclass

FORMATS = ("boxed", "choice", "finish")

_CHOICE = re.compile(r"\(([A-Z])\)")
_FINISH = re.compile(r"Finish\[([^\[\]\n]*)\]")
_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = str.maketrans("", "", string.punctuation)


def normalize(text: str) -> str:
    """Lowercase, drop punctuation and articles, collapse whitespace."""
    text = text.lower().translate(_PUNCT)
    text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


@dataclass(frozen=True)
class ExtractedAnswer:
    raw: str
    source: str

    @property
    def normalized(self) -> str:
        return normalize(self.raw)


def _last_boxed(text: str) -> str | None:
    """Content of the last complete ``\\boxed{...}``, nested braces allowed."""
    start = text.rfind("\\boxed{")
    while start != -1:
        depth = 0
        i = start + len("\\boxed{")
        for j in range(i, len(text)):
            ch = text[j]
            if ch == "{":
                depth += 1
            elif ch == "}":
                if depth == 0:
                    return text[i:j]
                depth -= 1
        # unterminated; an earlier complete one still counts
        start = text.rfind("\\boxed{", 0, start)
    return None


def extract_answer(text: str, fmt: str) -> ExtractedAnswer | None:
    if fmt not in FORMATS:
        raise ValueError(f"unknown answer format {fmt!r}")
    if not isinstance(text, str):
        return None
    if fmt == "boxed":
        raw = _last_boxed(text)
    elif fmt == "choice":
        found = _CHOICE.findall(text)
        raw = found[-1] if found else None
    else:
        found = _FINISH.findall(text)
        raw = found[-1].strip() if found else None
    return None if raw is None else ExtractedAnswer(raw, fmt)
