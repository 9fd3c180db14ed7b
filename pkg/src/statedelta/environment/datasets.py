"""Line-delimited question sets: ``{id, question, answers[], kind}`` per line."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

KINDS = ("open", "yesno", "choice", "numeric", "fever")
FEVER_LABELS = ("SUPPORTS", "REFUTES", "NOT ENOUGH INFO")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class QuestionRecord:
    id: str
    question: str
    answers: tuple[str, ...]
    kind: str = "open"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DatasetError(f"unknown kind {self.kind!r}")
        if not self.question.strip():
            raise DatasetError("empty question")
        if not self.answers:
            raise DatasetError("no gold answers")

    @property
    def is_yesno(self) -> bool:
        return self.kind == "yesno"

    @property
    def is_choice(self) -> bool:
        return self.kind == "choice"

    def to_dict(self) -> dict:
        return {"id": self.id, "question": self.question, "answers": list(self.answers), "kind": self.kind}


def load_dataset(path) -> list[QuestionRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                answers = rec["answers"]
                if isinstance(answers, str) or not isinstance(answers, list):
                    raise TypeError("answers must be a list")
                out.append(
                    QuestionRecord(
                        str(rec["id"]),
                        str(rec["question"]),
                        tuple(str(a) for a in answers),
                        str(rec.get("kind", "open")),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, DatasetError) as exc:
                raise DatasetError(f"{path}:{lineno}: malformed record ({exc})") from None
    ids = [r.id for r in out]
    if len(set(ids)) != len(ids):
        raise DatasetError(f"{path}: duplicate question ids")
    return out


def write_dataset(records: Iterable[QuestionRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")


ASSETS = Path(__file__).resolve().parent.parent / "assets"


def fixture_path(name: str) -> Path:
    """Path of a bundled fixture file, e.g. ``fixture_path("questions.jsonl")``."""
    return ASSETS / "fixtures" / name
