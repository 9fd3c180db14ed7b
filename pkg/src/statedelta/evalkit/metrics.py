"""EM, token F1 and kind-specific accuracy."""
from __future__ import annotations

import math
import re
from collections import Counter
from typing import Iterable

from statedelta.evalkit.answers import normalize

_NUMBER = re.compile(r"-?\d[\d,]*(?:\.\d+)?|-?\.\d+")


def exact_match(pred: str, golds: Iterable[str]) -> float:
    p = normalize(pred)
    return float(any(p == normalize(g) for g in golds))


def _f1(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens or not gold_tokens:
        return float(pred_tokens == gold_tokens)
    common = Counter(pred_tokens) & Counter(gold_tokens)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def token_f1(pred: str, golds: Iterable[str]) -> float:
    toks = normalize(pred).split()
    return max((_f1(toks, normalize(g).split()) for g in golds), default=0.0)


def yes_no(text: str) -> str | None:
    words = normalize(text).split()
    if not words:
        return None
    if words[0] in ("yes", "true"):
        return "yes"
    if words[0] in ("no", "false"):
        return "no"
    return None


def fever_label(text: str) -> str:
    return " ".join(text.upper().replace("_", " ").split()).strip(".")


def parse_number(text: str) -> float | None:
    found = _NUMBER.findall(text.replace("$", ""))
    if not found:
        return None
    try:
        return float(found[-1].replace(",", ""))
    except ValueError:
        return None


def accuracy(pred: str, golds: Iterable[str], kind: str) -> float:
    golds = list(golds)
    if kind == "yesno":
        p = yes_no(pred)
        return float(p is not None and any(p == yes_no(g) for g in golds))
    if kind == "fever":
        return float(any(fever_label(pred) == fever_label(g) for g in golds))
    if kind == "choice":
        p = pred.strip().strip("()").strip().upper()
        return float(any(p == g.strip().strip("()").upper() for g in golds))
    if kind == "numeric":
        p = parse_number(pred)
        targets = [parse_number(g) for g in golds]
        return float(p is not None and any(t is not None and math.isclose(p, t, abs_tol=1e-6) for t in targets))
    return exact_match(pred, golds)


def metric_names(kind: str) -> tuple[str, ...]:
    return ("em", "f1") if kind == "open" else ("acc",)


def score_answer(pred: str | None, golds: Iterable[str], kind: str) -> dict[str, float]:
    """Metrics of one extracted answer; a missing answer scores zero."""
    if pred is None:
        return {m: 0.0 for m in metric_names(kind)}
    golds = list(golds)
    if kind == "open":
        return {"em": exact_match(pred, golds), "f1": token_f1(pred, golds)}
    return {"acc": accuracy(pred, golds, kind)}
