"""Per-question scoring and run aggregation for each setting.

    ia              mean over final-round answers that carry \\boxed{}; none -> 0
    debate          mean over every agent's final-round answer, missing -> 0
    workflow        the Finish argument; no Finish -> 0
    ia_single       one score per agent; aggregate reports the agent with
                    the higher total
    *_single        the single response
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from statedelta.environment.datasets import QuestionRecord
from statedelta.evalkit.answers import extract_answer
from statedelta.evalkit.metrics import metric_names, score_answer

SETTINGS = ("ia", "debate", "workflow", "ia_single", "debate_single", "workflow_single")


class AggregationError(ValueError):
    pass


def answer_format(setting: str, question: QuestionRecord) -> str:
    if setting == "workflow":
        return "finish"
    if setting in ("debate", "debate_single") and question.is_choice:
        return "choice"
    return "boxed"


@dataclass(frozen=True)
class QuestionScore:
    question_id: str
    setting: str
    kind: str
    extracted: tuple[str | None, ...]
    per_response: tuple[dict, ...]
    metrics: dict

    @property
    def primary(self) -> str:
        return metric_names(self.kind)[0]

    @property
    def score(self) -> float:
        return self.metrics[self.primary]

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "setting": self.setting,
            "kind": self.kind,
            "extracted": list(self.extracted),
            "per_response": list(self.per_response),
            "metrics": self.metrics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuestionScore":
        return cls(d["question_id"], d["setting"], d["kind"], tuple(d["extracted"]), tuple(d["per_response"]), d["metrics"])


def _mean(rows: Sequence[dict], names: Sequence[str]) -> dict:
    if not rows:
        return {m: 0.0 for m in names}
    return {m: sum(r[m] for r in rows) / len(rows) for m in names}


def score_question(responses: Sequence[str], question: QuestionRecord, setting: str, answer: str | None = None) -> QuestionScore:
    """Score the final-round ``responses`` (workflow: pass the Finish ``answer``)."""
    if setting not in SETTINGS:
        raise ValueError(f"unknown setting {setting!r}")
    names = metric_names(question.kind)
    if setting == "workflow":
        extracted = (answer,)
        per = (score_answer(answer, question.answers, question.kind),)
        return QuestionScore(question.id, setting, question.kind, extracted, per, dict(per[0]))
    fmt = answer_format(setting, question)
    found = [extract_answer(r, fmt) for r in responses]
    extracted = tuple(None if a is None else a.raw for a in found)
    per = tuple(score_answer(a, question.answers, question.kind) for a in extracted)
    if setting == "ia":
        # unformatted responses are left out of the average
        formatted = [p for p, a in zip(per, extracted) if a is not None]
        metrics = _mean(formatted, names)
    else:
        metrics = _mean(per, names)
    return QuestionScore(question.id, setting, question.kind, extracted, per, metrics)


def _run_summary(scores: Sequence[QuestionScore]) -> dict:
    names = sorted({m for s in scores for m in s.metrics})
    out = {"n": len(scores), "score": sum(s.score for s in scores) / len(scores) if scores else 0.0}
    for m in names:
        vals = [s.metrics[m] for s in scores if m in s.metrics]
        out[m] = sum(vals) / len(vals)
    if scores and all(s.setting == "ia_single" for s in scores):
        out.update(_best_agent(scores))
    return out


def _best_agent(scores: Sequence[QuestionScore]) -> dict:
    n_agents = min(len(s.per_response) for s in scores)
    best = None
    for a in range(n_agents):
        rows = [s.per_response[a] for s in scores]
        names = sorted({m for r in rows for m in r})
        summary = {m: sum(r[m] for r in rows if m in r) / sum(1 for r in rows if m in r) for m in names}
        summary["score"] = sum(r[s.primary] for r, s in zip(rows, scores)) / len(scores)
        summary["agent"] = a
        if best is None or summary["score"] > best["score"]:
            best = summary
    return best


def aggregate(runs: Sequence[Sequence[QuestionScore]]) -> dict:
    """Mean per metric within each run, then the mean over runs."""
    if not runs:
        raise AggregationError("no runs to aggregate")
    ids = sorted(s.question_id for s in runs[0])
    for r in runs[1:]:
        if sorted(s.question_id for s in r) != ids:
            raise AggregationError("runs cover different question sets")
    per_run = [_run_summary(r) for r in runs]
    keys = [k for k in per_run[0] if k not in ("n", "agent")]
    summary = {k: sum(p[k] for p in per_run) / len(per_run) for k in keys}
    summary["n"] = len(ids)
    summary["runs"] = len(runs)
    return {"summary": summary, "per_run": per_run}
