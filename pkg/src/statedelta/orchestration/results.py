from __future__ import annotations

from dataclasses import dataclass, field

from statedelta.codecs.wire import overhead_report
from statedelta.orchestration.agent import Response

SETTINGS = ("ia", "debate", "workflow", "ia_single", "debate_single", "workflow_single")


@dataclass
class Turn:
    agent_id: str
    round: int  # 1-based round (step for workflows)
    response: Response
    action: str | None = None
    observation: str | None = None

    @property
    def message(self):
        return self.response.message

    @property
    def text(self) -> str:
        return self.response.message.text

    def applied_spans(self) -> list[tuple[str, str, int, int]]:
        """(message id, sender, start, end) for every span augmented in this turn."""
        prompt = self.response.prompt
        out = []
        for plan in self.response.plans:
            mid = next(m for m, sp in prompt.spans.items() if sp == plan.span)
            out.append((mid, prompt.messages[mid].sender, *plan.span))
        for mid in self.response.embedded:
            out.append((mid, prompt.messages[mid].sender, *prompt.spans[mid]))
        return sorted(out, key=lambda t: t[2])

    def latent_bytes(self) -> int:
        if self.message.payload is None:
            return 0
        return overhead_report(self.message)["latent_bytes"]

    def to_record(self) -> dict:
        rec = {
            "agent": self.agent_id,
            "round": self.round,
            "msg_id": self.message.msg_id,
            "tokens": list(self.message.tokens),
            "text": self.text,
            "finish": self.response.record.finish_reason,
            "applied": [list(a) for a in self.applied_spans()],
            "token_bytes": 4 * len(self.message.tokens),
            "latent_bytes": self.latent_bytes(),
        }
        if self.action is not None:
            rec["action"] = self.action
            rec["observation"] = self.observation
        return rec


@dataclass
class TaskResult:
    question_id: str
    setting: str
    method: str
    rounds: list[list[Turn]] = field(default_factory=list)
    termination: str = ""
    answer: str | None = None  # workflow Finish argument

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}")

    @property
    def turns(self) -> list[Turn]:
        return [t for r in self.rounds for t in r]

    @property
    def final_round(self) -> list[Turn]:
        return self.rounds[-1] if self.rounds else []

    def texts_by_round(self) -> list[list[str]]:
        return [[t.text for t in r] for r in self.rounds]

    def overhead(self) -> dict:
        tb = sum(4 * len(t.message.tokens) for t in self.turns)
        lb = sum(t.latent_bytes() for t in self.turns)
        return {"token_bytes": tb, "latent_bytes": lb}

    def to_record(self) -> dict:
        return {
            "question_id": self.question_id,
            "setting": self.setting,
            "method": self.method,
            "termination": self.termination,
            "answer": self.answer,
            "rounds": [[t.to_record() for t in r] for r in self.rounds],
        }
