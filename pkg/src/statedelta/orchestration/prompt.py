"""Prompt assembly with exact message-span bookkeeping.

Text segments are tokenized one at a time; message segments splice the
sender's token ids in verbatim. The resulting id sequence is therefore the
concatenation of the per-segment tokenizations, and a message occupies
exactly ``len(msg.tokens)`` positions starting where it was placed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from statedelta.codecs.message import CipherPayload, Message
from statedelta.model.tokenizer import Tokenizer
from statedelta.orchestration.templates import Template, TurnSyntax

KINDS = ("text", "message", "slot", "turn_open", "turn_close")


class PromptError(ValueError):
    pass


@dataclass(frozen=True)
class PromptSegment:
    kind: str
    content: object  # str for text/slot/turn kinds; Message or message id for "message"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PromptError(f"unknown segment kind {self.kind!r}")

    @classmethod
    def text(cls, s: str) -> "PromptSegment":
        return cls("text", s)

    @classmethod
    def message(cls, msg: Message | str) -> "PromptSegment":
        return cls("message", msg)

    @classmethod
    def slot(cls, name: str) -> "PromptSegment":
        return cls("slot", name)


@dataclass(frozen=True)
class AssembledPrompt:
    ids: tuple[int, ...]
    spans: Mapping[str, tuple[int, int]]  # msg id -> absolute [start, end)
    turns: tuple[tuple[str, int, int], ...]  # (role, start, end) absolute
    offset: int = 0
    messages: Mapping[str, Message] = field(default_factory=dict)

    def __len__(self):
        return len(self.ids)

    @property
    def end(self) -> int:
        return self.offset + len(self.ids)

    def span_tokens(self, msg_id: str) -> tuple[int, ...]:
        s, e = self.spans[msg_id]
        return self.ids[s - self.offset : e - self.offset]

    def inputs(self, embed_cipher: bool = False) -> list:
        """Model inputs; with ``embed_cipher`` CIPHER spans carry their vectors."""
        items: list = list(self.ids)
        if not embed_cipher:
            return items
        for mid, (s, e) in self.spans.items():
            p = self.messages[mid].payload
            if isinstance(p, CipherPayload):
                for i, row in enumerate(np.asarray(p.embeddings, dtype=np.float32)):
                    items[s - self.offset + i] = row
        return items


def segments_from_template(template: Template, **values) -> list[PromptSegment]:
    """Render a template; slot values may be text or lists of segments."""
    out: list[PromptSegment] = []
    for kind, v in template.split(values):
        if kind == "text":
            out.append(PromptSegment.text(v))
        elif isinstance(v, PromptSegment):
            out.append(v)
        elif isinstance(v, Message):
            out.append(PromptSegment.message(v))
        elif isinstance(v, (list, tuple)):
            out.extend(v)
        else:
            out.append(PromptSegment.text(str(v)))
    return out


def join_segments(parts: Sequence[Sequence[PromptSegment]], sep: str) -> list[PromptSegment]:
    out: list[PromptSegment] = []
    for i, p in enumerate(parts):
        if i:
            out.append(PromptSegment.text(sep))
        out.extend(p)
    return out


def assemble_prompt(
    segments: Iterable[PromptSegment],
    tokenizer: Tokenizer,
    offset: int = 0,
    max_seq: int | None = None,
    messages: Mapping[str, Message] | None = None,
    slots: Mapping[str, str] | None = None,
    syntax: TurnSyntax = TurnSyntax(),
) -> AssembledPrompt:
    known = dict(messages or {})
    ids: list[int] = []
    spans: dict[str, tuple[int, int]] = {}
    used: dict[str, Message] = {}
    turns: list[tuple[str, int, int]] = []
    open_turn: tuple[str, int] | None = None

    def text(s: str):
        ids.extend(tokenizer.tokenize(s))

    for seg in segments:
        if seg.kind == "text":
            text(seg.content)
        elif seg.kind == "slot":
            if slots is None or seg.content not in slots:
                raise PromptError(f"unresolved template slot {{{seg.content}}}")
            text(slots[seg.content])
        elif seg.kind == "message":
            msg = seg.content
            if isinstance(msg, str):
                if msg not in known:
                    raise PromptError(f"unresolved message reference {msg!r}")
                msg = known[msg]
            if msg.msg_id in spans:
                raise PromptError(f"message {msg.msg_id} placed twice")
            start = offset + len(ids)
            ids.extend(msg.tokens)
            spans[msg.msg_id] = (start, offset + len(ids))
            used[msg.msg_id] = msg
        elif seg.kind == "turn_open":
            if open_turn is not None:
                raise PromptError(f"turn {open_turn[0]!r} still open")
            text(syntax.opening(seg.content))
            open_turn = (seg.content, offset + len(ids))
        else:
            if open_turn is None or open_turn[0] != seg.content:
                raise PromptError(f"closing turn {seg.content!r} that is not open")
            turns.append((open_turn[0], open_turn[1], offset + len(ids)))
            open_turn = None
            text(syntax.closing(seg.content))
    if open_turn is not None:
        # generation continues inside this turn
        turns.append((open_turn[0], open_turn[1], offset + len(ids)))
    if max_seq is not None and offset + len(ids) > max_seq:
        raise PromptError(f"prompt overflow: {offset} + {len(ids)} > max_seq {max_seq}")
    return AssembledPrompt(tuple(ids), spans, tuple(turns), offset, used)


def turn(role: str, body: Sequence[PromptSegment], close: bool = True) -> list[PromptSegment]:
    out = [PromptSegment("turn_open", role), *body]
    if close:
        out.append(PromptSegment("turn_close", role))
    return out
