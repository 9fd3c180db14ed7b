"""Search / Lookup / Finish tool environment for the sequential workflow."""
from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Sequence

from statedelta.environment.bm25 import RetrievalIndex, build_index, retrieve
from statedelta.environment.corpus import Document

VERBS = ("Search", "Lookup", "Finish")

_ACTION = re.compile(r"Action\s*(\d+)?\s*:\s*([A-Za-z]+)\[([^\[\]\n]*)\]")
_LOOSE = re.compile(r"Action\s*\d*\s*:")


@dataclass(frozen=True)
class WorkflowAction:
    verb: str
    argument: str
    step: int | None = None

    def __post_init__(self):
        if self.verb not in VERBS:
            raise ValueError(f"unknown verb {self.verb!r}")
        if not self.argument.strip():
            raise ValueError("empty action argument")

    def render(self) -> str:
        return f"{self.verb}[{self.argument}]"


@dataclass(frozen=True)
class ParseFailure:
    reason: str

    def __bool__(self):
        return False


def parse_action(text: str) -> WorkflowAction | ParseFailure:
    """Last well-formed ``Action k: Verb[arg]`` in ``text``."""
    if not isinstance(text, str):
        return ParseFailure("not text")
    matches = list(_ACTION.finditer(text))
    if not matches:
        if _LOOSE.search(text):
            return ParseFailure("malformed action")
        return ParseFailure("no action found")
    m = matches[-1]
    step, verb, arg = m.group(1), m.group(2), m.group(3).strip()
    if verb not in VERBS:
        return ParseFailure(f"unknown action {verb!r}")
    if not arg:
        return ParseFailure("empty argument")
    return WorkflowAction(verb, arg, int(step) if step else None)


@dataclass(frozen=True)
class EnvState:
    passage: str | None = None  # doc id of the current passage
    lookup_keyword: str | None = None
    lookup_results: tuple[str, ...] = ()
    lookup_cursor: int = 0
    finished: bool = False
    answer: str | None = None


def _norm_title(s: str) -> str:
    return " ".join(s.strip().strip("\"'").split()).casefold()


class ToolEnvironment:
    """Read-only corpus view plus the transition function."""

    def __init__(self, corpus: Sequence[Document], index: RetrievalIndex | None = None, n_similar: int = 5):
        self.corpus = tuple(corpus)
        self.index = index or build_index(self.corpus)
        self.n_similar = n_similar
        self._by_title: dict[str, Document] = {}
        for doc in self.corpus:
            self._by_title.setdefault(_norm_title(doc.title), doc)
        self._by_id = {doc.id: doc for doc in self.corpus}

    def reset(self) -> EnvState:
        return EnvState()

    def step(self, state: EnvState, action: WorkflowAction | ParseFailure) -> tuple[EnvState, str]:
        if isinstance(action, ParseFailure):
            return state, f"Invalid action: {action.reason}."
        if state.finished:
            return state, "Episode already finished."
        if action.verb == "Search":
            return self._search(state, action.argument)
        if action.verb == "Lookup":
            return self._lookup(state, action.argument)
        return replace(state, finished=True, answer=action.argument), "Episode finished."

    def _search(self, state: EnvState, entity: str) -> tuple[EnvState, str]:
        doc = self._by_title.get(_norm_title(entity))
        if doc is not None:
            new = EnvState(passage=doc.id)
            return new, doc.first_paragraph
        similar = [d.title for d, _ in retrieve(self.index, entity, self.n_similar)] if entity.strip() else []
        return state, f"Could not find [{entity}]. Similar: {similar!r}."

    def _lookup(self, state: EnvState, keyword: str) -> tuple[EnvState, str]:
        if state.passage is None:
            return state, "No current passage. Use Search first."
        if keyword != state.lookup_keyword:
            doc = self._by_id[state.passage]
            kw = keyword.lower()
            hits = tuple(s for s in doc.sentences if kw in s.lower())
            state = replace(state, lookup_keyword=keyword, lookup_results=hits, lookup_cursor=0)
        if state.lookup_cursor >= len(state.lookup_results):
            return state, "No more results."
        i = state.lookup_cursor
        obs = f"(Result {i + 1} / {len(state.lookup_results)}) {state.lookup_results[i]}"
        return replace(state, lookup_cursor=i + 1), obs


def env_step(env: ToolEnvironment, state: EnvState, action) -> tuple[EnvState, str]:
    return env.step(state, action)
