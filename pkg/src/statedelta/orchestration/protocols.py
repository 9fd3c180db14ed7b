"""Protocol drivers: information-asymmetry discussion, debate, sequential
workflow and the single-agent baselines.

All agents of a run share one model handle. IA and debate agents keep one
session for the whole run, so their own earlier outputs stay in the cache and
are never re-encoded. Workflow steps are taken by fresh agents, each of which
prefills the full history; every earlier agent's message in that history is
augmented per the method.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Mapping, Sequence

from statedelta.codecs.message import Message
from statedelta.environment.bm25 import RetrievalIndex, retrieve, shard_docs
from statedelta.environment.corpus import Document
from statedelta.environment.datasets import QuestionRecord
from statedelta.environment.workflow_env import ToolEnvironment, WorkflowAction, parse_action, _ACTION
from statedelta.model.config import DecodeSettings
from statedelta.model.engine import ModelHandle
from statedelta.orchestration.agent import Agent, AgentProfile, agent_respond, share_handle
from statedelta.orchestration.prompt import (
    PromptSegment,
    assemble_prompt,
    join_segments,
    segments_from_template,
    turn,
)
from statedelta.orchestration.results import TaskResult, Turn
from statedelta.orchestration.templates import Template, TurnSyntax, load_template
from statedelta.seeds import derive_seed

_BOXED = re.compile(r"\\boxed\{[^{}]*\}")

DEFAULT_ROUNDS = {"ia": 5, "debate": 3, "workflow": 7}


def has_boxed(text: str) -> bool:
    return _BOXED.search(text) is not None


def has_action(text: str) -> bool:
    return _ACTION.search(text) is not None or "\nObservation" in text


@dataclass(frozen=True)
class ProtocolConfig:
    """Knobs shared by every driver.

    ``rounds`` is the IA round cap, the debate round count or the workflow
    step cap; ``None`` picks the task default (5 / 3 / 7).
    """

    method: str = "nl"
    layers: tuple[int, ...] = ()
    settings: DecodeSettings = DecodeSettings()
    n_agents: int = 2
    rounds: int | None = None
    seed: int = 0
    default_temperature: float = 0.7  # CIPHER schedule base
    syntax: TurnSyntax = TurnSyntax()
    template_dir: str | None = None
    scripts: Mapping[str, Sequence[str]] = field(default_factory=dict)
    payload_transform: Callable[[Message], Message] | None = None

    def rounds_for(self, task: str) -> int:
        n = DEFAULT_ROUNDS[task] if self.rounds is None else self.rounds
        if n < 1:
            raise ValueError("rounds must be >= 1")
        return n


def _template(cfg: ProtocolConfig, name: str) -> Template:
    return _load(name, cfg.template_dir)


@lru_cache(maxsize=128)
def _load(name: str, directory: str | None) -> Template:
    return load_template(name, directory)


def _agent(handle: ModelHandle, cfg: ProtocolConfig, agent_id: str, index: int, n: int, documents=()) -> Agent:
    method = "nl" if cfg.method == "single" else cfg.method
    cipher_t = None
    if method == "cipher":
        # agent i of n decodes at (i / n) of the default temperature
        cipher_t = (index + 1) / n * cfg.default_temperature
    script = cfg.scripts.get(agent_id)
    prof = AgentProfile(
        agent_id,
        method,
        tuple(cfg.layers) if method in ("sde", "raw") else (),
        cfg.settings,
        tuple(documents),
        cipher_t,
        tuple(script) if script is not None else None,
    )
    return Agent(prof, handle)


def _respond(agent: Agent, segments, cfg: ProtocolConfig, msg_id: str, stop, seed: int):
    handle = agent.handle
    prompt = assemble_prompt(
        segments,
        handle.tokenizer,
        offset=agent.session.length,
        max_seq=handle.config.max_seq,
        syntax=cfg.syntax,
    )
    return agent_respond(agent, prompt, msg_id=msg_id, stop=stop, seed=seed, payload_transform=cfg.payload_transform)


def _close_assistant(cfg: ProtocolConfig) -> PromptSegment:
    return PromptSegment.text(cfg.syntax.closing("assistant"))


def _open_assistant() -> PromptSegment:
    return PromptSegment("turn_open", "assistant")


def render_documents(cfg: ProtocolConfig, docs: Sequence[Document]) -> str:
    tpl = _template(cfg, "ia_document")
    return "\n\n".join(tpl.fill(k=str(i + 1), passage=d.text.replace("\n", " ")) for i, d in enumerate(docs))


def ia_shards(index: RetrievalIndex, question: QuestionRecord, k: int = 6) -> tuple[list[Document], list[Document]]:
    ranked = [d for d, _ in retrieve(index, question.question, k)]
    return shard_docs(ranked)


# information asymmetry


def run_ia(
    handle: ModelHandle,
    question: QuestionRecord,
    shard_a: Sequence[Document],
    shard_b: Sequence[Document],
    cfg: ProtocolConfig,
    agents: Sequence[Agent] | None = None,
) -> TaskResult:
    """Two agents with private shards discuss until one boxes an answer."""
    max_rounds = cfg.rounds_for("ia")
    if agents is None:
        agents = [
            _agent(handle, cfg, "A", 0, 2, shard_a),
            _agent(handle, cfg, "B", 1, 2, shard_b),
        ]
    if len(agents) != 2:
        raise ValueError("the IA task runs exactly two agents")
    share_handle(agents)
    system, first, follow, peer = (
        _template(cfg, n) for n in ("ia_system", "ia_first_user", "ia_followup_user", "ia_peer")
    )
    result = TaskResult(question.id, "ia", cfg.method)
    prev: list[Message] = []
    for r in range(1, max_rounds + 1):
        turns = []
        for i, agent in enumerate(agents):
            if r == 1:
                docs = render_documents(cfg, agent.profile.documents)
                segs = turn("system", segments_from_template(system, documents=docs))
                segs += turn("user", segments_from_template(first, question=question.question))
            else:
                peers = [segments_from_template(peer, response=m) for m in prev if m.sender != agent.agent_id]
                body = segments_from_template(
                    follow, peer_responses=join_segments(peers, "\n\n"), question=question.question
                )
                segs = [_close_assistant(cfg), *turn("user", body)]
            segs.append(_open_assistant())
            seed = derive_seed(cfg.seed, question.id, agent.agent_id, r)
            resp = _respond(agent, segs, cfg, f"{agent.agent_id}/r{r}", has_boxed, seed)
            turns.append(Turn(agent.agent_id, r, resp))
        result.rounds.append(turns)
        prev = [t.message for t in turns]
        if any(has_boxed(t.text) for t in turns):
            result.termination = "boxed"
            break
    else:
        result.termination = "no formatted answer"
    return result


# debate


def _debate_templates(cfg: ProtocolConfig, question: QuestionRecord) -> tuple[Template, Template, Template]:
    stem = "debate_mmlu" if question.is_choice else "debate_gsm8k"
    return tuple(_template(cfg, f"{stem}_{part}") for part in ("first", "followup", "single"))


def run_debate(handle: ModelHandle, question: QuestionRecord, cfg: ProtocolConfig) -> TaskResult:
    """``n_agents`` agents answer, then revise after seeing every peer's previous answer."""
    if cfg.n_agents < 2:
        raise ValueError("a debate needs at least two agents")
    n_rounds = cfg.rounds_for("debate")
    agents = [_agent(handle, cfg, f"agent{i + 1}", i, cfg.n_agents) for i in range(cfg.n_agents)]
    first, follow, _ = _debate_templates(cfg, question)
    peer = _template(cfg, "debate_peer")
    stop = None if question.is_choice else has_boxed
    result = TaskResult(question.id, "debate", cfg.method)
    prev: list[Message] = []
    for r in range(1, n_rounds + 1):
        turns = []
        for agent in agents:
            if r == 1:
                segs = turn("user", segments_from_template(first, question=question.question))
            else:
                peers = [segments_from_template(peer, response=m) for m in prev if m.sender != agent.agent_id]
                body = segments_from_template(
                    follow, peer_responses=join_segments(peers, "\n\n"), question=question.question
                )
                segs = [_close_assistant(cfg), *turn("user", body)]
            segs.append(_open_assistant())
            seed = derive_seed(cfg.seed, question.id, agent.agent_id, r)
            resp = _respond(agent, segs, cfg, f"{agent.agent_id}/r{r}", stop, seed)
            turns.append(Turn(agent.agent_id, r, resp))
        result.rounds.append(turns)
        prev = [t.message for t in turns]
    result.termination = "rounds"
    return result


# workflow


def _workflow_templates(cfg: ProtocolConfig, question: QuestionRecord) -> tuple[str, Template]:
    kind = "fever" if question.kind == "fever" else "qa"
    return _template(cfg, f"workflow_{kind}_instructions").text, _template(cfg, f"workflow_{kind}_user")


def run_workflow(handle: ModelHandle, question: QuestionRecord, env: ToolEnvironment, cfg: ProtocolConfig) -> TaskResult:
    """Up to ``rounds`` agents act in turn on a shared Search/Lookup/Finish environment."""
    max_steps = cfg.rounds_for("workflow")
    instructions, user = _workflow_templates(cfg, question)
    state = env.reset()
    result = TaskResult(question.id, "workflow", cfg.method)
    history: list[PromptSegment] = []
    for k in range(1, max_steps + 1):
        agent = _agent(handle, cfg, f"agent{k}", k - 1, max_steps)
        body = segments_from_template(user, instructions=instructions, question=question.question, history=history)
        segs = turn("user", body) + [_open_assistant(), PromptSegment.text(f"Thought {k}:")]
        seed = derive_seed(cfg.seed, question.id, agent.agent_id, k)
        resp = _respond(agent, segs, cfg, f"{agent.agent_id}/s{k}", has_action, seed)
        action = parse_action(resp.message.text)
        state, obs = env.step(state, action)
        shown = action.render() if isinstance(action, WorkflowAction) else None
        result.rounds.append([Turn(agent.agent_id, k, resp, shown, obs)])
        history += [
            PromptSegment.text(f"Thought {k}:"),
            PromptSegment.message(resp.message),
            PromptSegment.text(f"\nObservation {k}: {obs}\n"),
        ]
        if state.finished:
            result.termination = "finish"
            result.answer = state.answer
            break
    else:
        result.termination = "no finish"
    return result


# single-agent baselines


def run_single(
    handle: ModelHandle,
    setting: str,
    question: QuestionRecord,
    cfg: ProtocolConfig,
    shards: tuple[Sequence[Document], Sequence[Document]] | None = None,
) -> TaskResult:
    """One direct generation per agent; the IA baseline runs once per shard."""
    cfg = replace(cfg, method="single")
    if setting == "ia":
        if shards is None:
            raise ValueError("the IA baseline needs both document shards")
        tpl = _template(cfg, "ia_single_user")
        result = TaskResult(question.id, "ia_single", "single")
        turns = []
        for i, (aid, docs) in enumerate(zip("AB", shards)):
            agent = _agent(handle, cfg, aid, i, 2, docs)
            body = segments_from_template(tpl, documents=render_documents(cfg, docs), question=question.question)
            segs = turn("user", body) + [_open_assistant()]
            seed = derive_seed(cfg.seed, question.id, aid, 1)
            turns.append(Turn(aid, 1, _respond(agent, segs, cfg, f"{aid}/r1", has_boxed, seed)))
        result.rounds.append(turns)
        result.termination = "single"
        return result
    if setting == "debate":
        tpl = _debate_templates(cfg, question)[2]
        stop = None if question.is_choice else has_boxed
        name = "debate_single"
    elif setting == "workflow":
        tpl = _template(cfg, "workflow_single_fever" if question.kind == "fever" else "workflow_single_qa")
        stop = has_boxed
        name = "workflow_single"
    else:
        raise ValueError(f"no single-agent baseline for {setting!r}")
    agent = _agent(handle, cfg, "agent1", 0, 1)
    segs = turn("user", segments_from_template(tpl, question=question.question)) + [_open_assistant()]
    seed = derive_seed(cfg.seed, question.id, "agent1", 1)
    result = TaskResult(question.id, name, "single")
    result.rounds.append([Turn("agent1", 1, _respond(agent, segs, cfg, "agent1/r1", stop, seed))])
    result.termination = "single"
    return result
