import random

import numpy as np
import pytest

from statedelta.codecs import Message, decode_sde, scale_payload
from statedelta.model import DecodeSettings
from statedelta.orchestration import (
    Agent,
    AgentError,
    AgentProfile,
    PromptError,
    PromptSegment,
    ProtocolConfig,
    agent_respond,
    assemble_prompt,
    ia_shards,
    run_debate,
    run_ia,
    run_single,
    run_workflow,
    turn,
)
from statedelta.orchestration.protocols import _agent

GREEDY = DecodeSettings(max_new_tokens=6)


def cfg(method="nl", **kw):
    kw.setdefault("settings", GREEDY)
    layers = kw.pop("layers", (1, 2) if method in ("sde", "raw") else ())
    return ProtocolConfig(method=method, layers=layers, **kw)


def _msg(world, sender, text, mid):
    return Message(sender, world.tokenizer.tokenize(text), text, msg_id=mid)


# prompt assembly


def test_spans_land_on_message_tokens(world):
    tok = world.tokenizer
    m1, m2 = _msg(world, "A", " the river", "x1"), _msg(world, "B", "Kesmor town", "x2")
    segs = [PromptSegment.text("Peers said:"), PromptSegment.message(m1), PromptSegment.text("\nand"), PromptSegment.message(m2)]
    p = assemble_prompt(segs, tok, offset=10)
    assert p.span_tokens("x1") == m1.tokens and p.span_tokens("x2") == m2.tokens
    head = len(tok.tokenize("Peers said:"))
    assert p.spans["x1"] == (10 + head, 10 + head + len(m1.tokens))
    assert p.end == 10 + len(p.ids)


def test_span_audit_random_layouts(world):
    tok = world.tokenizer
    rng = random.Random(11)
    words = [d.title for d in world.corpus[:50]] + ["\n", " ", "?", "Answer:"]
    for case in range(100):
        segs, expect, msgs = [], [], {}
        for j in range(rng.randint(1, 8)):
            text = " ".join(rng.choice(words) for _ in range(rng.randint(1, 4)))
            if rng.random() < 0.4:
                m = _msg(world, rng.choice("AB"), text, f"c{case}-{j}")
                msgs[m.msg_id] = m
                segs.append(PromptSegment.message(m))
                expect += list(m.tokens)
            else:
                segs.append(PromptSegment.text(text))
                expect += tok.tokenize(text)
        off = rng.randint(0, 50)
        p = assemble_prompt(segs, tok, offset=off)
        assert list(p.ids) == expect
        for mid, m in msgs.items():
            s, e = p.spans[mid]
            assert e - s == len(m.tokens) and p.ids[s - off : e - off] == m.tokens


def test_prompt_errors(world):
    tok = world.tokenizer
    m = _msg(world, "A", "hi", "dup")
    with pytest.raises(PromptError, match="placed twice"):
        assemble_prompt([PromptSegment.message(m), PromptSegment.message(m)], tok)
    with pytest.raises(PromptError, match="unresolved message"):
        assemble_prompt([PromptSegment.message("nope")], tok)
    with pytest.raises(PromptError, match="unresolved template slot"):
        assemble_prompt([PromptSegment.slot("question")], tok)
    with pytest.raises(PromptError, match="overflow"):
        assemble_prompt([PromptSegment.text("a b c d e f")], tok, offset=8, max_seq=10)
    with pytest.raises(PromptError, match="not open"):
        assemble_prompt([PromptSegment("turn_close", "user")], tok)
    with pytest.raises(PromptError, match="still open"):
        assemble_prompt([PromptSegment("turn_open", "user"), PromptSegment("turn_open", "assistant")], tok)


def test_slot_and_reference_resolution(world):
    tok = world.tokenizer
    m = _msg(world, "A", "Dalreth", "ref")
    p = assemble_prompt([PromptSegment.slot("q"), PromptSegment.message("ref")], tok, messages={"ref": m}, slots={"q": "Where?"})
    assert p.span_tokens("ref") == m.tokens
    p = assemble_prompt(turn("user", [PromptSegment.text("hi")]), tok)
    assert [t[0] for t in p.turns] == ["user"]


# agents


def _peer(world, method, mid="peer"):
    """A real message produced by agent B on a tiny prompt."""
    b = Agent(AgentProfile("B", method, (1,) if method in ("sde", "raw") else (), GREEDY, cipher_temperature=0.5 if method == "cipher" else None), world.handle)
    p = assemble_prompt([PromptSegment.text("Kesmor is a town in")], world.tokenizer)
    return agent_respond(b, p, msg_id=mid).message


def test_nl_agent_sends_no_payload_and_applies_nothing(world):
    a = Agent(AgentProfile("A", "nl"), world.handle)
    peer = _peer(world, "sde")
    p = assemble_prompt([PromptSegment.text("Peer:"), PromptSegment.message(peer)], world.tokenizer)
    r = agent_respond(a, p)
    assert r.message.payload is None and r.plans == [] and r.embedded == []


def test_agent_rejects_wrong_payload_and_offset(world):
    a = Agent(AgentProfile("A", "sde", (1,), GREEDY), world.handle)
    nl_peer = _peer(world, "nl", "nlpeer")
    p = assemble_prompt([PromptSegment.message(nl_peer)], world.tokenizer)
    with pytest.raises(AgentError, match="span/payload mismatch"):
        agent_respond(a, p)
    p = assemble_prompt([PromptSegment.text("x")], world.tokenizer, offset=3)
    with pytest.raises(AgentError, match="offset"):
        agent_respond(Agent(AgentProfile("A", "nl"), world.handle), p)
    with pytest.raises(AgentError):
        AgentProfile("A", "sde")
    with pytest.raises(AgentError):
        AgentProfile("A", "telepathy")


def test_own_messages_are_not_augmented(world):
    a = Agent(AgentProfile("B", "sde", (1,), GREEDY), world.handle)
    own = _peer(world, "sde", "own")
    p = assemble_prompt([PromptSegment.message(own)], world.tokenizer)
    assert agent_respond(a, p).plans == []


def test_outgoing_payload_telescopes(world):
    a = Agent(AgentProfile("A", "sde", (0, 3), DecodeSettings(max_new_tokens=10)), world.handle)
    r = agent_respond(a, assemble_prompt([PromptSegment.text("Who created the Salt Ledger?")], world.tokenizer))
    for layer, traj in r.record.trajectories.items():
        rebuilt = decode_sde(traj[0], r.message.payload.layers[layer])
        rel = np.abs(rebuilt - traj).max() / np.abs(traj).max()
        assert rel <= 1e-5
        assert r.message.payload.layers[layer].deltas.shape == (len(r.message.tokens), world.handle.config.d_model)


# information asymmetry


@pytest.fixture(scope="module")
def ia_question(world):
    q = world.question("open")
    return q, ia_shards(world.index, q)


def test_ia_shards_are_disjoint_halves(world, ia_question):
    _, (a, b) = ia_question
    assert len(a) == 3 and len(b) == 3 and not {d.id for d in a} & {d.id for d in b}


def test_ia_runs_five_rounds_without_answer(world, ia_question):
    q, (a, b) = ia_question
    res = run_ia(world.handle, q, a, b, cfg("sde"))
    assert len(res.rounds) == 5 and res.termination == "no formatted answer"
    assert [t.message.msg_id for t in res.rounds[1]] == ["A/r2", "B/r2"]


def test_ia_stops_after_boxed_round(world, ia_question):
    q, (a, b) = ia_question
    res = run_ia(world.handle, q, a, b, cfg("nl", settings=DecodeSettings(max_new_tokens=40), scripts={"A": [" \\boxed{Dalreth}"]}))
    assert len(res.rounds) == 1 and res.termination == "boxed"
    assert "\\boxed{Dalreth}" in res.rounds[0][0].text


def test_ia_round_two_spans_are_the_peer_messages(world, ia_question):
    q, (a, b) = ia_question
    res = run_ia(world.handle, q, a, b, cfg("sde", rounds=2))
    r1 = {t.agent_id: t.message for t in res.rounds[0]}
    for t in res.rounds[1]:
        (mid, sender, s, e), = t.applied_spans()
        peer = r1[sender]
        assert sender != t.agent_id and mid == peer.msg_id
        assert t.response.prompt.span_tokens(mid) == peer.tokens
        assert e - s == len(peer.tokens)
    assert res.rounds[0][0].applied_spans() == []


def test_zero_deltas_match_nl(world, ia_question):
    q, (a, b) = ia_question
    nl = run_ia(world.handle, q, a, b, cfg("nl", rounds=3))
    zero = run_ia(world.handle, q, a, b, cfg("sde", rounds=3, payload_transform=lambda m: scale_payload(m, 0.0)))
    assert [[t.message.tokens for t in r] for r in nl.rounds] == [[t.message.tokens for t in r] for r in zero.rounds]
    assert any(t.applied_spans() for t in zero.turns)


# debate


def test_debate_two_by_three(world):
    res = run_debate(world.handle, world.question("numeric"), cfg("sde"))
    assert len(res.turns) == 6 and len(res.rounds) == 3 and res.termination == "rounds"


def test_debate_peers_exclude_self(world):
    res = run_debate(world.handle, world.question("choice"), cfg("sde", n_agents=5, rounds=2, settings=DecodeSettings(max_new_tokens=3)))
    for t in res.rounds[1]:
        applied = t.applied_spans()
        assert len(applied) == 4
        assert t.agent_id not in {s for _, s, _, _ in applied}
    with pytest.raises(ValueError):
        run_debate(world.handle, world.question("choice"), cfg("nl", n_agents=1))


def test_cipher_schedule_and_embedding(world):
    c = cfg("cipher", n_agents=3, default_temperature=0.9)
    temps = [_agent(world.handle, c, f"agent{i + 1}", i, 3).profile.cipher_temperature for i in range(3)]
    assert temps == pytest.approx([0.3, 0.6, 0.9])
    res = run_debate(world.handle, world.question("numeric"), cfg("cipher", rounds=2, settings=DecodeSettings(max_new_tokens=3)))
    assert all(t.message.method == "cipher" for t in res.turns)
    assert all(len(t.response.embedded) == 1 for t in res.rounds[1])


# workflow


def test_workflow_caps_at_seven_without_finish(world):
    res = run_workflow(world.handle, world.question("open"), world.env, cfg("nl", settings=DecodeSettings(max_new_tokens=4)))
    assert len(res.rounds) == 7 and res.termination == "no finish" and res.answer is None


def test_workflow_finish_on_third_step(world):
    q = world.question("open")
    scripts = {
        "agent1": [" I should search.\nAction 1: Search[Kesmor]"],
        "agent2": [" Look closer.\nAction 2: Lookup[river]"],
        "agent3": [f" Done.\nAction 3: Finish[{q.answers[0]}]"],
    }
    res = run_workflow(world.handle, q, world.env, cfg("sde", settings=DecodeSettings(max_new_tokens=40), scripts=scripts))
    assert len(res.rounds) == 3 and res.termination == "finish" and res.answer == q.answers[0]
    third = res.rounds[2][0]
    shown = world.tokenizer.detokenize(third.response.prompt.ids)
    for k, t in enumerate(res.turns[:2], start=1):
        assert f"Thought {k}:{t.text}\nObservation {k}: {t.observation}\n" in shown
    # agent3 receives deltas from both earlier agents
    assert [s for _, s, _, _ in third.applied_spans()] == ["agent1", "agent2"]


# single-agent baselines


def test_single_baselines(world, ia_question):
    q, shards = ia_question
    ia = run_single(world.handle, "ia", q, cfg("nl"), shards)
    assert ia.setting == "ia_single" and [t.agent_id for t in ia.turns] == ["A", "B"]
    fever = run_single(world.handle, "workflow", world.question("fever"), cfg("nl"))
    shown = world.tokenizer.detokenize(fever.turns[0].response.prompt.ids)
    assert '"NOT ENOUGH INFO", "SUPPORTS", "REFUTES"' in shown
    deb = run_single(world.handle, "debate", world.question("choice"), cfg("nl"))
    assert deb.setting == "debate_single" and len(deb.turns) == 1
    with pytest.raises(ValueError):
        run_single(world.handle, "ia", q, cfg("nl"))
