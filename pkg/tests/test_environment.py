import re
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from oracles import bm25_oracle

from statedelta.environment import (
    CorpusError,
    DatasetError,
    Document,
    EnvState,
    ParseFailure,
    QuestionRecord,
    ToolEnvironment,
    WorkflowAction,
    build_index,
    env_step,
    fixture_path,
    load_corpus,
    load_dataset,
    parse_action,
    retrieve,
    score_all,
    shard_docs,
    split_sentences,
    write_corpus,
    write_dataset,
)

THREE = [
    Document("d1", "Apple orchard", "Apples grow in the orchard. The orchard is old."),
    Document("d2", "Pear tree", "A pear tree stands near the apple orchard."),
    Document("d3", "River", "The river runs past the town and the mill."),
]


def test_bm25_matches_formula_three_docs():
    idx = build_index(THREE)
    for query in ["apple orchard", "the", "pear river mill", "orchard orchard", "nothing"]:
        got = score_all(idx, query)
        want = bm25_oracle(THREE, query)
        assert set(got) == set(want)
        for i, s in want.items():
            assert abs(got[i] - s) <= 1e-9


def test_bm25_matches_formula_on_fixture_corpus(world):
    docs = world.corpus[:40]
    idx = build_index(docs)
    for query in ["river town province", "The Salt Ledger novelist", "festival lantern"]:
        got = score_all(idx, query)
        for i, s in bm25_oracle(docs, query).items():
            assert abs(got[i] - s) <= 1e-9


def test_document_frequency_brute_force(world):
    idx = build_index(world.corpus)
    bodies = [set(re.findall(r"\w+", (d.title + " " + d.text).lower())) for d in world.corpus]
    counts = Counter(t for b in bodies for t in b)
    for term, df in counts.items():
        assert idx.df(term) == df
    assert idx.n_docs == len(world.corpus)


def test_one_doc_postings():
    idx = build_index([THREE[0]])
    assert all(list(p) == [0] for p in idx.postings.values())


def test_rebuild_identical():
    a, b = build_index(THREE), build_index(THREE)
    assert a.postings == b.postings and a.doc_lengths == b.doc_lengths and a.avg_length == b.avg_length


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        build_index([])


def test_retrieve_rules():
    idx = build_index(THREE)
    assert retrieve(idx, "mill")[0][0].id == "d3"
    assert retrieve(idx, "") == []
    assert retrieve(idx, "zzz") == []
    with pytest.raises(ValueError):
        retrieve(idx, "apple", k=0)
    scores = [s for _, s in retrieve(idx, "the apple")]
    assert scores == sorted(scores, reverse=True)


def test_retrieve_ties_broken_by_id():
    docs = [Document(f"d{i}", "t", "same words here") for i in (3, 1, 2)]
    got = [d.id for d, _ in retrieve(build_index(docs), "words")]
    assert got == ["d1", "d2", "d3"]


def test_shard_docs():
    ranked = [f"d{i}" for i in range(1, 7)]
    a, b = shard_docs(ranked)
    assert a == ["d1", "d3", "d5"] and b == ["d2", "d4", "d6"]
    assert shard_docs(["d1"]) == (["d1"], [])
    assert sorted(a + b) == sorted(ranked) and not set(a) & set(b)


@pytest.mark.parametrize(
    "text, verb, arg",
    [
        ("Action 5: Finish[1,800 to 7,000 ft]", "Finish", "1,800 to 7,000 ft"),
        ("Action 1: Search[High Plains]", "Search", "High Plains"),
        ("Thought: hmm\nAction 2: Lookup[eastern sector]", "Lookup", "eastern sector"),
        ("Action 1: Search[a]\nAction 2: Finish[b]", "Finish", "b"),
    ],
)
def test_parse_action(text, verb, arg):
    act = parse_action(text)
    assert isinstance(act, WorkflowAction)
    assert (act.verb, act.argument) == (verb, arg)


@pytest.mark.parametrize(
    "text, reason",
    [
        ("let me think...", "no action found"),
        ("Action 3: Search[unclosed", "malformed action"),
        ("Action 1: Jump[x]", "unknown action 'Jump'"),
        ("Action 1: Search[  ]", "empty argument"),
        (None, "not text"),
    ],
)
def test_parse_action_failures(text, reason):
    res = parse_action(text)
    assert isinstance(res, ParseFailure) and not res
    assert res.reason == reason


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=200))
def test_parse_action_total_on_bytes(raw):
    res = parse_action(raw.decode("utf-8", errors="replace"))
    assert isinstance(res, (WorkflowAction, ParseFailure))


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=120))
def test_parse_action_total_on_text(text):
    assert isinstance(parse_action(text), (WorkflowAction, ParseFailure))


def _env():
    docs = [
        Document("x1", "Kesmor", "Kesmor is a town.\nKesmor has a mill. The mill is old. The mill burned in 1900."),
        Document("x2", "Kesmor Festival", "The Kesmor Festival is held in spring."),
        Document("x3", "Dalreth", "Dalreth is a province."),
    ]
    return ToolEnvironment(docs)


def test_env_search_exact_title():
    env = _env()
    state, obs = env_step(env, env.reset(), WorkflowAction("Search", "kesmor"))
    assert obs == "Kesmor is a town."
    assert state.passage == "x1"


def test_env_search_similar():
    env = _env()
    state, obs = env.step(env.reset(), WorkflowAction("Search", "Kesmor mill"))
    assert obs.startswith("Could not find [Kesmor mill]. Similar: [")
    assert "'Kesmor'" in obs
    assert state.passage is None


def test_env_lookup_cursor():
    env = _env()
    s, _ = env.step(env.reset(), WorkflowAction("Search", "Kesmor"))
    s, o1 = env.step(s, WorkflowAction("Lookup", "mill"))
    s, o2 = env.step(s, WorkflowAction("Lookup", "mill"))
    s, o3 = env.step(s, WorkflowAction("Lookup", "mill"))
    s, o4 = env.step(s, WorkflowAction("Lookup", "mill"))
    assert o1 == "(Result 1 / 3) Kesmor has a mill."
    assert o2.startswith("(Result 2 / 3)") and o3.startswith("(Result 3 / 3)")
    assert o4 == "No more results."


def test_env_lookup_before_search():
    env = _env()
    s, obs = env.step(env.reset(), WorkflowAction("Lookup", "mill"))
    assert "no current passage" in obs.lower()
    assert s == EnvState()


def test_env_finish_and_invalid():
    env = _env()
    s, obs = env.step(env.reset(), parse_action("blah"))
    assert obs == "Invalid action: no action found."
    s, obs = env.step(s, WorkflowAction("Finish", "Dalreth"))
    assert s.finished and s.answer == "Dalreth"


def test_env_step_pure():
    env = _env()
    s0 = env.reset()
    a = env.step(s0, WorkflowAction("Search", "Kesmor"))
    b = env.step(s0, WorkflowAction("Search", "Kesmor"))
    assert a == b and s0 == EnvState()


def test_sentence_split_abbreviations():
    assert split_sentences("Dr. Vel went home. He slept! Why? Yes.") == ["Dr. Vel went home.", "He slept!", "Why?", "Yes."]
    assert split_sentences("Born in the U.S. in 1900. Died later.") == ["Born in the U.S. in 1900.", "Died later."]


def test_corpus_roundtrip_and_errors(tmp_path):
    p = tmp_path / "c.jsonl"
    write_corpus(THREE, p)
    assert load_corpus(p) == THREE
    p.write_text('{"id": "a", "title": "t", "text": "x"}\n{"id": "b", "title": "t"}\n')
    with pytest.raises(CorpusError, match=":2:"):
        load_corpus(p)
    p.write_text('{"id": "a", "title": "t", "text": "x"}\n{"id": "a", "title": "t", "text": "y"}\n')
    with pytest.raises(CorpusError, match="duplicate"):
        load_corpus(p)
    with pytest.raises(CorpusError):
        Document("z", "t", "   ")


def test_fixture_dataset_composition(world):
    kinds = Counter(q.kind for q in world.questions)
    assert len(world.questions) == 25
    assert kinds == {"open": 10, "yesno": 5, "choice": 5, "numeric": 3, "fever": 2}
    assert sum(q.is_yesno for q in world.questions) == 5
    assert sum(q.is_choice for q in world.questions) == 5
    assert len(world.corpus) == 200


def test_fixture_answers_are_in_corpus(world):
    titles = {d.title for d in world.corpus}
    for q in world.questions:
        if q.kind == "open":
            assert q.answers[0] in titles


def test_dataset_roundtrip_and_errors(tmp_path):
    p = tmp_path / "q.jsonl"
    p.write_text("")
    assert load_dataset(p) == []
    recs = [QuestionRecord("1", "Is it?", ("yes",), "yesno"), QuestionRecord("2", "Who?", ("A", "B"))]
    write_dataset(recs, p)
    assert load_dataset(p) == recs
    p.write_text('{"id": "1", "question": "q", "answers": ["a"]}\n{"id": "2", "question": "q", "answers": "a"}\n')
    with pytest.raises(DatasetError, match=":2:"):
        load_dataset(p)
    p.write_text('{"id": "1", "question": "q", "answers": ["a"], "kind": "essay"}\n')
    with pytest.raises(DatasetError, match=":1:"):
        load_dataset(p)


def test_fixture_path_points_at_bundled_files():
    assert fixture_path("questions.jsonl").is_file()
