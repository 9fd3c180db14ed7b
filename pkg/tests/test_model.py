import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from statedelta.model import (
    ConfigError,
    DecodeSettings,
    GenerationError,
    HookBus,
    ModelConfig,
    Session,
    build_toy_model,
    generate,
)
from statedelta.model import kernels

GREEDY = DecodeSettings(max_new_tokens=12)


def reference_forward(handle, tokens):
    """Unfused float64 forward pass, one position and one head at a time."""
    cfg = handle.config
    W = {k: v.astype(np.float64) for k, v in handle.weights.items()}
    T, d, H = len(tokens), cfg.d_model, cfg.n_heads
    dh = d // H

    def norm(v, w):
        return v / math.sqrt(sum(x * x for x in v) / len(v) + cfg.norm_eps) * w

    xs = [W["tok_emb"][t] + W["pos_emb"][i] for i, t in enumerate(tokens)]
    per_layer = []
    for l in range(cfg.n_layers):
        p = f"layers.{l}."
        normed = [norm(x, W[p + "attn_norm"]) for x in xs]
        qs = [n @ W[p + "wq"] for n in normed]
        ks = [n @ W[p + "wk"] for n in normed]
        vs = [n @ W[p + "wv"] for n in normed]
        new = []
        for i in range(T):
            heads = []
            for h in range(H):
                sl = slice(h * dh, (h + 1) * dh)
                scores = [float(qs[i][sl] @ ks[j][sl]) / math.sqrt(dh) for j in range(i + 1)]
                mx = max(scores)
                ws = [math.exp(s - mx) for s in scores]
                tot = sum(ws)
                heads.append(sum(w / tot * vs[j][sl] for j, w in enumerate(ws)))
            y = xs[i] + np.concatenate(heads) @ W[p + "wo"]
            n2 = norm(y, W[p + "mlp_norm"])
            g = n2 @ W[p + "w_gate"]
            u = n2 @ W[p + "w_up"]
            y = y + (g / (1 + np.exp(-g)) * u) @ W[p + "w_down"]
            new.append(y)
        xs = new
        per_layer.append(np.stack(xs))
    logits = np.stack([norm(x, W["final_norm"]) @ W["lm_head"] for x in xs])
    return per_layer, logits


def test_build_is_deterministic():
    cfg = ModelConfig(n_layers=4, d_model=32, n_heads=4, vocab_size=256)
    assert build_toy_model(cfg, 7).checksum() == build_toy_model(cfg, 7).checksum()
    assert build_toy_model(cfg, 7).checksum() != build_toy_model(cfg, 8).checksum()


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n_layers=4, d_model=30, n_heads=4),
        dict(n_layers=0),
        dict(vocab_size=1),
        dict(max_seq=0),
    ],
)
def test_invalid_config(kwargs):
    with pytest.raises(ConfigError):
        ModelConfig(**kwargs)


def test_forward_matches_reference(tiny_model):
    tokens = [0, 5, 17, 3, 63]
    ref_states, ref_logits = reference_forward(tiny_model, tokens)
    s = Session(tiny_model)
    res = s.forward(tokens, capture=range(2), all_logits=True)
    for l in range(2):
        np.testing.assert_allclose(res.states[l], ref_states[l], rtol=2e-4, atol=2e-4)
    np.testing.assert_allclose(res.logits, ref_logits, rtol=2e-4, atol=2e-4)


def test_forward_single_token_zero(tiny_model):
    ref_states, ref_logits = reference_forward(tiny_model, [0])
    res = Session(tiny_model).forward([0], capture=[1])
    np.testing.assert_allclose(res.states[1][0], ref_states[1][0], rtol=1e-4, atol=1e-4)
    np.testing.assert_allclose(res.logits[0], ref_logits[0], rtol=1e-4, atol=1e-4)


def test_incremental_matches_prefill(toy_model):
    tokens = list(range(10, 30))
    full = Session(toy_model).forward(tokens, capture=[2], all_logits=True)
    inc = Session(toy_model)
    rows = []
    for t in tokens:
        rows.append(inc.forward([t], capture=[2]).states[2][0])
    np.testing.assert_allclose(np.stack(rows), full.states[2], rtol=1e-5, atol=1e-5)


def test_kernel_backends_agree(rng):
    q = rng.standard_normal((5, 4, 8)).astype(np.float32)
    k = rng.standard_normal((20, 4, 8)).astype(np.float32)
    v = rng.standard_normal((20, 4, 8)).astype(np.float32)
    a = kernels.causal_attention_numpy(q, k, v, 7)
    b = kernels.causal_attention_numba(q, k, v, 7)
    np.testing.assert_allclose(a, b, rtol=1e-5, atol=1e-6)
    x = rng.standard_normal((6, 16)).astype(np.float32)
    w = rng.standard_normal(16).astype(np.float32)
    np.testing.assert_allclose(kernels.rms_norm_numpy(x, w, 1e-5), kernels.rms_norm_numba(x, w, 1e-5), rtol=1e-5, atol=1e-6)


def test_greedy_determinism(toy_model):
    a = generate(toy_model, [1, 2, 3], GREEDY, HookBus([0, 3]))
    b = generate(toy_model, [1, 2, 3], GREEDY, HookBus([0, 3]))
    assert a.tokens == b.tokens
    for l in (0, 3):
        assert np.array_equal(a.trajectories[l], b.trajectories[l])


def test_sampled_determinism(toy_model):
    s = DecodeSettings(mode="sampled", temperature=0.9, top_p=0.9, top_k=50, repetition_penalty=1.05, max_new_tokens=20, seed=3)
    a = generate(toy_model, [4, 5], s)
    b = generate(toy_model, [4, 5], s)
    c = generate(toy_model, [4, 5], DecodeSettings(**{**s.to_dict(), "seed": 4}))
    assert a.tokens == b.tokens
    assert a.tokens != c.tokens


def test_trajectory_shape_and_h0(toy_model):
    prompt = [9, 8, 7, 6]
    rec = generate(toy_model, prompt, GREEDY, HookBus([1, 2]))
    assert len(rec.tokens) == 12
    assert rec.start == len(prompt)
    pre = Session(toy_model).forward(prompt, capture=[1, 2])
    for l in (1, 2):
        assert rec.trajectories[l].shape == (13, 32)
        assert np.array_equal(rec.trajectories[l][0], pre.states[l][-1])


def test_zero_plan_is_identity(toy_model):
    prompt = list(range(40, 52))
    plain = generate(toy_model, prompt, GREEDY, HookBus([0, 2]))
    zero = {1: {p: np.zeros(32, np.float32) for p in range(4, 8)}}
    hooked = generate(toy_model, prompt, GREEDY, HookBus([0, 2], [zero]))
    assert plain.tokens == hooked.tokens
    for l in (0, 2):
        assert np.array_equal(plain.trajectories[l], hooked.trajectories[l])


def test_causality_bit_identical(toy_model, rng):
    prompt = list(range(100, 120))
    p = 11
    plan = {1: {q: rng.standard_normal(32).astype(np.float32) * 5 for q in range(p, 16)}}
    base = Session(toy_model).forward(prompt, capture=range(4), all_logits=True)
    inj = Session(toy_model).forward(prompt, hooks=HookBus((), [plan]), capture=range(4), all_logits=True)
    for l in range(4):
        assert np.array_equal(base.states[l][:p], inj.states[l][:p])
    assert np.array_equal(base.logits[:p], inj.logits[:p])
    assert not np.array_equal(base.logits[p:], inj.logits[p:])


def test_inverse_plan_cancels(toy_model, rng):
    prompt = list(range(60, 75))
    delta = {2: {q: rng.standard_normal(32).astype(np.float32) * 3 for q in range(5, 10)}}
    neg = {2: {q: -v for q, v in delta[2].items()}}
    base = Session(toy_model).forward(prompt, capture=range(4), all_logits=True)
    both = Session(toy_model).forward(prompt, hooks=HookBus((), [delta, neg]), capture=range(4), all_logits=True)
    for l in range(4):
        assert np.array_equal(base.states[l], both.states[l])
    assert np.array_equal(base.logits, both.logits)


def test_hook_errors(toy_model):
    z = np.zeros(32, np.float32)
    with pytest.raises(GenerationError):
        generate(toy_model, [1, 2, 3], GREEDY, HookBus((), [{0: {3: z}}]))
    with pytest.raises(GenerationError):
        generate(toy_model, [1, 2, 3], GREEDY, HookBus((), [{4: {1: z}}]))
    with pytest.raises(GenerationError):
        generate(toy_model, [1, 2, 3], GREEDY, HookBus([9]))


def test_position_overflow(tiny_model):
    with pytest.raises(GenerationError, match="overflow"):
        generate(tiny_model, list(range(60)), DecodeSettings(max_new_tokens=5))


def test_raw_embedding_positions_match_tokens(toy_model):
    prompt = [3, 4, 5, 6]
    mixed = [3, np.array(toy_model.embedding_row(4)), 5, np.array(toy_model.embedding_row(6))]
    a = Session(toy_model).forward(prompt, capture=[3], all_logits=True)
    b = Session(toy_model).forward(mixed, capture=[3], all_logits=True)
    assert np.array_equal(a.states[3], b.states[3])


def test_embedding_row(toy_model):
    table = toy_model.embedding_table
    assert np.array_equal(toy_model.embedding_row(0), table[0])
    assert np.array_equal(toy_model.embedding_row(5), toy_model.embedding_row(5))
    t = 17
    onehot = np.zeros(table.shape[0])
    onehot[t] = 1.0
    brute = sum(onehot[v] * table[v].astype(np.float64) for v in range(table.shape[0]))
    assert np.array_equal(brute.astype(np.float32), toy_model.embedding_row(t))
    with pytest.raises(IndexError):
        toy_model.embedding_row(300)
    with pytest.raises(ValueError):
        toy_model.embedding_row(0)[0] = 1.0


def test_forced_tokens_and_stop(toy_model):
    forced = [50, 51, 52, 53, 54]
    rec = generate(toy_model, [1], DecodeSettings(max_new_tokens=10), forced_tokens=forced, capture_layers=[0])
    assert rec.tokens == forced and rec.finish_reason == "script"
    assert rec.trajectories[0].shape[0] == 6
    stop = lambda text: len(text) >= 3
    rec = generate(toy_model, [1], DecodeSettings(max_new_tokens=10), forced_tokens=[65, 66, 67, 68], stop=stop)
    assert rec.tokens == [65, 66, 67] and rec.finish_reason == "stop"


@pytest.mark.parametrize("flag, want", [("0", "numpy"), ("1", "numba")])
def test_backend_flag_selects_path_and_tokens_match(flag, want):
    code = (
        "import json\n"
        "from statedelta.model import DecodeSettings, ModelConfig, build_toy_model\n"
        "from statedelta.model.kernels import BACKEND\n"
        "h = build_toy_model(ModelConfig(n_layers=2, d_model=16, n_heads=2, vocab_size=64, max_seq=64), seed=1)\n"
        "r = h.new_session().generate([1, 2, 3], DecodeSettings(max_new_tokens=8))\n"
        "print(json.dumps([BACKEND, r.tokens]))\n"
    )
    out = subprocess.run([sys.executable, "-c", code], env={**os.environ, "STATEDELTA_NUMBA": flag}, capture_output=True, text=True, check=True)
    backend, tokens = json.loads(out.stdout)
    assert backend == want
    ref = build_toy_model(ModelConfig(n_layers=2, d_model=16, n_heads=2, vocab_size=64, max_seq=64), seed=1)
    assert tokens == ref.new_session().generate([1, 2, 3], DecodeSettings(max_new_tokens=8)).tokens
