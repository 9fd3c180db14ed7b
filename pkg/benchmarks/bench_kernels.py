"""Numba vs numpy timings for the forward-pass kernels.

    python3 benchmarks/bench_kernels.py            # kernel micro-benchmarks
    python3 benchmarks/bench_kernels.py --e2e      # plus five IA questions per backend

The kernel table times both implementations in one process (numba compiles
once up front). ``--e2e`` re-runs this script in a child with
STATEDELTA_NUMBA=0 / 1 so the whole model takes the selected path.
"""
import argparse
import json
import os
import subprocess
import sys
import time
import timeit

import numpy as np

from statedelta.model.kernels import (
    causal_attention_numba,
    causal_attention_numpy,
    rms_norm_numba,
    rms_norm_numpy,
)


def best_of(fn, repeat=5, number=None):
    t = timeit.Timer(fn)
    if number is None:
        number, _ = t.autorange()
    return min(t.repeat(repeat=repeat, number=number)) / number


def attention_case(m, total, heads=4, dh=8, seed=0):
    rng = np.random.default_rng(seed)
    q = rng.standard_normal((m, heads, dh)).astype(np.float32)
    k = rng.standard_normal((total, heads, dh)).astype(np.float32)
    v = rng.standard_normal((total, heads, dh)).astype(np.float32)
    return q, k, v, total - m


def kernel_table():
    rows = []
    for label, m, total in [("decode T=64", 1, 64), ("decode T=1000", 1, 1000), ("prefill 128", 128, 128), ("prefill 512", 512, 512)]:
        q, k, v, start = attention_case(m, total)
        causal_attention_numba(q, k, v, start)  # compile
        err = float(np.abs(causal_attention_numba(q, k, v, start) - causal_attention_numpy(q, k, v, start)).max())
        a = best_of(lambda: causal_attention_numpy(q, k, v, start))
        b = best_of(lambda: causal_attention_numba(q, k, v, start))
        rows.append(("attention " + label, a, b, err))
    rng = np.random.default_rng(1)
    for m in (1, 512):
        x = rng.standard_normal((m, 32)).astype(np.float32)
        w = rng.standard_normal(32).astype(np.float32)
        rms_norm_numba(x, w, 1e-5)
        err = float(np.abs(rms_norm_numba(x, w, 1e-5) - rms_norm_numpy(x, w, 1e-5)).max())
        rows.append((f"rms_norm m={m}", best_of(lambda: rms_norm_numpy(x, w, 1e-5)), best_of(lambda: rms_norm_numba(x, w, 1e-5)), err))
    print(f"{'kernel':<26}{'numpy us':>12}{'numba us':>12}{'speedup':>10}{'max diff':>12}")
    for name, a, b, err in rows:
        print(f"{name:<26}{a * 1e6:>12.1f}{b * 1e6:>12.1f}{a / b:>10.1f}{err:>12.1e}")


def ia_timing():
    """Time five fixture IA questions in this process's backend."""
    from statedelta.environment import build_index, fixture_path, load_corpus, load_dataset
    from statedelta.model import DecodeSettings, ModelConfig, Tokenizer, build_toy_model
    from statedelta.model.kernels import BACKEND
    from statedelta.orchestration import ProtocolConfig, ia_shards, run_ia

    tok = Tokenizer.load(fixture_path("vocab.json"))
    handle = build_toy_model(ModelConfig(n_layers=4, d_model=32, n_heads=4, vocab_size=tok.vocab_size, max_seq=4096), 7, tok)
    index = build_index(load_corpus(fixture_path("corpus.jsonl")))
    qs = load_dataset(fixture_path("questions.jsonl"))
    cfg = ProtocolConfig(method="sde", layers=(1, 2), settings=DecodeSettings(max_new_tokens=16))
    run_ia(handle, qs[0], *ia_shards(index, qs[0]), cfg)  # warm up
    t0 = time.perf_counter()
    tokens = 0
    for q in qs[:5]:
        res = run_ia(handle, q, *ia_shards(index, q), cfg)
        tokens += sum(len(t.message.tokens) for t in res.turns)
    dt = time.perf_counter() - t0
    print(json.dumps({"backend": BACKEND, "seconds": dt, "tokens": tokens}))


def e2e():
    print(f"\n{'backend':<10}{'5 IA questions s':>18}{'tokens/s':>12}")
    for flag in ("0", "1"):
        env = dict(os.environ, STATEDELTA_NUMBA=flag)
        out = subprocess.run([sys.executable, __file__, "--one"], env=env, capture_output=True, text=True, check=True)
        r = json.loads(out.stdout.strip().splitlines()[-1])
        print(f"{r['backend']:<10}{r['seconds']:>18.2f}{r['tokens'] / r['seconds']:>12.0f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--e2e", action="store_true")
    ap.add_argument("--one", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.one:
        ia_timing()
    else:
        kernel_table()
        if args.e2e:
            e2e()
