"""Inner loops of the forward pass: RMS normalisation and causal attention.

Each kernel has a numpy implementation and a numba loop implementation with
the same signature. ``rms_norm`` and ``causal_attention`` dispatch to one of
them according to ``STATEDELTA_NUMBA`` (see :mod:`statedelta._accel`).

Both paths are deterministic, and both are strictly causal: the output row
for query position ``i`` never reads key/value rows past ``i``, so changing
later rows cannot perturb earlier outputs in any bit.
"""
import math

import numpy as np

from statedelta._accel import HAS_NUMBA, NUMBA_AVAILABLE, njit


def rms_norm_numpy(x, weight, eps):
    ms = np.mean(x * x, axis=-1, keepdims=True, dtype=np.float32)
    return (x / np.sqrt(ms + np.float32(eps))) * weight


def causal_attention_numpy(q, k_cache, v_cache, start):
    """Attention of ``m`` new queries at positions ``start..start+m-1``.

    q: (m, H, dh); k_cache, v_cache: (T, H, dh) with rows ``< start + m``
    valid. Returns (m, H, dh).
    """
    m, n_heads, dh = q.shape
    total = start + m
    scale = np.float32(1.0 / math.sqrt(dh))
    qh = q.transpose(1, 0, 2)  # (H, m, dh)
    kh = k_cache[:total].transpose(1, 2, 0)  # (H, dh, T)
    vh = v_cache[:total].transpose(1, 0, 2)  # (H, T, dh)
    out = np.empty((n_heads, m, dh), dtype=np.float32)
    for i in range(m):
        # row-by-row slicing keeps each query's reductions over exactly the
        # visible keys, independent of whatever sits beyond them
        upto = start + i + 1
        scores = (qh[:, i : i + 1, :] @ kh[:, :, :upto]) * scale  # (H, 1, upto)
        scores = scores - scores.max(axis=-1, keepdims=True)
        w = np.exp(scores)
        w /= w.sum(axis=-1, keepdims=True)
        out[:, i : i + 1, :] = w @ vh[:, :upto, :]
    return out.transpose(1, 0, 2)


@njit
def rms_norm_numba(x, weight, eps):
    m, d = x.shape
    out = np.empty_like(x)
    for i in range(m):
        acc = np.float32(0.0)
        for j in range(d):
            acc += x[i, j] * x[i, j]
        inv = np.float32(1.0) / np.sqrt(acc / np.float32(d) + np.float32(eps))
        for j in range(d):
            out[i, j] = x[i, j] * inv * weight[j]
    return out


@njit
def causal_attention_numba(q, k_cache, v_cache, start):
    m, n_heads, dh = q.shape
    scale = np.float32(1.0 / math.sqrt(dh))
    out = np.zeros((m, n_heads, dh), dtype=np.float32)
    scores = np.empty(start + m, dtype=np.float32)
    for h in range(n_heads):
        for i in range(m):
            upto = start + i + 1
            best = np.float32(-np.inf)
            for j in range(upto):
                s = np.float32(0.0)
                for c in range(dh):
                    s += q[i, h, c] * k_cache[j, h, c]
                s *= scale
                scores[j] = s
                if s > best:
                    best = s
            total = np.float32(0.0)
            for j in range(upto):
                e = np.exp(scores[j] - best)
                scores[j] = e
                total += e
            for j in range(upto):
                w = scores[j] / total
                for c in range(dh):
                    out[i, h, c] += w * v_cache[j, h, c]
    return out


def _as_f32(a):
    return np.ascontiguousarray(a, dtype=np.float32)


if HAS_NUMBA:

    def rms_norm(x, weight, eps):
        return rms_norm_numba(_as_f32(x), _as_f32(weight), float(eps))

    def causal_attention(q, k_cache, v_cache, start):
        return causal_attention_numba(_as_f32(q), k_cache, v_cache, int(start))

else:
    rms_norm = rms_norm_numpy
    causal_attention = causal_attention_numpy


BACKEND = "numba" if HAS_NUMBA else "numpy"

__all__ = [
    "BACKEND",
    "NUMBA_AVAILABLE",
    "causal_attention",
    "causal_attention_numba",
    "causal_attention_numpy",
    "rms_norm",
    "rms_norm_numba",
    "rms_norm_numpy",
]
