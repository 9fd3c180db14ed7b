"""Seed derivation.

``derive_seed(master, *keys)`` folds each key into a 64-bit state with the
splitmix64 finalizer: ``state = mix(state ^ h(key))`` where ``h`` is the
integer itself for ints and the first 8 bytes of BLAKE2b for strings. The
result is stable across processes and platforms (no ``hash()``), so a
per-question, per-agent, per-round seed can be recomputed from the master.
"""
from __future__ import annotations

import hashlib

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def _key(k) -> int:
    if isinstance(k, bool) or not isinstance(k, (int, str)):
        raise TypeError(f"seed keys must be int or str, got {type(k).__name__}")
    if isinstance(k, int):
        return k & _MASK
    return int.from_bytes(hashlib.blake2b(k.encode("utf-8"), digest_size=8).digest(), "little")


def derive_seed(master: int, *keys) -> int:
    state = splitmix64(master & _MASK)
    for k in keys:
        state = splitmix64(state ^ _key(k))
    return state >> 1  # fits numpy's signed seed range comfortably
