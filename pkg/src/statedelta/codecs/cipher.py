"""CIPHER: probability-weighted averages of the token embedding table."""
from __future__ import annotations

import numpy as np

from statedelta.codecs.message import CipherPayload
from statedelta.codecs.sde import CodecError
from statedelta.model.engine import softmax_at


def cipher_distributions(logits: np.ndarray, temperature: float) -> np.ndarray:
    """Row-wise softmax of ``logits`` at ``temperature`` (0 -> argmax one-hot)."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    return np.stack([softmax_at(row, temperature) for row in logits])


def encode_cipher(step_distributions, handle, temperature: float | None = None, *, from_logits: bool = False) -> CipherPayload:
    """Weighted embeddings ``sum_v p_i(v) * E[v]`` plus argmax renderings.

    With ``from_logits=True`` the rows are raw logits and are re-softmaxed at
    ``temperature`` first; otherwise they must already be distributions.
    """
    rows = np.atleast_2d(np.asarray(step_distributions, dtype=np.float64))
    if np.isnan(rows).any():
        raise CodecError("NaN in step distributions")
    if from_logits:
        if temperature is None or temperature < 0:
            raise CodecError("re-softmaxing needs a temperature >= 0")
        rows = cipher_distributions(rows, temperature)
    elif rows.size:
        if (rows < 0).any():
            raise CodecError("negative probability in step distributions")
        sums = rows.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > 1e-6)
        if bad.size:
            raise CodecError(f"distribution {int(bad[0])} sums to {sums[bad[0]]:.8f}, not 1")
    table = handle.embedding_table
    if rows.size and rows.shape[1] != table.shape[0]:
        raise CodecError(f"distributions cover {rows.shape[1]} tokens, table has {table.shape[0]}")
    if rows.size == 0:
        return CipherPayload(np.zeros((0, table.shape[1]), np.float32), ())
    emb = (rows.astype(np.float32) @ table).astype(np.float32)
    nearest = tuple(int(i) for i in rows.argmax(axis=1))
    return CipherPayload(emb, nearest)
