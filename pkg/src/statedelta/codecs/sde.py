"""State delta encoding and injection plans."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np


class CodecError(ValueError):
    pass


@dataclass(frozen=True)
class HiddenStateTrajectory:
    """States ``h_0..h_n`` at one layer; ``h_0`` is the last prompt position."""

    layer: int
    states: np.ndarray  # (n + 1, d) float32

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.float32)
        if states.ndim != 2:
            raise CodecError(f"trajectory must be 2-D, got shape {states.shape}")
        if not np.all(np.isfinite(states)):
            raise CodecError(f"non-finite hidden state at layer {self.layer}")
        object.__setattr__(self, "states", states)

    def __len__(self):
        return self.states.shape[0]


@dataclass(frozen=True)
class DeltaTrajectory:
    layer: int
    deltas: np.ndarray  # (n, d) float32

    def __post_init__(self):
        deltas = np.asarray(self.deltas, dtype=np.float32)
        if deltas.ndim != 2:
            raise CodecError(f"deltas must be 2-D, got shape {deltas.shape}")
        object.__setattr__(self, "deltas", deltas)

    def __len__(self):
        return self.deltas.shape[0]

    @classmethod
    def checked(cls, source: HiddenStateTrajectory, deltas: np.ndarray) -> "DeltaTrajectory":
        """Build from ``deltas`` after verifying they are successive differences of ``source``."""
        expected = np.diff(source.states, axis=0)
        deltas = np.asarray(deltas, dtype=np.float32)
        if deltas.shape != expected.shape or not np.array_equal(deltas, expected):
            raise CodecError(f"deltas at layer {source.layer} are not the differences of their source trajectory")
        return cls(source.layer, deltas)


def encode_sde(traj: HiddenStateTrajectory) -> DeltaTrajectory:
    """``s_i = h_i - h_{i-1}`` for ``i = 1..n``."""
    if len(traj) < 1:
        raise CodecError("cannot delta-encode an empty trajectory")
    return DeltaTrajectory(traj.layer, np.diff(traj.states, axis=0))


def decode_sde(h0: np.ndarray, deltas: DeltaTrajectory) -> np.ndarray:
    """Rebuild ``h_0..h_n`` from the initial state and the deltas (float64 prefix sums)."""
    h0 = np.asarray(h0, dtype=np.float64)
    acc = np.cumsum(deltas.deltas.astype(np.float64), axis=0) + h0
    return np.vstack([h0[None, :], acc])


def inject(h: np.ndarray, s: np.ndarray) -> np.ndarray:
    h = np.asarray(h)
    s = np.asarray(s)
    if h.shape != s.shape:
        raise CodecError(f"width mismatch: hidden {h.shape} vs delta {s.shape}")
    return h + s


@dataclass(frozen=True)
class InjectionPlan:
    """Per layer, one additive vector per position of ``[start, start + n)``."""

    start: int
    layers: Mapping[int, np.ndarray]  # layer -> (n, d)

    def __post_init__(self):
        lengths = {arr.shape[0] for arr in self.layers.values()}
        if len(lengths) > 1:
            raise CodecError(f"layers disagree on span length: {sorted(lengths)}")

    @property
    def length(self) -> int:
        return next(iter(self.layers.values())).shape[0] if self.layers else 0

    @property
    def span(self) -> tuple[int, int]:
        return self.start, self.start + self.length

    def positions(self) -> list[int]:
        return list(range(self.start, self.start + self.length)) if self.layers else []

    def as_mapping(self) -> dict[int, dict[int, np.ndarray]]:
        return {
            layer: {self.start + i: arr[i] for i in range(arr.shape[0])}
            for layer, arr in self.layers.items()
            if arr.shape[0]
        }

    def scaled(self, factor: float) -> "InjectionPlan":
        return InjectionPlan(self.start, {l: (a * np.float32(factor)).astype(np.float32) for l, a in self.layers.items()})

    def __neg__(self) -> "InjectionPlan":
        return InjectionPlan(self.start, {l: -a for l, a in self.layers.items()})
