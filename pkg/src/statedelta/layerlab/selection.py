"""Layer sweep, ranking and injection-layer strategies.

Ranking key: ``w_em * EM + w_f1 * F1`` (default weights 1 and 2), descending;
ties go to the higher F1, then the lower layer id. The number of layers kept
is ``clamp(floor(L / 16), 1, 3)`` unless overridden.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from statedelta.environment.bm25 import RetrievalIndex
from statedelta.environment.datasets import QuestionRecord
from statedelta.evalkit.scoring import score_question
from statedelta.model.engine import ModelHandle
from statedelta.orchestration.protocols import ProtocolConfig, ia_shards, run_ia

DEFAULT_WEIGHTS = (1.0, 2.0)


class LayerSelectionError(ValueError):
    pass


@dataclass(frozen=True)
class LayerScoreTable:
    scores: Mapping[int, tuple[float, float]]  # layer -> (EM, F1)

    def __post_init__(self):
        clean = {}
        for layer, (em, f1) in self.scores.items():
            if int(layer) in clean:
                raise LayerSelectionError(f"layer {layer} listed twice")
            clean[int(layer)] = (float(em), float(f1))
        object.__setattr__(self, "scores", dict(sorted(clean.items())))

    @property
    def layers(self) -> tuple[int, ...]:
        return tuple(self.scores)

    def __len__(self):
        return len(self.scores)

    def to_rows(self) -> list[dict]:
        return [{"layer": l, "em": em, "f1": f1} for l, (em, f1) in self.scores.items()]

    @classmethod
    def from_rows(cls, rows: Sequence[Mapping]) -> "LayerScoreTable":
        seen = {}
        for r in rows:
            layer = int(r["layer"])
            if layer in seen:
                raise LayerSelectionError(f"layer {layer} listed twice")
            seen[layer] = (float(r["em"]), float(r["f1"]))
        return cls(seen)


@dataclass(frozen=True)
class CombineTopK:
    k: int
    name = "combine"

    def pick(self, ranking: Sequence[int], n_layers: int) -> tuple[int, ...]:
        _check_k(self.k, ranking)
        return tuple(ranking[: self.k])


@dataclass(frozen=True)
class OnlyTopK:
    """The ``k``-th ranked layer on its own."""

    k: int
    name = "only"

    def pick(self, ranking: Sequence[int], n_layers: int) -> tuple[int, ...]:
        _check_k(self.k, ranking)
        return (ranking[self.k - 1],)


@dataclass(frozen=True)
class AllLayers:
    name = "all"

    def pick(self, ranking: Sequence[int], n_layers: int) -> tuple[int, ...]:
        return tuple(range(n_layers))


def _check_k(k: int, ranking: Sequence[int]) -> None:
    if k < 1:
        raise LayerSelectionError("k must be >= 1")
    if k > len(ranking):
        raise LayerSelectionError(f"k={k} exceeds the {len(ranking)} ranked layers")


def parse_strategy(spec: str):
    """``"combine:2"``, ``"only:1"`` or ``"all"``."""
    name, _, arg = spec.partition(":")
    if name == "all" and not arg:
        return AllLayers()
    if name in ("combine", "only") and arg.isdigit():
        return (CombineTopK if name == "combine" else OnlyTopK)(int(arg))
    raise LayerSelectionError(f"bad strategy {spec!r}; expected combine:K, only:K or all")


def strategy_spec(strategy) -> str:
    return "all" if isinstance(strategy, AllLayers) else f"{strategy.name}:{strategy.k}"


@dataclass(frozen=True)
class LayerSelection:
    layers: tuple[int, ...]
    strategy: object
    ranking: tuple[int, ...] = field(default=())

    def to_dict(self) -> dict:
        return {"layers": list(self.layers), "strategy": strategy_spec(self.strategy), "ranking": list(self.ranking)}


def layer_count(n_layers: int) -> int:
    return min(3, max(1, math.floor(n_layers / 16)))


def rank_layers(table: LayerScoreTable, weights: Sequence[float] = DEFAULT_WEIGHTS) -> list[int]:
    if not len(table):
        raise LayerSelectionError("empty layer score table")
    w_em, w_f1 = weights
    return sorted(table.scores, key=lambda l: (-(w_em * table.scores[l][0] + w_f1 * table.scores[l][1]), -table.scores[l][1], l))


def rank_and_select(
    table: LayerScoreTable,
    n_layers: int | None = None,
    k: int | None = None,
    weights: Sequence[float] = DEFAULT_WEIGHTS,
) -> LayerSelection:
    ranking = rank_layers(table, weights)
    if k is None:
        if n_layers is None:
            raise LayerSelectionError("give the model depth or an explicit k")
        # a partial table (e.g. a top-5 excerpt) caps the default count
        k = min(layer_count(n_layers), len(ranking))
    strategy = CombineTopK(k)
    return LayerSelection(strategy.pick(ranking, n_layers or len(ranking)), strategy, tuple(ranking))


def select_layers(table: LayerScoreTable, strategy, n_layers: int, weights: Sequence[float] = DEFAULT_WEIGHTS) -> LayerSelection:
    ranking = rank_layers(table, weights) if len(table) else []
    return LayerSelection(strategy.pick(ranking, n_layers), strategy, tuple(ranking))


def _ia_metrics(handle, questions, index, cfg: ProtocolConfig) -> tuple[float, float]:
    em = f1 = 0.0
    for q in questions:
        a, b = ia_shards(index, q)
        res = run_ia(handle, q, a, b, cfg)
        m = score_question([t.text for t in res.final_round], q, "ia").metrics
        em += m.get("em", m.get("acc", 0.0))
        f1 += m.get("f1", m.get("acc", 0.0))
    n = max(len(questions), 1)
    return em / n, f1 / n


def sweep_layers(
    handle: ModelHandle,
    questions: Sequence[QuestionRecord],
    index: RetrievalIndex,
    candidates: Sequence[int] | None = None,
    cfg: ProtocolConfig = ProtocolConfig(),
) -> LayerScoreTable:
    """Run the IA task with SDE on each candidate layer alone; record EM and F1."""
    L = handle.n_layers
    candidates = list(range(L)) if candidates is None else list(candidates)
    for l in candidates:
        if not 0 <= l < L:
            raise LayerSelectionError(f"layer {l} outside [0, {L})")
    if len(set(candidates)) != len(candidates):
        raise LayerSelectionError("duplicate candidate layers")
    return LayerScoreTable({l: _ia_metrics(handle, questions, index, replace(cfg, method="sde", layers=(l,))) for l in candidates})


def evaluate_strategy(
    handle: ModelHandle,
    questions: Sequence[QuestionRecord],
    index: RetrievalIndex,
    table: LayerScoreTable,
    strategy,
    cfg: ProtocolConfig = ProtocolConfig(method="sde"),
) -> tuple[dict, LayerSelection]:
    """IA scores with the strategy's layer set, plus the selection used."""
    sel = select_layers(table, strategy, handle.n_layers)
    em, f1 = _ia_metrics(handle, questions, index, replace(cfg, method=cfg.method if cfg.method in ("sde", "raw") else "sde", layers=sel.layers))
    return {"em": em, "f1": f1}, sel
