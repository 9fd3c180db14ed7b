from statedelta.layerlab.selection import (
    DEFAULT_WEIGHTS,
    AllLayers,
    CombineTopK,
    LayerScoreTable,
    LayerSelection,
    LayerSelectionError,
    OnlyTopK,
    evaluate_strategy,
    layer_count,
    parse_strategy,
    rank_and_select,
    rank_layers,
    select_layers,
    strategy_spec,
    sweep_layers,
)

__all__ = [
    "DEFAULT_WEIGHTS",
    "AllLayers",
    "CombineTopK",
    "LayerScoreTable",
    "LayerSelection",
    "LayerSelectionError",
    "OnlyTopK",
    "evaluate_strategy",
    "layer_count",
    "parse_strategy",
    "rank_and_select",
    "rank_layers",
    "select_layers",
    "strategy_spec",
    "sweep_layers",
]
