"""CSV reports from a finished run: summary, per-layer table, overhead."""
from __future__ import annotations

import csv
from pathlib import Path

from statedelta.layerlab.selection import LayerScoreTable, rank_layers
from statedelta.runner import RunManifest

SUMMARY_FIELDS = ["task", "setting", "method", "dataset", "metric", "value"]
LAYER_FIELDS = ["layer", "em", "f1", "rank", "selected"]
OVERHEAD_FIELDS = ["question_id", "run_seed", "token_bytes", "latent_bytes"]
METRICS = ("score", "em", "f1", "acc")


def _write(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_report(manifest: RunManifest | str | Path, out_dir=None) -> dict[str, Path]:
    if not isinstance(manifest, RunManifest):
        manifest = RunManifest.load(manifest)
    data = manifest.data
    out = Path(out_dir or manifest.path.parent)
    out.mkdir(parents=True, exist_ok=True)
    cfg = data["config"]
    setting = cfg.get("setting") or cfg["task"]

    rows = []
    summary = data.get("summary", {})
    if cfg["task"] != "layer-sweep" and summary.get("n"):
        for m in METRICS:
            if m in summary:
                rows.append([cfg["task"], setting, cfg["method"], cfg["dataset"], m, repr(float(summary[m]))])
    paths = {"summary": out / "summary.csv", "layers": out / "layers.csv", "overhead": out / "overhead.csv"}
    _write(paths["summary"], SUMMARY_FIELDS, rows)

    rows = []
    table_rows = data.get("layer_table")
    if table_rows:
        table = LayerScoreTable.from_rows(table_rows)
        weights = cfg.get("rank_weights") or (1.0, 2.0)
        ranking = rank_layers(table, weights)
        selected = set((data.get("selection") or {}).get("layers", ()))
        for l in ranking:
            em, f1 = table.scores[l]
            rows.append([l, repr(em), repr(f1), ranking.index(l) + 1, int(l in selected)])
    _write(paths["layers"], LAYER_FIELDS, rows)

    rows = []
    if cfg["task"] != "layer-sweep" and manifest.records_path.is_file():
        for rec in manifest.records():
            o = rec["overhead"]
            rows.append([rec["question_id"], rec["run_seed"], o["token_bytes"], o["latent_bytes"]])
    _write(paths["overhead"], OVERHEAD_FIELDS, rows)
    return paths
