"""Experiment configuration, execution and persistence.

A run writes ``records.jsonl`` (one line per question and run seed, in
dataset order) and ``manifest.json`` into its output directory. Records are
appended to ``records.jsonl.partial`` as questions finish; an interrupted run
resumes after the last complete line. Both final files appear by atomic
rename only once the run is complete.

``STATEDELTA_OUT_DIR`` and ``STATEDELTA_THREADS`` override the configured
output directory and worker count.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import yaml

from statedelta import __version__
from statedelta._accel import backend_name
from statedelta.environment.bm25 import build_index
from statedelta.environment.corpus import load_corpus
from statedelta.environment.datasets import QuestionRecord, fixture_path, load_dataset
from statedelta.environment.workflow_env import ToolEnvironment
from statedelta.evalkit.answers import extract_answer
from statedelta.evalkit.scoring import QuestionScore, aggregate, answer_format, score_question
from statedelta.layerlab.selection import (
    DEFAULT_WEIGHTS,
    LayerScoreTable,
    parse_strategy,
    rank_and_select,
    rank_layers,
    select_layers,
    sweep_layers,
)
from statedelta.model.archive import load_tensor_archive
from statedelta.model.config import QWEN_DEFAULTS, DecodeSettings, ModelConfig
from statedelta.model.engine import ModelHandle, build_toy_model
from statedelta.model.tokenizer import Tokenizer
from statedelta.orchestration.protocols import ProtocolConfig, ia_shards, run_debate, run_ia, run_single, run_workflow
from statedelta.orchestration.results import TaskResult

log = logging.getLogger(__name__)

TASKS = ("ia", "debate", "workflow", "single", "layer-sweep")
METHODS = ("nl", "sde", "cipher", "raw", "single")
BASE_SETTINGS = ("ia", "debate", "workflow")
TOKEN_BUDGETS = {"ia": 256, "debate": 512, "workflow": 100}
SINGLE_BUDGETS = {"ia": 256, "debate": 512, "workflow": 256}

DEFAULT_MODEL = {
    "kind": "toy",
    "n_layers": 4,
    "d_model": 32,
    "n_heads": 4,
    "max_seq": 4096,
    "seed": 7,
    "tokenizer": "fixture:vocab.json",
}

NOTES = {
    "normalization": "lowercase, punctuation removed, articles a/an/the removed, whitespace collapsed",
    "ia_scoring": "mean over final-round answers carrying \\boxed{}; unformatted answers excluded",
    "reinjection": "latent payloads are injected whenever a message span is prefilled; persistent sessions never re-prefill",
}


class ExperimentError(ValueError):
    pass


def resolve_path(p: str | os.PathLike) -> Path:
    """``fixture:NAME`` names a bundled fixture; anything else is a file path."""
    s = str(p)
    if s.startswith("fixture:"):
        return fixture_path(s[len("fixture:") :])
    return Path(s)


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "ia"
    method: str = "nl"
    setting: str | None = None  # baseline setting when task == "single"
    model: dict = field(default_factory=lambda: dict(DEFAULT_MODEL))
    layers: tuple[int, ...] | None = None
    strategy: str | None = None  # combine:K | only:K | all
    layer_table: str | None = None  # layers.csv or a sweep manifest
    rank_weights: tuple[float, float] = DEFAULT_WEIGHTS
    candidates: tuple[int, ...] | None = None
    agents: int = 2
    rounds: int | None = None
    max_new_tokens: int | None = None
    decode: dict | None = None
    dataset: str | None = None
    corpus: str = "fixture:corpus.jsonl"
    seeds: tuple[int, ...] | None = None
    limit: int | None = None
    cipher_temperature: float = 0.7
    out_dir: str = "runs/latest"
    threads: int = 1

    def __post_init__(self):
        for name in ("layers", "candidates", "seeds", "rank_weights"):
            v = getattr(self, name)
            if v is not None and not isinstance(v, tuple):
                object.__setattr__(self, name, tuple(v))

    # construction

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ExperimentError(f"unknown config field(s): {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text(encoding="utf-8")
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
        if not isinstance(data, dict):
            raise ExperimentError(f"{path}: config must be a mapping")
        return cls.from_dict(data)

    @classmethod
    def from_manifest(cls, path) -> "ExperimentConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_dict(data["config"])

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    # validation and defaults

    def resolved(self) -> "ExperimentConfig":
        """Copy with every default made explicit and method-specific checks done."""
        if self.task not in TASKS:
            raise ExperimentError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.method not in METHODS:
            raise ExperimentError(f"unknown method {self.method!r}; expected one of {METHODS}")
        cfg = self
        if cfg.method == "single" and cfg.task in BASE_SETTINGS:
            cfg = replace(cfg, task="single", setting=cfg.setting or cfg.task)
        if cfg.task == "single":
            if cfg.setting not in BASE_SETTINGS:
                raise ExperimentError(f"single-agent runs need setting in {BASE_SETTINGS}, got {cfg.setting!r}")
            cfg = replace(cfg, method="single")
        elif cfg.method == "single":
            raise ExperimentError(f"method 'single' does not apply to task {cfg.task!r}")
        elif cfg.setting is not None:
            raise ExperimentError("'setting' only applies to single-agent runs")
        if cfg.task == "layer-sweep":
            cfg = replace(cfg, method="sde")
        base = cfg.setting if cfg.task == "single" else cfg.task
        base = "ia" if base == "layer-sweep" else base

        if cfg.dataset is None:
            cfg = replace(cfg, dataset="fixture:selection.jsonl" if cfg.task == "layer-sweep" else "fixture:questions.jsonl")
        if cfg.max_new_tokens is None:
            budgets = SINGLE_BUDGETS if cfg.task == "single" else TOKEN_BUDGETS
            cfg = replace(cfg, max_new_tokens=budgets[base])
        if cfg.decode is None:
            dec = QWEN_DEFAULTS if base == "debate" else DecodeSettings()
            cfg = replace(cfg, decode={k: v for k, v in dec.to_dict().items() if k not in ("max_new_tokens", "seed")})
        if cfg.seeds is None:
            cfg = replace(cfg, seeds=(1, 2, 3) if base == "debate" else (0,))
        if not cfg.seeds:
            raise ExperimentError("seeds must not be empty")
        if cfg.task == "debate" and cfg.agents < 2:
            raise ExperimentError("debate needs at least two agents")
        if cfg.task == "ia" and cfg.agents != 2:
            raise ExperimentError("the IA task runs exactly two agents")
        if cfg.rounds is not None and cfg.rounds < 1:
            raise ExperimentError("rounds must be >= 1")
        if cfg.limit is not None and cfg.limit < 0:
            raise ExperimentError("limit must be >= 0")
        if cfg.threads < 1:
            raise ExperimentError("threads must be >= 1")
        if cfg.strategy is not None:
            strat = parse_strategy(cfg.strategy)
            if cfg.layers is not None:
                raise ExperimentError("give either explicit layers or a strategy, not both")
            if strat.name != "all" and cfg.layer_table is None:
                raise ExperimentError(f"strategy {cfg.strategy!r} needs a layer_table")
        if cfg.method in ("sde", "raw") and cfg.task != "layer-sweep" and not (cfg.layers or cfg.strategy):
            raise ExperimentError(f"method {cfg.method!r} needs layers or a strategy")
        if cfg.method not in ("sde", "raw") and (cfg.layers or cfg.strategy):
            raise ExperimentError(f"method {cfg.method!r} takes no injection layers")
        DecodeSettings.from_dict({**cfg.decode, "max_new_tokens": cfg.max_new_tokens})
        return cfg

    @property
    def base_setting(self) -> str:
        return self.setting if self.task == "single" else ("ia" if self.task == "layer-sweep" else self.task)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def load_model(spec: dict) -> ModelHandle:
    spec = dict(spec)
    kind = spec.pop("kind", "toy")
    if kind == "archive":
        path = resolve_path(spec["path"])
        if not path.is_file():
            raise ExperimentError(f"model archive not found: {path}")
        return load_tensor_archive(path)
    if kind != "toy":
        raise ExperimentError(f"unknown model kind {kind!r}")
    tok_path = spec.pop("tokenizer", None)
    if tok_path is None:
        tok = Tokenizer(mode="byte")
    else:
        path = resolve_path(tok_path)
        if not path.is_file():
            raise ExperimentError(f"tokenizer not found: {path}")
        tok = Tokenizer.load(path)
    seed = spec.pop("seed", 0)
    spec.setdefault("vocab_size", tok.vocab_size)
    return build_toy_model(ModelConfig.from_dict(spec), seed=seed, tokenizer=tok)


def load_layer_table(path) -> LayerScoreTable:
    path = resolve_path(path)
    if not path.is_file():
        raise ExperimentError(f"layer table not found: {path}")
    if path.suffix == ".json":
        data = json.loads(path.read_text(encoding="utf-8"))
        rows = data.get("layer_table") or data.get("summary", {}).get("table")
        if rows is None:
            raise ExperimentError(f"{path} holds no layer table")
        return LayerScoreTable.from_rows(rows)
    with open(path, newline="", encoding="utf-8") as fh:
        return LayerScoreTable.from_rows(list(csv.DictReader(fh)))


@dataclass
class RunManifest:
    path: Path
    data: dict

    @property
    def summary(self) -> dict:
        return self.data["summary"]

    @property
    def records_path(self) -> Path:
        return self.path.parent / "records.jsonl"

    def records(self) -> list[dict]:
        with open(self.records_path, encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]

    @classmethod
    def load(cls, path) -> "RunManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        return cls(path, json.loads(path.read_text(encoding="utf-8")))


class _Context:
    """Everything a worker needs; read-only once built."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.handle = load_model(cfg.model)
        ds = resolve_path(cfg.dataset)
        if not ds.is_file():
            raise ExperimentError(f"dataset not found: {ds}")
        self.questions = load_dataset(ds)
        if cfg.limit is not None:
            self.questions = self.questions[: cfg.limit]
        self.index = self.env = None
        if cfg.base_setting in ("ia", "workflow"):
            cp = resolve_path(cfg.corpus)
            if not cp.is_file():
                raise ExperimentError(f"corpus not found: {cp}")
            corpus = load_corpus(cp)
            self.index = build_index(corpus)
            self.env = ToolEnvironment(corpus, self.index)
        self.table = load_layer_table(cfg.layer_table) if cfg.layer_table else None
        self.layers: tuple[int, ...] = tuple(cfg.layers or ())
        self.selection = None
        if cfg.strategy is not None:
            self.selection = select_layers(
                self.table or LayerScoreTable({}), parse_strategy(cfg.strategy), self.handle.n_layers, cfg.rank_weights
            )
            self.layers = self.selection.layers
        for l in self.layers:
            if not 0 <= l < self.handle.n_layers:
                raise ExperimentError(f"layer {l} outside the model's {self.handle.n_layers} layers")

    def protocol(self, run_seed: int) -> ProtocolConfig:
        cfg = self.cfg
        settings = DecodeSettings.from_dict({**cfg.decode, "max_new_tokens": cfg.max_new_tokens})
        return ProtocolConfig(
            method=cfg.method,
            layers=self.layers,
            settings=settings,
            n_agents=cfg.agents,
            rounds=cfg.rounds,
            seed=run_seed,
            default_temperature=cfg.cipher_temperature,
        )

    def run_question(self, q: QuestionRecord, run_seed: int) -> dict:
        cfg, pc = self.cfg, self.protocol(run_seed)
        base = cfg.base_setting
        if cfg.task == "single":
            shards = ia_shards(self.index, q) if base == "ia" else None
            result = run_single(self.handle, base, q, pc, shards)
        elif base == "ia":
            result = run_ia(self.handle, q, *ia_shards(self.index, q), pc)
        elif base == "debate":
            result = run_debate(self.handle, q, pc)
        else:
            result = run_workflow(self.handle, q, self.env, pc)
        return make_record(result, q, run_seed)


def make_record(result: TaskResult, q: QuestionRecord, run_seed: int) -> dict:
    setting = result.setting
    fmt = "finish" if setting == "workflow" else answer_format(setting, q)
    answers = []
    for rnd in result.rounds:
        row = []
        for t in rnd:
            a = extract_answer(t.text, fmt)
            row.append(None if a is None else a.raw)
        answers.append(row)
    score = score_question([t.text for t in result.final_round], q, setting, result.answer)
    return {
        "question_id": q.id,
        "setting": setting,
        "method": result.method,
        "run_seed": run_seed,
        "answers": answers,
        "score": score.to_dict(),
        "overhead": result.overhead(),
        "transcript": result.to_record(),
    }


def _dump(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, ensure_ascii=False)


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _read_partial(path: Path) -> list[str]:
    """Complete lines of an interrupted run; a torn last line is dropped."""
    if not path.is_file():
        return []
    raw = path.read_bytes()
    keep = raw[: raw.rfind(b"\n") + 1]
    lines = []
    for line in keep.decode("utf-8").splitlines():
        try:
            json.loads(line)
        except json.JSONDecodeError:
            break
        lines.append(line)
    path.write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    return lines


def summarize(records: Sequence[dict], seeds: Sequence[int]) -> dict:
    runs = [[QuestionScore.from_dict(r["score"]) for r in records if r["run_seed"] == s] for s in seeds]
    if not any(runs):
        return {"summary": {"n": 0, "runs": len(seeds)}, "per_run": []}
    return aggregate(runs)


def run_experiment(config: ExperimentConfig, out_dir=None, resume: bool = True, threads: int | None = None) -> RunManifest:
    cfg = config.resolved()
    out = Path(out_dir or os.environ.get("STATEDELTA_OUT_DIR") or cfg.out_dir)
    n_threads = threads or int(os.environ.get("STATEDELTA_THREADS") or cfg.threads)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    ctx = _Context(cfg)
    chash = cfg.config_hash()

    partial = out / "records.jsonl.partial"
    progress = out / "progress.json"
    done: list[str] = []
    if resume and progress.is_file() and json.loads(progress.read_text()).get("config_hash") == chash:
        done = _read_partial(partial)
        if done:
            log.info("resuming after %d completed records", len(done))
    else:
        partial.write_text("", encoding="utf-8")
        _atomic_write(progress, json.dumps({"config_hash": chash}))

    extra: dict = {}
    if cfg.task == "layer-sweep":
        records = _run_sweep(ctx, partial, done)
        table = LayerScoreTable.from_rows(records)
        ranking = rank_layers(table, cfg.rank_weights)
        sel = rank_and_select(table, ctx.handle.n_layers, weights=cfg.rank_weights)
        summary = {"summary": {"table": table.to_rows(), "ranking": ranking, "selection": sel.to_dict()}, "per_run": []}
        extra["layer_table"] = table.to_rows()
        extra["selection"] = sel.to_dict()
    else:
        jobs = [(q, s) for s in cfg.seeds for q in ctx.questions]
        lines = list(done)
        todo = jobs[len(done) :]
        with open(partial, "a", encoding="utf-8") as fh:
            if n_threads > 1:
                with ThreadPoolExecutor(max_workers=n_threads) as pool:
                    for rec in pool.map(lambda job: ctx.run_question(*job), todo):
                        lines.append(_append(fh, rec))
            else:
                for q, s in todo:
                    lines.append(_append(fh, ctx.run_question(q, s)))
        records = [json.loads(l) for l in lines]
        summary = summarize(records, cfg.seeds)
        if ctx.table is not None:
            extra["layer_table"] = ctx.table.to_rows()
        if ctx.selection is not None:
            extra["selection"] = ctx.selection.to_dict()
        lines_out = lines
    if cfg.task == "layer-sweep":
        lines_out = [_dump(r) for r in records]

    index = []
    for i, line in enumerate(lines_out):
        rec = json.loads(line)
        key = {"layer": rec["layer"]} if cfg.task == "layer-sweep" else {"question_id": rec["question_id"], "run_seed": rec["run_seed"]}
        index.append({**key, "line": i, "sha256": hashlib.sha256(line.encode("utf-8")).hexdigest()})
    overhead = {"token_bytes": 0, "latent_bytes": 0}
    if cfg.task != "layer-sweep":
        for r in records:
            for k in overhead:
                overhead[k] += r["overhead"][k]
    manifest = {
        "format": "statedelta-run",
        "version": 1,
        "package_version": __version__,
        "backend": backend_name(),
        "config": cfg.to_dict(),
        "config_hash": chash,
        "model_checksum": ctx.handle.checksum(),
        "layers": list(ctx.layers),
        "n_questions": len(ctx.questions),
        "record_index": index,
        "summary": summary["summary"],
        "per_run": summary["per_run"],
        "overhead": overhead,
        "wall_clock_s": round(time.time() - started, 3),
        "notes": NOTES,
        **extra,
    }
    os.replace(partial, out / "records.jsonl")
    _atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n")
    progress.unlink(missing_ok=True)
    return RunManifest(out / "manifest.json", manifest)


def _append(fh, rec: dict) -> str:
    line = _dump(rec)
    fh.write(line + "\n")
    fh.flush()
    return line


def _run_sweep(ctx: _Context, partial: Path, done: list[str]) -> list[dict]:
    cfg = ctx.cfg
    candidates = list(cfg.candidates) if cfg.candidates is not None else list(range(ctx.handle.n_layers))
    records = [json.loads(l) for l in done]
    finished = {r["layer"] for r in records}
    pc = ctx.protocol(cfg.seeds[0])
    with open(partial, "a", encoding="utf-8") as fh:
        for l in candidates:
            if l in finished:
                continue
            table = sweep_layers(ctx.handle, ctx.questions, ctx.index, [l], pc)
            em, f1 = table.scores[l]
            rec = {"layer": l, "em": em, "f1": f1}
            _append(fh, rec)
            records.append(rec)
    return records
