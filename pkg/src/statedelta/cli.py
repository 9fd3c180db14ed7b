"""Command line entry point: ``statedelta {run,sweep-layers,report,export-model,make-toy-model}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from statedelta.model.archive import export_tensor_archive
from statedelta.report import write_report
from statedelta.runner import DEFAULT_MODEL, ExperimentConfig, ExperimentError, load_model, run_experiment


def _ints(s: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in s.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON or YAML experiment config")
    p.add_argument("--from-manifest", help="re-run the config stored in a manifest")
    p.add_argument("--model", help="model spec as JSON, or a tensor archive path")
    p.add_argument("--dataset")
    p.add_argument("--corpus")
    p.add_argument("--seeds", type=_ints)
    p.add_argument("--max-new-tokens", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--limit", type=int)
    p.add_argument("--out")
    p.add_argument("--threads", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="statedelta")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run a protocol over a dataset")
    _add_common(run)
    run.add_argument("--task", choices=["ia", "debate", "workflow", "single"])
    run.add_argument("--setting", choices=["ia", "debate", "workflow"], help="baseline setting for --task single")
    run.add_argument("--method", choices=["nl", "sde", "cipher", "raw", "single"])
    run.add_argument("--layers", type=_ints)
    run.add_argument("--strategy", help="combine:K, only:K or all")
    run.add_argument("--layer-table", help="layers.csv or a sweep manifest")
    run.add_argument("--agents", type=int)
    run.add_argument("--max-steps", type=int, help="workflow step cap (alias of --rounds)")

    sw = sub.add_parser("sweep-layers", help="score each layer alone on the selection set")
    _add_common(sw)
    sw.add_argument("--candidates", type=_ints)

    rep = sub.add_parser("report", help="write CSV reports for a finished run")
    rep.add_argument("manifest", help="manifest.json or its directory")
    rep.add_argument("--out")

    ex = sub.add_parser("export-model", help="write a model spec to a tensor archive")
    ex.add_argument("--model", required=True, help="model spec as JSON, or an archive path")
    ex.add_argument("--out", required=True)

    mk = sub.add_parser("make-toy-model", help="build a seeded toy model archive")
    mk.add_argument("--layers", type=int, default=DEFAULT_MODEL["n_layers"])
    mk.add_argument("--d-model", type=int, default=DEFAULT_MODEL["d_model"])
    mk.add_argument("--heads", type=int, default=DEFAULT_MODEL["n_heads"])
    mk.add_argument("--max-seq", type=int, default=DEFAULT_MODEL["max_seq"])
    mk.add_argument("--seed", type=int, default=DEFAULT_MODEL["seed"])
    mk.add_argument("--tokenizer", default=DEFAULT_MODEL["tokenizer"])
    mk.add_argument("--out", required=True)
    return ap


def _model_spec(s: str) -> dict:
    s = s.strip()
    if s.startswith("{"):
        return json.loads(s)
    return {"kind": "archive", "path": s}


def _config(args, task: str) -> ExperimentConfig:
    if args.config and args.from_manifest:
        raise ExperimentError("use --config or --from-manifest, not both")
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
    elif args.from_manifest:
        cfg = ExperimentConfig.from_manifest(args.from_manifest)
    else:
        cfg = ExperimentConfig(task=task)
    over = {}
    if task == "layer-sweep":
        over["task"] = task
    for attr, key in [
        ("task", "task"),
        ("setting", "setting"),
        ("method", "method"),
        ("layers", "layers"),
        ("strategy", "strategy"),
        ("layer_table", "layer_table"),
        ("agents", "agents"),
        ("rounds", "rounds"),
        ("max_steps", "rounds"),
        ("candidates", "candidates"),
        ("dataset", "dataset"),
        ("corpus", "corpus"),
        ("seeds", "seeds"),
        ("max_new_tokens", "max_new_tokens"),
        ("limit", "limit"),
        ("out", "out_dir"),
        ("threads", "threads"),
    ]:
        v = getattr(args, attr, None)
        if v is not None:
            over[key] = v
    if getattr(args, "model", None):
        over["model"] = _model_spec(args.model)
    return replace(cfg, **over)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.cmd in ("run", "sweep-layers"):
            cfg = _config(args, "layer-sweep" if args.cmd == "sweep-layers" else "ia")
            m = run_experiment(cfg)
            print(json.dumps({"manifest": str(m.path), "summary": m.summary}, indent=2))
        elif args.cmd == "report":
            for name, path in write_report(args.manifest, args.out).items():
                print(f"{name}: {path}")
        elif args.cmd == "export-model":
            handle = load_model(_model_spec(args.model))
            export_tensor_archive(handle, args.out)
            print(f"{args.out} sha256 {handle.checksum()}")
        else:
            spec = {
                "kind": "toy",
                "n_layers": args.layers,
                "d_model": args.d_model,
                "n_heads": args.heads,
                "max_seq": args.max_seq,
                "seed": args.seed,
                "tokenizer": args.tokenizer,
            }
            handle = load_model(spec)
            export_tensor_archive(handle, args.out)
            print(f"{args.out} sha256 {handle.checksum()}")
    except (ExperimentError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
