"""Command-line interface.

Subcommands: gen (synthetic dataset), train (two-stage), eval (Recall@1 with
optional beta calibration), ablate (component/K ablation CSV), ground (one
sample, JSON output), parse-graph (language scene graph from a parse JSON),
and gradcheck (finite-difference verification).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .ablation import (MAIN_ROWS, RELATION_ROWS, k_sweep_rows, run_ablation,
                       write_report_csv)
from .config import Config, load_config
from .data import read_dataset, write_dataset, sample_from_json
from .encoders import Vocab
from .evaluation import evaluate_scored, score_samples
from .langgraph import build_scene_graph, graph_to_json, parse_input_from_json
from .matcher import calibrate_beta
from .params import load_weights, parameter_shapes, save_weights
from .pipeline import GroundingModel
from .synthworld import build_vocabulary, generate_dataset
from .trainer import train_two_stage
from .gradcheck import REGISTRY, check_op


def _load_cfg(args) -> Config:
    return load_config(getattr(args, "config", None))


def _dataset_for(cfg: Config, data_dir: str | None, split: str):
    if data_dir:
        return read_dataset(os.path.join(data_dir, f"{split}.jsonl"))
    return generate_dataset(cfg)[split]


def _model_from_weights(path: str, overrides: dict | None = None):
    store, meta = load_weights(path)
    cfg = load_config(None, {**meta.get("config", {}), **(overrides or {})})
    vocab = Vocab(meta.get("vocab", build_vocabulary()))
    expected = parameter_shapes(cfg, len(vocab))
    for name, shape in expected.items():
        if tuple(store.get(name).shape) != tuple(shape):
            raise ValueError(f"weight tensor {name} has shape "
                             f"{store.get(name).shape}, config wants {shape}")
    return GroundingModel(store, cfg, vocab), cfg, vocab


def cmd_gen(args) -> int:
    cfg = _load_cfg(args)
    os.makedirs(args.out, exist_ok=True)
    datasets = generate_dataset(cfg)
    for split, samples in datasets.items():
        path = os.path.join(args.out, f"{split}.jsonl")
        write_dataset(samples, path)
        print(f"wrote {len(samples)} samples to {path}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    vocab = Vocab(build_vocabulary())
    samples = _dataset_for(cfg, args.data, "train")

    def log(stage, it, loss):
        if it % max(1, (cfg.stage1_iters + cfg.stage2_iters) // 20) == 0:
            print(f"stage {stage} iter {it}: loss {loss:.4f}")

    store = train_two_stage(samples, cfg, vocab, callback=log if args.verbose else None)
    meta = {"config": dataclasses.asdict(cfg), "vocab": vocab.tokens[1:]}
    meta["config"]["milestones"] = list(cfg.milestones)
    save_weights(store, args.out, meta)
    print(f"saved weights to {args.out}")
    return 0


def cmd_eval(args) -> int:
    model, cfg, _vocab = _model_from_weights(args.weights)
    samples = read_dataset(args.data)
    scored = score_samples(model, samples)
    if args.beta == "auto":
        if args.val:
            val_scored = score_samples(model, read_dataset(args.val))
        else:
            print("note: no --val given; calibrating beta on --data itself",
                  file=sys.stderr)
            val_scored = scored
        beta, _ = calibrate_beta(val_scored, cfg.beta_grid_step,
                                 cfg.sp_max_phrases)
    else:
        beta = float(args.beta)
    report = evaluate_scored(scored, cfg, name=os.path.basename(args.data),
                             beta=beta)
    print(json.dumps({
        "recall_at_1": report.recall_at_1,
        "hits": report.hits,
        "phrases": report.phrase_count,
        "beta": beta,
        "per_category": report.per_category,
    }, indent=2, sort_keys=True))
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_cfg(args)
    datasets = {
        "train": _dataset_for(cfg, args.data, "train"),
        "val": _dataset_for(cfg, args.data, "val"),
    }
    rows = list(MAIN_ROWS)
    if args.relations:
        rows += list(RELATION_ROWS)
    if args.k_sweep:
        rows += [r for r in k_sweep_rows(tuple(args.k_sweep))
                 if r.top_k != cfg.top_k]
    reports = run_ablation(datasets, cfg, rows, log=print)
    write_report_csv(reports, args.out)
    print(f"wrote {len(reports)} rows to {args.out}")
    return 0


def cmd_ground(args) -> int:
    overrides = {}
    if args.no_pgn:
        overrides["use_pgn"] = False
    if args.no_pp:
        overrides["use_pp"] = False
        overrides["use_vogn"] = False
        overrides["use_sp"] = False
    if args.no_vogn:
        overrides["use_vogn"] = False
    if args.no_sp:
        overrides["use_sp"] = False
    model, cfg, _vocab = _model_from_weights(args.weights, overrides)
    with open(args.scene) as fh:
        sample = sample_from_json(json.load(fh))
    output = model.ground(sample, beta=args.beta)
    doc = {
        "beta": args.beta if cfg.use_sp else 0.0,
        "objective": output.objective,
        "phrases": [{
            "id": p.id,
            "category": p.category,
            "box": [float(v) for v in output.boxes[i]],
            "score": float(output.scores[i]),
        } for i, p in enumerate(sample.phrases)],
    }
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def cmd_parse_graph(args) -> int:
    with open(args.input) as fh:
        doc = json.load(fh)
    tokens, parse, phrases = parse_input_from_json(doc)
    graph = build_scene_graph(tokens, parse, phrases)
    with open(args.out, "w") as fh:
        json.dump(graph_to_json(graph), fh, indent=2, sort_keys=True)
    print(f"wrote graph with {len(graph.nodes)} nodes, "
          f"{len(graph.edges)} edges to {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    names = sorted(REGISTRY) if args.op == "all" else [args.op]
    worst_overall = 0.0
    for name in names:
        worst = check_op(name, seed=args.seed, points=args.points)
        print(f"[{name}]")
        for tensor, err in sorted(worst.items()):
            print(f"  {tensor}: max rel err {err:.3e}")
        top = max(worst.values()) if worst else 0.0
        worst_overall = max(worst_overall, top)
        print(f"  -> worst {top:.3e}")
    return 0 if worst_overall <= 1e-4 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="groundnet",
        description="cross-modal graph grounding on synthetic scenes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate the synthetic dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("train", help="two-stage training")
    p.add_argument("--config", default=None)
    p.add_argument("--data", default=None, help="dataset dir from `gen`")
    p.add_argument("--out", required=True, help="weight file (.bin or .json)")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate Recall@1")
    p.add_argument("--weights", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--beta", default="auto", help='float or "auto"')
    p.add_argument("--val", default=None, help="validation set for beta search")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="component ablation table")
    p.add_argument("--config", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--relations", action="store_true",
                   help="add the relation-feature ablation rows")
    p.add_argument("--k-sweep", nargs="*", type=int, default=None,
                   help="K values for the proposal-count sweep")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("ground", help="ground one scene JSON")
    p.add_argument("--weights", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--beta", type=float, default=0.3)
    p.add_argument("--no-sp", action="store_true")
    p.add_argument("--no-vogn", action="store_true")
    p.add_argument("--no-pgn", action="store_true")
    p.add_argument("--no-pp", action="store_true")
    p.set_defaults(fn=cmd_ground)

    p = sub.add_parser("parse-graph", help="build the language scene graph")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_parse_graph)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--op", default="all",
                   help=f"one of {sorted(REGISTRY)} or 'all'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=5)
    p.set_defaults(fn=cmd_gradcheck)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
