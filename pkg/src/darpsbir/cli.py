"""Command-line driver for the full pipeline.

Subcommands: gen-data, train-embedder, train-agent, eval, grad-check, serve.
Exit codes: 0 ok, 1 I/O, 2 config, 3 verification failure. Every subcommand
honors --seed (fallback: the DARP_SEED environment variable, then 0) and is
fully deterministic for a fixed seed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_VERIFY = 3

GRAD_TOLERANCE = 1e-4


def _default_seed() -> int:
    return int(os.environ.get("DARP_SEED", "0"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="darpsbir")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic sketch/image dataset")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--noise-prob", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--stages", type=int, default=17)
    p.add_argument("--format", choices=("png", "pgm"), default="png")
    p.add_argument("--augment", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-embedder", help="train the triplet embedder, freeze the table")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--margin", type=float, default=0.3)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-agent", help="train the attention agent")
    p.add_argument("--data", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="dotted-key config override")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--resume", default=None)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="greedy per-stage retrieval evaluation")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=("train", "test", "all"))
    p.add_argument("--out", required=True)

    p = sub.add_parser("grad-check", help="finite-difference verification of all gradients")
    p.add_argument("--component", default="all")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--inject-bug", action="store_true", help=argparse.SUPPRESS)

    p = sub.add_parser("serve", help="run the live retrieval HTTP service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--top-q", type=int, default=10)
    p.add_argument("--ui", default=None, help="static UI directory to mount at /ui")
    return parser


# ---------------------------------------------------------------------------
# Handlers.
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    from .dataset import ConfigError, generate_dataset

    seed = args.seed if args.seed is not None else _default_seed()
    try:
        ds = generate_dataset(args.classes, args.per_class, seed, args.noise_prob,
                              args.out, stages=args.stages, fmt=args.format,
                              augment=args.augment)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"{len(ds.items)} items")
    return EXIT_OK


def cmd_train_embedder(args) -> int:
    from .checkpoint import write_checkpoint
    from .dataset import load_manifest
    from .embedder import train_embedder

    seed = args.seed if args.seed is not None else _default_seed()
    try:
        ds = load_manifest(args.data)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.epochs < 0:
        print("error: epochs must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    params, table, trace = train_embedder(ds, args.epochs, args.margin, seed,
                                          lr=args.lr, batch_size=args.batch_size)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tensors = dict(params.values_dict())
    tensors["embeddings"] = table.matrix
    meta = {"kind": "embedder", "margin": args.margin, "epochs": args.epochs,
            "seed": seed, "final_loss": trace[-1] if trace else None}
    ckpt = out / "embedder.ckpt"
    write_checkpoint(ckpt, tensors, meta)
    with open(str(ckpt) + ".ids.json", "w", encoding="utf-8") as fh:
        json.dump({"ids": table.ids}, fh, separators=(",", ":"))
    print(f"trained embedder for {args.epochs} epochs; table of {len(table)} embeddings")
    return EXIT_OK


def _load_embedding_table(path):
    from .checkpoint import read_checkpoint
    from .embedder import EmbeddingTable

    tensors, meta = read_checkpoint(path)
    with open(str(path) + ".ids.json", "r", encoding="utf-8") as fh:
        ids = json.load(fh)["ids"]
    return EmbeddingTable(ids, tensors["embeddings"]), tensors, meta


def cmd_train_agent(args) -> int:
    from .dataset import ConfigError, load_manifest
    from .trainer import (apply_override, load_agent_checkpoint, train,
                          train_config_from_dict)

    try:
        ds = load_manifest(args.data)
        table, _, _ = _load_embedding_table(args.embeddings)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        doc = {}
        if args.config:
            with open(args.config, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        for override in args.overrides:
            apply_override(doc, override)
        if args.seed is not None:
            doc["seed"] = args.seed
        elif "seed" not in doc:
            doc["seed"] = _default_seed()
        cfg = train_config_from_dict(doc)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, json.JSONDecodeError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    resume = None
    if args.resume:
        resume, _, _ = load_agent_checkpoint(args.resume)

    log_fn = None
    if not args.quiet:
        def log_fn(row):
            cycle, mean_r, sup, auir, acc5, sigma, eta = row
            print(f"cycle {cycle:4d}  reward {mean_r:.3f}  sup {sup:8.2f}  "
                  f"val_auir {auir:6.2f}  val_acc5 {acc5:.3f}  sigma {sigma:.3f}")

    train(ds, table, cfg, args.out, resume=resume, log_fn=log_fn)
    print(f"wrote {Path(args.out) / 'agent.ckpt'} and metrics.csv")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .dataset import load_manifest
    from .evaluation import evaluate_items
    from .metrics import emit_csv, emit_summary_json
    from .trainer import load_agent_checkpoint, train_config_from_dict

    try:
        ds = load_manifest(args.data)
        state, table, meta = load_agent_checkpoint(args.checkpoint)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    items = ds.split_items(args.split)
    if not items:
        print(f"error: split {args.split!r} is empty", file=sys.stderr)
        return EXIT_IO
    cfg = train_config_from_dict((meta or {}).get("config") or {})
    gcfg = cfg.glimpse_config()
    dilate_radius = cfg.dilate_radius
    gallery = table.subset([it.id for it in items])
    summary = evaluate_items(ds, items, gallery, state.params, state.h0,
                             gcfg, dilate_radius,
                             normalize_action=cfg.normalize_action)
    results = summary.pop("results")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emit_csv(results, out / "results.csv")
    emit_summary_json(results, out / "summary.json")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_grad_check(args) -> int:
    from .gradsuite import COMPONENTS, run_component

    names = COMPONENTS if args.component == "all" else (args.component,)
    for name in names:
        if name not in COMPONENTS:
            print(f"error: unknown component {name!r}", file=sys.stderr)
            return EXIT_CONFIG
    failures = []
    for name in names:
        err, entry = run_component(name, seeds=range(args.seeds))
        if args.inject_bug and name == names[0]:
            err = max(err, 0.10)
            entry = entry or "injected"
        status = "ok" if err <= GRAD_TOLERANCE else "FAIL"
        print(f"{name:10s} max_rel_err {err:.3e}  worst {entry or '-'}  [{status}]")
        if err > GRAD_TOLERANCE:
            failures.append((name, entry, err))
    if failures:
        name, entry, err = failures[0]
        print(f"error: gradient check failed for {name} at {entry} "
              f"(rel err {err:.3e})", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_serve(args) -> int:
    import socket

    import uvicorn

    from .dataset import load_manifest
    from .service import build_app
    from .trainer import load_agent_checkpoint

    try:
        ds = load_manifest(args.data)
        state, table, meta = load_agent_checkpoint(args.checkpoint)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    app = build_app(ds, state, table, top_q=args.top_q, ui_dir=args.ui)
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((args.host, args.port))
    except OSError as exc:
        print(f"error: cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        sock.close()
        return EXIT_IO
    port = sock.getsockname()[1]
    print(f"serving on http://{args.host}:{port}", flush=True)
    config = uvicorn.Config(app, log_level="warning")
    server = uvicorn.Server(config)
    server.run(sockets=[sock])
    return EXIT_OK


_HANDLERS = {
    "gen-data": cmd_gen_data,
    "train-embedder": cmd_train_embedder,
    "train-agent": cmd_train_agent,
    "eval": cmd_eval,
    "grad-check": cmd_grad_check,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return _HANDLERS[args.command](args)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
