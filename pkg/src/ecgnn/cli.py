"""Command line: ``ecgnn {generate,train,eval,bench,export-embeddings}``.

Exit codes: 0 success, 2 usage or input error, 3 numerical collapse during
training, 4 checkpoint/artifact mismatch.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .eigen import power_iteration_ec
from .graph import (GeneratorSpec, GraphFormatError, InvalidSpecError, generate, iter_edge_files,
                    load_edge_list, write_edge_list)
from .metrics import DEFAULT_TOP, evaluate, format_table, save_reports
from .training import (Checkpoint, CollapseError, LossVariant, TrainConfig, embed, infer_scores,
                       model_forward, train_csl, train_cul)

EXIT_OK, EXIT_USAGE, EXIT_COLLAPSE, EXIT_MISMATCH = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, msg: str, code: int = EXIT_USAGE):
        super().__init__(msg)
        self.code = code


# ---------------------------------------------------------------- helpers

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, args, inputs=()) -> None:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    manifest = {
        "command": args.command,
        "flags": flags,
        "seed": flags.get("seed"),
        "tool_version": __version__,
        "inputs": {os.fspath(p): _sha256(p) for p in inputs},
        "timestamp": None if args.deterministic else _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _load_graphs(paths, restrict_lcc: bool, jobs: int = 1):
    files = iter_edge_files(paths)
    if not files:
        raise CliError("no graph files given")
    for f in files:
        if not os.path.isfile(f):
            raise CliError(f"graph file not found: {f}")
    try:
        with ThreadPoolExecutor(max_workers=max(1, jobs)) as ex:
            graphs = list(ex.map(lambda f: load_edge_list(f, restrict_lcc), files))
    except GraphFormatError as exc:
        raise CliError(str(exc)) from exc
    return files, graphs


def _load_checkpoint(path, expect_kind=None) -> Checkpoint:
    if not path or not os.path.isfile(path):
        raise CliError(f"checkpoint not found: {path}")
    try:
        ckpt = Checkpoint.load(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise CliError(f"invalid checkpoint {path}: {exc}", EXIT_MISMATCH) from exc
    if expect_kind and ckpt.encoder.kind.value != expect_kind:
        raise CliError(f"checkpoint encoder is {ckpt.encoder.kind.value}, expected {expect_kind}", EXIT_MISMATCH)
    return ckpt


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) in (None, [], "")]
    if missing:
        raise CliError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _parse_top(text) -> list:
    try:
        vals = [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise CliError(f"bad --top list: {text!r}") from None
    if not vals or any(not 0 < v <= 100 for v in vals):
        raise CliError("--top values must lie in (0, 100]")
    return [int(v) if v.is_integer() else v for v in vals]


# --------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    _require(args, "kind", "nodes", "out")
    os.makedirs(args.out, exist_ok=True)
    written = []
    for i in range(args.count):
        seed = int(np.random.SeedSequence([args.seed, i]).generate_state(1, np.uint64)[0])
        try:
            spec = GeneratorSpec(args.kind, args.nodes, args.m, args.p, seed)
        except InvalidSpecError as exc:
            raise CliError(str(exc)) from exc
        g = generate(spec)
        path = os.path.join(args.out, f"{args.kind}_{args.nodes}_{args.seed}_{i}.edges")
        write_edge_list(g, path, header=[f"kind={args.kind} n={args.nodes} m={args.m} p={args.p} seed={seed}",
                                         f"nodes={g.n} edges={g.num_edges}"])
        written.append(path)
    write_manifest(os.path.join(args.out, "manifest.json"), args)
    print(f"wrote {len(written)} graph(s) to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    _require(args, "graphs", "out")
    files, graphs = _load_graphs(args.graphs, args.restrict_lcc, args.jobs)
    try:
        cfg = TrainConfig(encoder=args.encoder, mode=args.mode, loss=LossVariant(args.loss, args.k),
                          epochs=args.epochs, lr=args.lr, seed=args.seed, shuffle=args.shuffle,
                          grad_through_target=args.grad_through_target)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    log = (lambda e, v: print(f"epoch {e + 1:4d}  loss {v:.6f}", file=sys.stderr)) if args.verbose else None
    try:
        result = (train_cul if cfg.mode.value == "cul" else train_csl)(cfg, graphs, on_epoch=log)
    except CollapseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COLLAPSE
    ckpt = result.checkpoint
    ckpt.metadata["train_graphs"] = [os.path.basename(f) for f in files]
    ckpt.metadata["restrict_lcc"] = args.restrict_lcc
    ckpt.save(args.out)
    loss_csv = args.loss_csv or os.path.splitext(args.out)[0] + ".loss.csv"
    with open(loss_csv, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for i, v in enumerate(result.loss_history, 1):
            w.writerow([i, repr(float(v))])
    norms = [float(np.linalg.norm(model_forward(ckpt, g)[0])) for g in graphs]
    if np.mean(norms) < 0.1:
        print(f"warning: near-zero output norm after training (mean ||Y|| = {np.mean(norms):.3g})",
              file=sys.stderr)
    write_manifest(args.out + ".manifest.json", args, files)
    print(f"final loss {result.loss_history[-1]:.6f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    _require(args, "graphs")
    top = _parse_top(args.top)
    ckpt = None
    if not args.oracle_self_test:
        ckpt = _load_checkpoint(args.checkpoint, args.encoder)
    files, graphs = _load_graphs(args.graphs, args.restrict_lcc, args.jobs)
    ids = [os.path.basename(f) for f in files]

    def one(i):
        return evaluate(ckpt, [graphs[i]], top, [ids[i]], oracle_self_test=args.oracle_self_test,
                        timed=not args.deterministic, restrict_lcc=args.restrict_lcc, engine=args.engine)[0]

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as ex:
        reports = list(ex.map(one, range(len(graphs))))
    if args.out:
        save_reports(reports, args.out)
        inputs = list(files) + ([args.checkpoint] if ckpt is not None else [])
        write_manifest(args.out + ".manifest.json", args, inputs)
    else:
        json.dump([r.to_dict() for r in reports], sys.stdout, indent=2)
        print()
    if args.table:
        print(format_table(reports))
    return EXIT_OK


def cmd_bench(args) -> int:
    _require(args, "checkpoint", "graphs")
    ckpt = _load_checkpoint(args.checkpoint, args.encoder)
    files, graphs = _load_graphs(args.graphs, args.restrict_lcc, args.jobs)
    rows = []
    for f, g in zip(files, graphs):
        for _ in range(args.warmup):
            infer_scores(ckpt, g, engine=args.engine)
            power_iteration_ec(g, args.max_iter, args.tol, mode=args.pi_mode)
        model_t, iter_t = [], []
        for _ in range(args.reps):
            model_t.append(infer_scores(ckpt, g, engine=args.engine)[1])
            t0 = time.perf_counter()
            ec = power_iteration_ec(g, args.max_iter, args.tol, mode=args.pi_mode)
            iter_t.append(time.perf_counter() - t0)
        for method, ts in (("model", model_t), ("iterative", iter_t)):
            rows.append({"graph_id": os.path.basename(f), "n_nodes": g.n, "n_edges": g.num_edges,
                         "method": method, "reps": args.reps, "mean_seconds": float(np.mean(ts)),
                         "std_seconds": float(np.std(ts)), "seconds": [float(t) for t in ts],
                         **({"iterations": ec.iterations_used} if method == "iterative" else {})})
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
            fh.write("\n")
        write_manifest(args.out + ".manifest.json", args, list(files) + [args.checkpoint])
    width = max(len(r["graph_id"]) for r in rows)
    print(f"{'graph':<{width}}  {'|V|':>8}  {'method':<9}  {'mean s':>10}  {'std s':>10}")
    for r in rows:
        print(f"{r['graph_id']:<{width}}  {r['n_nodes']:>8}  {r['method']:<9}  "
              f"{r['mean_seconds']:>10.5f}  {r['std_seconds']:>10.5f}")
    return EXIT_OK


def cmd_export_embeddings(args) -> int:
    _require(args, "checkpoint", "graph", "out")
    ckpt = _load_checkpoint(args.checkpoint, args.encoder)
    files, graphs = _load_graphs([args.graph], args.restrict_lcc)
    z = embed(ckpt, graphs[0])
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(["node"] + [f"z{j}" for j in range(z.shape[1])]) + "\n")
        for i, row in enumerate(z):
            fh.write(str(i) + "," + ",".join(format(float(v), ".17g") for v in row) + "\n")
    write_manifest(args.out + ".manifest.json", args, list(files) + [args.checkpoint])
    print(f"wrote {z.shape[0]} x {z.shape[1]} embeddings to {args.out}")
    return EXIT_OK


# ----------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecgnn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="JSON file whose keys map to flags; explicit flags win")
        sp.add_argument("--deterministic", action="store_true",
                        help="omit wall-clock fields so output files are bit-reproducible")
        sp.add_argument("--jobs", type=int, default=1, help="threads used across independent graphs")
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("generate", help="write synthetic graphs as edge lists")
    common(g)
    g.add_argument("--kind", choices=["sf", "ba", "pl"])
    g.add_argument("--nodes", type=int)
    g.add_argument("--m", type=int, default=4)
    g.add_argument("--p", type=float, default=0.05)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--out", help="output directory")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a CUL or CSL model")
    common(t)
    t.add_argument("--graphs", nargs="+", help="edge-list files or directories")
    t.add_argument("--encoder", choices=["gcn", "sage", "gat"], default="gcn")
    t.add_argument("--mode", choices=["cul", "csl"], default="cul")
    t.add_argument("--loss", choices=["joint", "joint-l1", "obj-only"], default="joint")
    t.add_argument("--k", type=float, default=1.0, help="weight of the norm reward")
    t.add_argument("--epochs", type=int, default=150)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--shuffle", action="store_true", help="seeded shuffle of graph order per epoch")
    t.add_argument("--grad-through-target", action="store_true",
                   help="ablation: differentiate through X = A Y")
    t.add_argument("--restrict-lcc", action="store_true")
    t.add_argument("--out", help="checkpoint path (JSON)")
    t.add_argument("--loss-csv", help="per-epoch loss CSV (default: <out>.loss.csv)")
    t.add_argument("-v", "--verbose", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="top-N%% accuracy against power iteration")
    common(e, seed=False)
    e.add_argument("--checkpoint")
    e.add_argument("--graphs", nargs="+")
    e.add_argument("--top", default=",".join(map(str, DEFAULT_TOP)))
    e.add_argument("--encoder", choices=["gcn", "sage", "gat"], help="fail (exit 4) if checkpoint differs")
    e.add_argument("--engine", choices=["auto", "dense", "pwl"], default="auto")
    e.add_argument("--oracle-self-test", action="store_true", help="score the truth against itself")
    e.add_argument("--restrict-lcc", action="store_true")
    e.add_argument("--table", action="store_true", help="also print an aligned mean±std table")
    e.add_argument("--out", help="report JSON path (default: stdout)")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="time model inference against power iteration")
    common(b, seed=False)
    b.add_argument("--checkpoint")
    b.add_argument("--graphs", nargs="+")
    b.add_argument("--encoder", choices=["gcn", "sage", "gat"])
    b.add_argument("--engine", choices=["auto", "dense", "pwl"], default="auto")
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--warmup", type=int, default=1)
    b.add_argument("--max-iter", type=int, default=1000)
    b.add_argument("--tol", type=float, default=1e-6)
    b.add_argument("--pi-mode", choices=["sequential", "fast"], default="sequential")
    b.add_argument("--restrict-lcc", action="store_true")
    b.add_argument("--out", help="timing report JSON")
    b.set_defaults(func=cmd_bench)

    x = sub.add_parser("export-embeddings", help="write layer-2 embeddings as CSV")
    common(x, seed=False)
    x.add_argument("--checkpoint")
    x.add_argument("--graph")
    x.add_argument("--encoder", choices=["gcn", "sage", "gat"])
    x.add_argument("--restrict-lcc", action="store_true")
    x.add_argument("--out")
    x.set_defaults(func=cmd_export_embeddings)
    return p


def _apply_config(parser, argv):
    """Re-parse with defaults taken from ``--config`` so explicit flags still win."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {args.config}: {exc}") from exc
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}")
    sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if args.jobs < 1:
            raise CliError("--jobs must be >= 1")
        return args.func(args)
    except CliError as exc:
        print(f"ecgnn: error: {exc}", file=sys.stderr)
        return exc.code
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
