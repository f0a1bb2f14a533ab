"""Command line entry point: ``sgc {generate,train,evaluate,cluster-inspect}``."""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import io
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import data, models
from .spatial import knn_graph, ncut, partition_from_labels, spectral_clustering
from .synthetic import write_synthetic

DATA_FILES = ("stations.csv", "trips.csv", "weather.csv", "holidays.txt")
CACHE_NAME = ".sgc_cache.npz"
METRICS_HEADER = ("epoch", "train_loss", "val_loss", "train_acc", "val_acc")


class CLIError(Exception):
    pass


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _source_hash(directory: Path) -> str:
    h = hashlib.sha256()
    for name in DATA_FILES:
        p = directory / name
        if p.exists():
            h.update(name.encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def load_data(directory) -> data.Dataset:
    """Load a data directory, reusing a cache stamped with the source hash."""
    d = Path(directory)
    if not (d / "stations.csv").exists():
        raise CLIError(f"{d}: no stations.csv")
    source = _source_hash(d)
    cache = d / CACHE_NAME
    stamp = d / (CACHE_NAME + ".source")
    if cache.exists() and stamp.exists() and stamp.read_text().strip() == source:
        try:
            return data.load_cache(cache)
        except (data.DataFormatError, OSError, KeyError):
            pass
    ds = data.load_dir(d)
    try:
        tmp = d / f".cache.tmp{os.getpid()}.npz"
        data.save_cache(ds, tmp)
        os.replace(tmp, cache)
        _atomic_write(stamp, source + "\n")
    except OSError:
        pass
    return ds


def metrics_csv(metrics) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for m in metrics:
        w.writerow([m.epoch, repr(m.train_loss), repr(m.val_loss), repr(m.train_accuracy), repr(m.val_accuracy)])
    return buf.getvalue()


def read_metrics(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [
        models.EpochMetrics(int(r["epoch"]), float(r["train_loss"]), float(r["val_loss"]),
                            float(r["train_acc"]), float(r["val_acc"]))
        for r in rows
    ]


def _now():
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


# -- commands -----------------------------------------------------------------


def cmd_generate(args):
    out = Path(args.out)
    try:
        write_synthetic(out, args.stations, args.days, args.seed, args.signal)
    except OSError as exc:
        raise CLIError(f"cannot write to {out}: {exc}") from None
    print(f"wrote {', '.join(DATA_FILES)} and ground_truth.json to {out}")


def cmd_train(args):
    spec = models.model_spec(args.model, hidden_dim=args.hidden, n_clusters=args.clusters)
    config = models.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        weight_decay=args.weight_decay,
        seed=args.seed,
        renormalized=args.renormalized,
    )
    ds = load_data(args.data)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CLIError(f"cannot create {out}: {exc}") from None

    manifest = {
        "model_id": spec.id,
        "spec": asdict(spec),
        "config": asdict(config),
        "seed": config.seed,
        "data_dir": str(Path(args.data).resolve()),
        "dataset_fingerprint": ds.fingerprint(),
        "started": _now(),
        "finished": None,
        "artifacts": {"metrics": "metrics.csv", "summary": "summary.txt", "params": "params.npz"},
    }
    _atomic_write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")

    metrics_path = out / "metrics.csv"
    done = []

    def on_epoch(m):
        done.append(m)
        _atomic_write(metrics_path, metrics_csv(done))
        if args.verbose:
            print(f"epoch {m.epoch:4d}  train {m.train_loss:.4f}/{m.train_accuracy:.3f}  "
                  f"val {m.val_loss:.4f}/{m.val_accuracy:.3f}", file=sys.stderr)

    result = models.train(spec, ds, config, callback=on_epoch)
    _atomic_write(metrics_path, metrics_csv(result.metrics))

    window = models.summary_window(config.epochs)
    if window is None:
        line = "summary unavailable: no epochs were run"
    else:
        lo, hi, fallback = window
        if fallback:
            print(f"warning: run shorter than 500 epochs; summarizing the final 20% "
                  f"window [{lo},{hi}]", file=sys.stderr)
        s = models.summarize(result.metrics, lo, hi)
        line = f"mean ± std over epochs [{lo},{hi}]: {models.format_summary(s)}"
    _atomic_write(out / "summary.txt", line + "\n")
    print(line)

    tmp = out / f".params.tmp{os.getpid()}.npz"
    np.savez(tmp, train_idx=result.train_idx, val_idx=result.val_idx, **result.model.state_dict())
    os.replace(tmp, out / "params.npz")
    manifest["finished"] = _now()
    _atomic_write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")


def load_run(run_dir):
    run = Path(run_dir)
    try:
        manifest = json.loads((run / "manifest.json").read_text(encoding="utf-8"))
        params = dict(np.load(run / "params.npz"))
    except (OSError, ValueError) as exc:
        raise CLIError(f"{run}: missing or unreadable run artifacts ({exc})") from None
    spec = models.ModelSpec(**manifest["spec"])
    config = models.TrainConfig(**manifest["config"])
    model = models.build_model(spec, renormalized=config.renormalized, dropout=config.dropout)
    model.load_state_dict({k: v for k, v in params.items() if k in model.params})
    return manifest, spec, config, model, params


def cmd_evaluate(args):
    manifest, spec, config, model, params = load_run(args.run)
    ds = load_data(args.data)
    if manifest["dataset_fingerprint"] != ds.fingerprint():
        print("warning: dataset differs from the one used for training", file=sys.stderr)
    graphs = list(ds.graphs)
    if args.split != "all":
        idx = params[f"{args.split}_idx"]
        graphs = [graphs[i] for i in idx if i < len(graphs)]
    cluster_seed = models.derive_seeds(config.seed, 4)[3]
    assignments = models.Assignments(spec, ds.stations, seed=cluster_seed)
    loss, acc = models.evaluate(model, graphs, ds.stations, assignments)
    base = models.majority_baseline([g.label for g in graphs])
    print(f"model {spec.id} on {len(graphs)} graphs ({args.split})")
    print(f"loss              {loss:.4f}")
    print(f"accuracy          {acc:.4f}")
    print(f"majority baseline {base:.4f}")
    print(f"difference        {acc - base:+.4f}")


def cluster_table(coords, k, n_clusters, seed) -> str:
    A = knn_graph(coords, k)
    labels = spectral_clustering(A, n_clusters, seed).argmax(axis=1)
    deg = A.sum(axis=1)
    lines = [f"{'cluster':>7} {'size':>5} {'internal':>9} {'cut':>7} {'volume':>7} {'cut/vol':>8}"]
    for c in range(n_clusters):
        m = labels == c
        internal = A[np.ix_(m, m)].sum() / 2
        cut = A[np.ix_(m, ~m)].sum()
        vol = deg[m].sum()
        ratio = cut / vol if vol > 0 else 0.0
        lines.append(f"{c:>7d} {int(m.sum()):>5d} {internal:>9.1f} {cut:>7.1f} {vol:>7.1f} {ratio:>8.4f}")
    lines.append(f"NCut = {ncut(A, partition_from_labels(labels)):.6f}")
    return "\n".join(lines)


def cmd_cluster_inspect(args):
    stations = data.read_stations(Path(args.data) / "stations.csv")
    try:
        print(cluster_table(stations.coords, args.k, args.clusters, args.seed))
    except ValueError as exc:
        raise CLIError(str(exc)) from None


# -- parser -------------------------------------------------------------------


def _positive(kind):
    def parse(s):
        v = kind(s)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {s}")
        return v
    return parse


def _non_negative(kind):
    def parse(s):
        v = kind(s)
        if v < 0:
            raise argparse.ArgumentTypeError(f"must be non-negative, got {s}")
        return v
    return parse


def build_parser():
    p = argparse.ArgumentParser(prog="sgc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic data directory")
    g.add_argument("--stations", type=int, default=64)
    g.add_argument("--days", type=int, default=400)
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--signal", type=_non_negative(float), default=1.0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train one model variant")
    t.add_argument("--model", type=int, required=True, choices=range(len(models.MODEL_SPECS)), metavar="0..10")
    t.add_argument("--data", required=True)
    t.add_argument("--epochs", type=_non_negative(int), default=500)
    t.add_argument("--batch-size", type=_positive(int), default=32)
    t.add_argument("--lr", type=_non_negative(float), default=0.001)
    t.add_argument("--weight-decay", type=_non_negative(float), default=0.0001)
    t.add_argument("--clusters", type=_positive(int), default=32)
    t.add_argument("--hidden", type=_positive(int), default=64)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--renormalized", action="store_true",
                   help="use D^-1/2 (A + I) D^-1/2 instead of I + D^-1/2 A D^-1/2")
    t.add_argument("--out", required=True)
    t.add_argument("-v", "--verbose", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="evaluate a trained run")
    e.add_argument("--run", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", choices=("all", "train", "val"), default="all")
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("cluster-inspect", help="spectral clusters of a KNN station graph")
    c.add_argument("--data", required=True)
    c.add_argument("--k", type=_positive(int), default=5)
    c.add_argument("--clusters", type=_positive(int), default=32)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_cluster_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (CLIError, ValueError, OSError) as exc:
        print(f"sgc {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
