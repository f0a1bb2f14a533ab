"""The eleven model variants, their assembly, training and evaluation."""
from __future__ import annotations

import hashlib
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import nn
from .graph import UNWEIGHTED, WEIGHTED, build_adjacency, sym_normalize
from .spatial import knn_graph, spectral_clustering

NONE = "none"
DAILY = "daily"
KNN = "knn"

N_CLASSES = 6
N_GRAPH_FEATURES = 3


@dataclass(frozen=True)
class ModelSpec:
    id: int
    adjacency_mode: str
    coarsening: str = NONE
    knn_k: int | None = None
    use_graph_features: bool = True
    n_clusters: int = 32
    hidden_dim: int = 64
    n_classes: int = N_CLASSES

    @property
    def coarsened(self) -> bool:
        return self.coarsening != NONE

    def describe(self) -> str:
        s = {NONE: "n/a", DAILY: "unweighted A", KNN: f"KNN (k={self.knn_k})"}[self.coarsening]
        return f"Model {self.id}: A {self.adjacency_mode}, S {s}"


# rows of the model table: (adjacency, coarsening source, k)
_TABLE = [
    (UNWEIGHTED, NONE, None),
    (UNWEIGHTED, NONE, None),
    (WEIGHTED, NONE, None),
    (UNWEIGHTED, DAILY, None),
    (UNWEIGHTED, KNN, 5),
    (UNWEIGHTED, KNN, 50),
    (UNWEIGHTED, KNN, 150),
    (WEIGHTED, DAILY, None),
    (WEIGHTED, KNN, 5),
    (WEIGHTED, KNN, 50),
    (WEIGHTED, KNN, 150),
]
MODEL_SPECS = tuple(
    ModelSpec(i, mode, coars, k, use_graph_features=i != 0)
    for i, (mode, coars, k) in enumerate(_TABLE)
)


def model_spec(model_id: int, hidden_dim: int = 64, n_clusters: int = 32) -> ModelSpec:
    if not 0 <= model_id < len(MODEL_SPECS):
        raise ValueError(f"model id must be 0..{len(MODEL_SPECS) - 1}, got {model_id}")
    return replace(MODEL_SPECS[model_id], hidden_dim=hidden_dim, n_clusters=n_clusters)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 32
    lr: float = 0.001
    weight_decay: float = 0.0001
    train_fraction: float = 0.8
    seed: int = 0
    dropout: float = 0.5
    renormalized: bool = False

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie strictly between 0 and 1")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("lr and weight_decay must be non-negative")


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    val_loss: float
    train_accuracy: float
    val_accuracy: float


METRIC_COLUMNS = ("train_loss", "val_loss", "train_accuracy", "val_accuracy")


def derive_seeds(seed: int, n: int):
    """Independent sub-seeds (init, split, shuffle/dropout, clustering) from one seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


# -- model assembly -----------------------------------------------------------


class Model:
    """Parameter container plus the forward pass for one :class:`ModelSpec`."""

    def __init__(self, spec: ModelSpec, params: dict, renormalized=False, dropout=0.5):
        self.spec = spec
        self.params = params
        self.renormalized = renormalized
        self.dropout = dropout

    def parameters(self):
        return list(self.params.values())

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def state_dict(self) -> dict:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, state: dict):
        for k, p in self.params.items():
            if state[k].shape != p.shape:
                raise ValueError(f"shape mismatch for {k}: {state[k].shape} vs {p.shape}")
            p.data = np.array(state[k], dtype=float)


def layer_shapes(spec: ModelSpec, node_feature_dim: int = 16) -> dict:
    d = spec.hidden_dim
    shapes = {
        "gcn1.W": (d, node_feature_dim),
        "gcn1.b": (d,),
        "gcn2.W": (d, d),
        "gcn2.b": (d,),
    }
    if spec.coarsened:
        shapes.update({"graphconv.W1": (d, d), "graphconv.W2": (d, d), "graphconv.b": (d,)})
    head_in = d + (N_GRAPH_FEATURES if spec.use_graph_features else 0)
    shapes.update(
        {"lin1.W": (d, head_in), "lin1.b": (d,), "lin2.W": (spec.n_classes, d), "lin2.b": (spec.n_classes,)}
    )
    return shapes


def build_model(
    spec: ModelSpec, node_feature_dim: int = 16, seed: int = 0, pool_scale=None, **kwargs
) -> Model:
    """Glorot-uniform weights, zero biases.

    ``pool_scale = (s1, s2)`` divides the GraphConv self and neighbour
    weights; see :func:`pool_scale`.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in layer_shapes(spec, node_feature_dim).items():
        data = nn.glorot_uniform(shape, rng) if len(shape) == 2 else np.zeros(shape)
        params[name] = nn.Parameter(data, name)
    if spec.coarsened and pool_scale is not None:
        s1, s2 = pool_scale
        params["graphconv.W1"].data /= s1
        params["graphconv.W2"].data /= s2
    return Model(spec, params, **kwargs)


def pool_scale(pairs) -> tuple:
    """Typical growth of ``S^T Z`` and ``A_pool S^T Z`` over the node embeddings.

    Cluster embeddings are sums over their members and pooled adjacency rows
    add up neighbouring clusters, so both terms of GraphConv grow with
    cluster size. Returns RMS cluster size and RMS of ``A_pool @ sizes``
    averaged over the given ``(S, A_pool)`` pairs.
    """
    s1, s2 = [], []
    for S, A_pool in pairs:
        sizes = S.sum(axis=0)
        s1.append(np.sqrt(np.mean(sizes**2)))
        s2.append(np.sqrt(np.mean((A_pool @ sizes) ** 2)))
    return max(1.0, float(np.mean(s1))), max(1.0, float(np.mean(s2)))


# -- cluster assignments ------------------------------------------------------

_KNN_CACHE: dict = {}
_KNN_LOCK = threading.Lock()


def knn_assignment(coords, k: int, n_clusters: int, seed: int):
    """``(S, S^T A_knn S)`` for a KNN graph; memoized per coordinates."""
    coords = np.asarray(coords, dtype=float)
    key = (hashlib.sha1(coords.tobytes()).hexdigest(), coords.shape, k, n_clusters, seed)
    with _KNN_LOCK:
        hit = _KNN_CACHE.get(key)
    if hit is None:
        A = knn_graph(coords, k)
        S = spectral_clustering(A, n_clusters, seed)
        hit = (S, S.T @ sym_normalize(A) @ S)
        for a in hit:
            a.flags.writeable = False
        with _KNN_LOCK:
            _KNN_CACHE[key] = hit
    return hit


def daily_assignment(graph, n_nodes: int, n_clusters: int, seed: int):
    A = build_adjacency(graph, n_nodes, UNWEIGHTED)
    S = spectral_clustering(A, n_clusters, seed)
    return S, S.T @ sym_normalize(A) @ S


def n_workers() -> int:
    try:
        return max(1, int(os.environ.get("SGC_THREADS", "1")))
    except ValueError:
        return 1


class Assignments:
    """Cluster assignments for one model spec over a fixed station set.

    KNN variants share one matrix across all days; the daily variants
    cluster each day's unweighted adjacency and memoize by date.
    """

    def __init__(self, spec: ModelSpec, stations, seed: int = 0):
        self.spec = spec
        self.n_nodes = len(stations)
        self.seed = seed
        self._daily: dict = {}
        self._fixed = None
        if spec.coarsening == KNN:
            self._fixed = knn_assignment(stations.coords, spec.knn_k, spec.n_clusters, seed)

    def get(self, graph):
        if self.spec.coarsening == NONE:
            return None
        if self._fixed is not None:
            return self._fixed
        hit = self._daily.get(graph.date)
        if hit is None:
            hit = daily_assignment(graph, self.n_nodes, self.spec.n_clusters, self.seed)
            self._daily[graph.date] = hit
        return hit

    def pool_scale(self, graphs):
        if self.spec.coarsening == NONE:
            return None
        if self._fixed is not None:
            return pool_scale([self._fixed])
        return pool_scale(self.get(g) for g in graphs)

    def precompute(self, graphs):
        if self.spec.coarsening != DAILY:
            return
        todo = [g for g in graphs if g.date not in self._daily]
        fn = lambda g: daily_assignment(g, self.n_nodes, self.spec.n_clusters, self.seed)  # noqa: E731
        with ThreadPoolExecutor(n_workers()) as ex:
            for g, res in zip(todo, ex.map(fn, todo)):
                self._daily[g.date] = res


def prepare_assignment(spec: ModelSpec, stations, graph, seed: int = 0):
    """Cluster assignment matrix ``S`` for ``graph`` or ``None`` without coarsening."""
    if spec.coarsening == NONE:
        return None
    if spec.coarsening == KNN:
        return knn_assignment(stations.coords, spec.knn_k, spec.n_clusters, seed)[0]
    return daily_assignment(graph, len(stations), spec.n_clusters, seed)[0]


# -- forward pass -------------------------------------------------------------


def normalized_adjacency(graph, n_nodes, mode, renormalized=False):
    A = build_adjacency(graph, n_nodes, mode)
    if renormalized:
        return sym_normalize(A + np.eye(n_nodes))
    return sym_normalize(A)


def forward_batch(model: Model, graphs, stations, assignments=None, training=False, rng=None):
    """Logits ``(len(graphs), n_classes)`` for a batch of daily graphs.

    Graphs share the station universe, so the block-diagonal batch is held
    as a ``(batch, N, N)`` stack and every node-level op runs per block.
    """
    if not graphs:
        raise ValueError("empty batch")
    spec, p = model.spec, model.params
    B, N = len(graphs), len(stations)
    A = np.stack([normalized_adjacency(g, N, spec.adjacency_mode, model.renormalized) for g in graphs])
    X = np.broadcast_to(stations.node_features, (B,) + stations.node_features.shape)
    add_self = not model.renormalized

    h = nn.gcn_layer(X, A, p["gcn1.W"], p["gcn1.b"], nn.RELU, add_self)
    h = nn.dropout(h, model.dropout, training, rng)
    h = nn.gcn_layer(h, A, p["gcn2.W"], p["gcn2.b"], nn.IDENTITY, add_self)

    if spec.coarsened:
        if assignments is None:
            assignments = Assignments(spec, stations)
        pairs = [assignments.get(g) for g in graphs]
        S = np.stack([s for s, _ in pairs])
        A_pool = np.stack([a for _, a in pairs])
        h = nn.matmul(np.swapaxes(S, -1, -2), h)
        h = nn.relu(nn.graphconv_layer(h, A_pool, p["graphconv.W1"], p["graphconv.W2"], p["graphconv.b"]))

    n, d = h.shape[-2], h.shape[-1]
    z = nn.global_mean_pool(nn.reshape(h, (B * n, d)), np.repeat(np.arange(B), n), B)
    if spec.use_graph_features:
        z = nn.concat(z, np.stack([g.graph_features for g in graphs]))
    z = nn.relu(nn.linear(z, p["lin1.W"], p["lin1.b"]))
    z = nn.dropout(z, model.dropout, training, rng)
    return nn.linear(z, p["lin2.W"], p["lin2.b"])


def evaluate(model, graphs, stations, assignments=None, batch_size=64):
    """Eval-mode ``(mean cross-entropy, accuracy)`` over ``graphs``."""
    if not graphs:
        raise ValueError("nothing to evaluate")
    total_loss, correct = 0.0, 0
    for i in range(0, len(graphs), batch_size):
        batch = graphs[i : i + batch_size]
        logits = forward_batch(model, batch, stations, assignments, training=False)
        labels = np.array([g.label for g in batch])
        total_loss += nn.softmax_cross_entropy(logits, labels).item() * len(batch)
        correct += int((logits.data.argmax(axis=1) == labels).sum())
    return total_loss / len(graphs), correct / len(graphs)


def predict(model, graphs, stations, assignments=None, batch_size=64) -> np.ndarray:
    out = [
        forward_batch(model, graphs[i : i + batch_size], stations, assignments).data.argmax(axis=1)
        for i in range(0, len(graphs), batch_size)
    ]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


# -- training -----------------------------------------------------------------


def split_indices(n: int, train_fraction: float, seed: int):
    """Seeded shuffle followed by a ``train_fraction`` cut."""
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(train_fraction * n))
    train, val = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    if train.size == 0 or val.size == 0:
        raise ValueError(f"split of {n} graphs leaves an empty train or validation set")
    return train, val


@dataclass
class TrainResult:
    model: Model
    metrics: list
    train_idx: np.ndarray
    val_idx: np.ndarray
    assignments: Assignments


def train(spec: ModelSpec, dataset, config: TrainConfig = TrainConfig(), callback=None) -> TrainResult:
    """Mini-batch Adam training; metrics are recomputed in eval mode each epoch."""
    init_seed, split_seed, shuffle_seed, cluster_seed = derive_seeds(config.seed, 4)
    stations, graphs = dataset.stations, list(dataset.graphs)
    train_idx, val_idx = split_indices(len(graphs), config.train_fraction, split_seed)
    train_g = [graphs[i] for i in train_idx]
    val_g = [graphs[i] for i in val_idx]

    assignments = Assignments(spec, stations, seed=cluster_seed)
    assignments.precompute(graphs)
    model = build_model(
        spec,
        stations.node_features.shape[1],
        seed=init_seed,
        pool_scale=assignments.pool_scale(graphs),
        renormalized=config.renormalized,
        dropout=config.dropout,
    )
    opt = nn.Adam(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    rng = np.random.default_rng(shuffle_seed)

    metrics = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_g))
        for i in range(0, len(order), config.batch_size):
            batch = [train_g[j] for j in order[i : i + config.batch_size]]
            logits = forward_batch(model, batch, stations, assignments, training=True, rng=rng)
            loss = nn.softmax_cross_entropy(logits, [g.label for g in batch])
            opt.zero_grad()
            loss.backward()
            opt.step()
        tl, ta = evaluate(model, train_g, stations, assignments)
        vl, va = evaluate(model, val_g, stations, assignments)
        m = EpochMetrics(epoch, tl, vl, ta, va)
        metrics.append(m)
        if callback is not None:
            callback(m)
    return TrainResult(model, metrics, train_idx, val_idx, assignments)


# -- reporting ----------------------------------------------------------------


def summarize(metrics, from_epoch: int = 400, to_epoch: int = 500) -> dict:
    """Mean and population std of each metric over an inclusive epoch window."""
    window = [m for m in metrics if from_epoch <= m.epoch <= to_epoch]
    covered = {m.epoch for m in window}
    if from_epoch > to_epoch or covered != set(range(from_epoch, to_epoch + 1)):
        raise ValueError(f"metrics do not cover epochs [{from_epoch}, {to_epoch}]")
    out = {}
    for col in METRIC_COLUMNS:
        vals = np.array([getattr(m, col) for m in window])
        out[col] = (float(vals.mean()), float(vals.std()))
    out["n_epochs"] = len(window)
    return out


def summary_window(n_epochs: int, from_epoch: int = 400, to_epoch: int = 500):
    """The reporting window, or the final 20% of epochs when the run is too short."""
    if n_epochs >= to_epoch:
        return from_epoch, to_epoch, False
    if n_epochs < 1:
        return None
    width = max(1, math.ceil(0.2 * n_epochs))
    return n_epochs - width + 1, n_epochs, True


def format_summary(summary: dict) -> str:
    return "  ".join(f"{c}={summary[c][0]:.2f} ± {summary[c][1]:.2f}" for c in METRIC_COLUMNS)


def majority_baseline(labels) -> float:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("no labels")
    return float(np.bincount(labels).max() / labels.size)


def config_dict(spec: ModelSpec, config: TrainConfig) -> dict:
    return {"spec": asdict(spec), "config": asdict(config)}
