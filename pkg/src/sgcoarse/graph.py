"""Daily travel graphs, adjacency construction and symmetric normalization."""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

N_LANDUSE = 6
N_HOUSEHOLD = 10
N_NODE_FEATURES = N_LANDUSE + N_HOUSEHOLD

UNWEIGHTED = "unweighted"
WEIGHTED = "weighted"
ADJACENCY_MODES = (UNWEIGHTED, WEIGHTED)


@dataclass(frozen=True, eq=False)
class StationSet:
    """Fixed universe of stations shared by every daily graph.

    ``node_features`` holds 6 one-hot land-use columns followed by 10
    household-count columns.
    """

    station_ids: tuple
    coords: np.ndarray
    node_features: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        feats = np.asarray(self.node_features, dtype=float)
        n = len(self.station_ids)
        if len(set(self.station_ids)) != n:
            raise ValueError("station ids must be unique")
        if coords.shape != (n, 2):
            raise ValueError(f"coords must have shape ({n}, 2), got {coords.shape}")
        if feats.shape != (n, N_NODE_FEATURES):
            raise ValueError(
                f"node_features must have shape ({n}, {N_NODE_FEATURES}), got {feats.shape}"
            )
        if not np.all(np.isfinite(coords)) or not np.all(np.isfinite(feats)):
            raise ValueError("coords and node features must be finite")
        landuse = feats[:, :N_LANDUSE]
        if not (np.all((landuse == 0) | (landuse == 1)) and np.all(landuse.sum(axis=1) == 1)):
            raise ValueError("land-use columns must be one-hot per station")
        coords.flags.writeable = False
        feats.flags.writeable = False
        object.__setattr__(self, "station_ids", tuple(self.station_ids))
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "node_features", feats)

    def __len__(self):
        return len(self.station_ids)

    def index(self) -> dict:
        return {sid: i for i, sid in enumerate(self.station_ids)}


@dataclass(frozen=True, eq=False)
class DailyGraph:
    """One day of aggregated travel records over the station universe.

    ``edges`` is an ``(m, 3)`` integer array of ``(i, j, n_ij)`` rows with
    ``i <= j``. Self-records (``i == j``) are kept here and dropped when the
    adjacency matrix is built.
    """

    date: dt.date
    edges: np.ndarray
    graph_features: np.ndarray
    label: int
    n_records: int = field(default=-1)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 3)
        if np.any(edges[:, 0] > edges[:, 1]):
            raise ValueError("edge keys must satisfy i <= j")
        if np.any(edges[:, 2] < 1):
            raise ValueError("edge counts must be positive")
        if np.any(edges[:, :2] < 0):
            raise ValueError("edge endpoints must be non-negative")
        keys = edges[:, 0] * (int(edges[:, 1].max(initial=0)) + 1) + edges[:, 1]
        if len(np.unique(keys)) != len(keys):
            raise ValueError("duplicate (i, j) pair in edge list")
        feats = np.asarray(self.graph_features, dtype=float).reshape(-1)
        if feats.shape != (3,) or not np.all(np.isfinite(feats)):
            raise ValueError("graph_features must be a finite 3-vector")
        if not 0 <= int(self.label) <= 5:
            raise ValueError(f"label {self.label} outside 0..5")
        edges.flags.writeable = False
        feats.flags.writeable = False
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "graph_features", feats)
        object.__setattr__(self, "label", int(self.label))
        if self.n_records < 0:
            object.__setattr__(self, "n_records", int(edges[:, 2].sum()))


def build_adjacency(graph, n_nodes: int, mode: str = UNWEIGHTED) -> np.ndarray:
    """Dense symmetric adjacency of one day; self-records are dropped.

    ``graph`` may be a :class:`DailyGraph` or a bare ``(m, 3)`` edge array.
    """
    if mode not in ADJACENCY_MODES:
        raise ValueError(f"unknown adjacency mode {mode!r}")
    edges = graph.edges if isinstance(graph, DailyGraph) else np.asarray(graph).reshape(-1, 3)
    edges = np.asarray(edges, dtype=np.int64)
    if edges.size and (edges[:, :2].max() >= n_nodes or edges[:, :2].min() < 0):
        raise ValueError(f"edge endpoint out of range for {n_nodes} nodes")
    A = np.zeros((n_nodes, n_nodes))
    off = edges[edges[:, 0] != edges[:, 1]]
    w = off[:, 2].astype(float) if mode == WEIGHTED else 1.0
    A[off[:, 0], off[:, 1]] = w
    A[off[:, 1], off[:, 0]] = w
    return A


def degree_matrix(A: np.ndarray) -> np.ndarray:
    """Degree vector (the diagonal of D): row sums of ``A``."""
    return np.asarray(A, dtype=float).sum(axis=1)


def inv_sqrt_degree(d: np.ndarray) -> np.ndarray:
    # 0 ** -1/2 is taken as 0 so isolated nodes stay isolated
    d = np.asarray(d, dtype=float)
    out = np.zeros_like(d)
    pos = d > 0
    out[pos] = 1.0 / np.sqrt(d[pos])
    return out


def sym_normalize(A: np.ndarray, d: np.ndarray | None = None) -> np.ndarray:
    """Return ``D^-1/2 A D^-1/2`` with zero rows/cols for zero-degree nodes."""
    A = np.asarray(A, dtype=float)
    if d is None:
        d = degree_matrix(A)
    s = inv_sqrt_degree(d)
    return A * np.outer(s, s)  # outer first keeps the result exactly symmetric


def propagation_matrix(A: np.ndarray, renormalized: bool = False) -> np.ndarray:
    """Matrix that multiplies node embeddings inside a GCN layer.

    By default this is ``I + D^-1/2 A D^-1/2``. With ``renormalized=True`` the
    Kipf & Welling form ``D'^-1/2 (A + I) D'^-1/2`` is returned instead.
    """
    A = np.asarray(A, dtype=float)
    eye = np.eye(A.shape[0])
    if renormalized:
        return sym_normalize(A + eye)
    return eye + sym_normalize(A)
