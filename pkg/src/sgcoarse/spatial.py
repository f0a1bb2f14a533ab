"""KNN graphs over station coordinates, spectral clustering and coarsening."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import degree_matrix, inv_sqrt_degree

KMEANS_MAX_ITER = 300
KMEANS_N_INIT = 10
NULL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CoarsenedGraph:
    z_pool: np.ndarray
    a_pool: np.ndarray


def knn_graph(coords, k: int) -> np.ndarray:
    """Binary symmetric KNN adjacency (OR-symmetrized, no self loops).

    Equal distances are resolved in favour of the lower station index.
    """
    X = np.asarray(coords, dtype=float)
    if X.ndim != 2:
        raise ValueError("coords must be a 2-D array")
    n = X.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < |V| = {n}, got {k}")
    if not np.all(np.isfinite(X)):
        raise ValueError("coordinates must be finite")
    diff = X[:, None, :] - X[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    np.fill_diagonal(dist, np.inf)
    # stable sort keeps index order among ties
    nbrs = np.argsort(dist, axis=1, kind="stable")[:, :k]
    A = np.zeros((n, n))
    A[np.repeat(np.arange(n), k), nbrs.ravel()] = 1.0
    return np.maximum(A, A.T)


def knn_edge_set(A: np.ndarray) -> set:
    i, j = np.nonzero(np.triu(A, 1))
    return set(zip(i.tolist(), j.tolist()))


def laplacian(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return np.diag(degree_matrix(A)) - A


def sym_normalized_laplacian(L: np.ndarray, d: np.ndarray | None = None) -> np.ndarray:
    """``D^-1/2 L D^-1/2``; the degree vector defaults to ``diag(L)``."""
    L = np.asarray(L, dtype=float)
    if d is None:
        d = np.diag(L)
    s = inv_sqrt_degree(d)
    return L * np.outer(s, s)


def smallest_eigenpairs(L_norm: np.ndarray, K: int):
    """Eigenpairs ranked 2..K+1 by ascending eigenvalue.

    Returns ``(values, U)`` with ``U`` of shape ``(|V|, K)`` and unit-norm
    columns. Signs and bases of repeated eigenvalues are whatever LAPACK
    produces.
    """
    L_norm = np.asarray(L_norm, dtype=float)
    n = L_norm.shape[0]
    if K < 1 or K + 1 > n:
        raise ValueError(f"need 1 <= K and K + 1 <= |V| ({n}), got K={K}")
    vals, vecs = np.linalg.eigh(L_norm)
    return vals[1 : K + 1], vecs[:, 1 : K + 1]


def spectral_embedding(L_norm: np.ndarray, K: int) -> np.ndarray:
    """Rows of ``U`` used as k-means inputs.

    For a connected graph this is eigenpairs 2..K+1. When eigenvalue 0 is
    repeated (several components) no vector is trivial and the K smallest
    eigenpairs are kept, so component indicators survive.
    """
    L_norm = np.asarray(L_norm, dtype=float)
    n = L_norm.shape[0]
    if K < 1 or K + 1 > n:
        raise ValueError(f"need 1 <= K and K + 1 <= |V| ({n}), got K={K}")
    vals, vecs = np.linalg.eigh(L_norm)
    n_null = int(np.sum(vals < NULL_TOL))
    start = 1 if n_null <= 1 else 0
    return vecs[:, start : start + K]


def _sq_dist(X, C):
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(X, K, rng):
    n = X.shape[0]
    centers = np.empty((K, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = _sq_dist(X, centers[:1])[:, 0]
    for c in range(1, K):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers[c] = X[idx]
        closest = np.minimum(closest, _sq_dist(X, centers[c : c + 1])[:, 0])
    return centers


def kmeans(
    U, K: int, seed: int = 0, max_iter: int = KMEANS_MAX_ITER, n_init: int = KMEANS_N_INIT
) -> np.ndarray:
    """Lloyd's k-means with k-means++ seeding.

    Each of ``n_init`` restarts runs until assignments stop changing; the
    labelling with the lowest inertia wins. A cluster that ends up empty is
    reseeded with the point lying farthest from its current center.
    """
    X = np.asarray(U, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"K must satisfy 1 <= K <= {n}, got {K}")
    rng = np.random.default_rng(seed)
    best, best_inertia = None, np.inf
    for _ in range(n_init):
        labels, centers = _lloyd(X, _kmeans_pp(X, K, rng), K, max_iter)
        inertia = ((X - centers[labels]) ** 2).sum()
        if inertia < best_inertia - 1e-12:
            best, best_inertia = labels, inertia
    return best


def _lloyd(X, centers, K, max_iter):
    labels = None
    for _ in range(max_iter):
        new = np.argmin(_sq_dist(X, centers), axis=1)
        new = _repair_empty(X, new, centers, K)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(K):
            centers[c] = X[labels == c].mean(axis=0)
    return labels, centers


def _repair_empty(X, labels, centers, K):
    labels = labels.copy()
    for c in range(K):
        if np.any(labels == c):
            continue
        own = ((X - centers[labels]) ** 2).sum(axis=1)
        # never strip the last member from another cluster
        counts = np.bincount(labels, minlength=K)
        own[counts[labels] <= 1] = -1.0
        far = int(np.argmax(own))
        labels[far] = c
        centers[c] = X[far]
    return labels


def assignment_matrix(labels, K: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ValueError(f"labels must lie in 0..{K - 1}")
    S = np.zeros((labels.size, K))
    S[np.arange(labels.size), labels] = 1.0
    return S


def ncut(A: np.ndarray, partition) -> float:
    """Normalized cut ``1/2 * sum_k cut(A_k, rest) / vol(A_k)``.

    Clusters with zero volume contribute nothing.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    member = np.full(n, -1)
    for c, nodes in enumerate(partition):
        nodes = np.asarray(list(nodes), dtype=np.int64)
        if nodes.size and (nodes.min() < 0 or nodes.max() >= n):
            raise ValueError("partition refers to nodes outside the graph")
        if np.any(member[nodes] >= 0) or len(np.unique(nodes)) != nodes.size:
            raise ValueError("partition sets overlap")
        member[nodes] = c
    if np.any(member < 0):
        raise ValueError("partition does not cover every node")
    deg = A.sum(axis=1)
    total = 0.0
    for c in range(len(partition)):
        inside = member == c
        vol = deg[inside].sum()
        if vol == 0:
            continue
        cut = A[np.ix_(inside, ~inside)].sum()
        total += cut / vol
    return 0.5 * total


def partition_from_labels(labels) -> list:
    labels = np.asarray(labels)
    return [np.flatnonzero(labels == c) for c in np.unique(labels)]


def spectral_clustering(A: np.ndarray, K: int, seed: int = 0) -> np.ndarray:
    """Hard cluster assignment matrix ``S`` of shape ``(|V|, K)``."""
    A = np.asarray(A, dtype=float)
    L_norm = sym_normalized_laplacian(laplacian(A), degree_matrix(A))
    U = spectral_embedding(L_norm, K)
    return assignment_matrix(kmeans(U, K, seed), K)


def coarsen(Z, A_norm, S) -> CoarsenedGraph:
    """Pool node embeddings and adjacency through ``S``: ``S^T Z``, ``S^T A S``."""
    Z = np.asarray(Z, dtype=float)
    A_norm = np.asarray(A_norm, dtype=float)
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    if Z.shape[0] != n or A_norm.shape != (n, n):
        raise ValueError(
            f"dimension mismatch: Z {Z.shape}, A {A_norm.shape}, S {S.shape}"
        )
    return CoarsenedGraph(S.T @ Z, S.T @ A_norm @ S)
