"""
Clustering stations and coarsening a graph
==========================================

Build a KNN graph over synthetic station coordinates, split it into
clusters with normalized spectral clustering, and pool node features
onto the clusters.
"""
import numpy as np

from sgcoarse.spatial import (
    coarsen,
    knn_graph,
    laplacian,
    ncut,
    partition_from_labels,
    spectral_clustering,
    sym_normalized_laplacian,
)
from sgcoarse.synthetic import generate_synthetic

##############################################################################
# Stations sit in spatial blobs on the unit square.
ds, truth = generate_synthetic(n_stations=64, n_days=20, seed=7)
coords = ds.stations.coords
print("stations:", coords.shape, "blobs:", len(set(truth["station_blob"])))

##############################################################################
# Each station links to its k nearest neighbours, and the graph is then
# symmetrized, so larger k only ever adds edges.
for k in (5, 20, 50):
    A = knn_graph(coords, k)
    print(f"k={k:<3d} edges={int(A.sum() // 2):5d}  min degree={int(A.sum(1).min())}")

##############################################################################
# The spectrum of the normalized Laplacian shows how separable the graph is.
# Each zero eigenvalue is one connected component. Blobs that sit close
# together share a component.
A = knn_graph(coords, 5)
L = sym_normalized_laplacian(laplacian(A))
print("smallest eigenvalues:", np.abs(np.linalg.eigvalsh(L)[:10]).round(4))

##############################################################################
# Cut the graph into 8 clusters. A small NCut means few edges cross clusters.
S = spectral_clustering(A, 8, seed=0)
labels = S.argmax(1)
print("cluster sizes:", np.bincount(labels, minlength=8))
print("NCut:", round(ncut(A, partition_from_labels(labels)), 4))

##############################################################################
# Pooling sums features within each cluster, so column totals are preserved.
Z = ds.stations.node_features
pooled = coarsen(Z, A / A.sum(1).max(), S)
print("pooled shape:", pooled.z_pool.shape)
print("mass preserved:", np.allclose(pooled.z_pool.sum(0), Z.sum(0)))
