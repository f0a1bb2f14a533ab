"""Graph classification of daily bike-sharing graphs with spatial graph coarsening."""
from .data import Dataset, load_dataset, load_dir
from .graph import DailyGraph, StationSet, build_adjacency, degree_matrix, sym_normalize
from .models import MODEL_SPECS, ModelSpec, TrainConfig, build_model, model_spec, train
from .spatial import coarsen, knn_graph, ncut, spectral_clustering
from .synthetic import generate_synthetic, write_synthetic

__version__ = "0.1.0"

__all__ = [
    "MODEL_SPECS",
    "DailyGraph",
    "Dataset",
    "ModelSpec",
    "StationSet",
    "TrainConfig",
    "build_adjacency",
    "build_model",
    "coarsen",
    "degree_matrix",
    "generate_synthetic",
    "knn_graph",
    "load_dataset",
    "load_dir",
    "model_spec",
    "ncut",
    "spectral_clustering",
    "sym_normalize",
    "train",
    "write_synthetic",
]
