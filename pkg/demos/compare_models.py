"""
Comparing the model zoo
=======================

Train three of the eleven architectures on the same synthetic data:
no temperatures (Model 0), temperatures without pooling (Model 1), and
KNN spectral pooling with k=5 (Model 4).

This takes a couple of minutes on one core. Pass a smaller epoch count
as the first argument for a quicker look.
"""
import sys

from sgcoarse.models import (
    TrainConfig,
    format_summary,
    majority_baseline,
    model_spec,
    summarize,
    summary_window,
    train,
)
from sgcoarse.synthetic import generate_synthetic

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 200

##############################################################################
# 400 days over 64 stations. At signal_strength=1 the weather and day type
# leave a learnable imprint on trip patterns and temperatures.
ds, _ = generate_synthetic(64, 400, seed=7, signal_strength=1.0)
print("class counts:", ds.class_counts.tolist())

config = TrainConfig(epochs=epochs, seed=0)
lo, hi, _ = summary_window(epochs)

##############################################################################
# Every model sees the same train/validation split.
for mid in (0, 1, 4):
    spec = model_spec(mid)
    print(f"\nModel {mid}: {spec.adjacency_mode} adjacency, coarsening={spec.coarsening}, k={spec.knn_k}")
    res = train(spec, ds, config)
    base = majority_baseline(ds.labels[res.val_idx])
    print(f"  epochs [{lo},{hi}]: {format_summary(summarize(res.metrics, lo, hi))}")
    print(f"  validation majority baseline {base:.3f}")
