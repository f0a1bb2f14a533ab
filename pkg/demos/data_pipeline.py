"""
From raw trips to labelled daily graphs
=======================================

Write a synthetic dataset to disk in the documented CSV formats, read it
back through the ingestion pipeline, and look at what comes out.
"""
import tempfile
from pathlib import Path

import numpy as np

from sgcoarse.data import label_weather, load_dir
from sgcoarse.synthetic import write_synthetic

CLASS_NAMES = ["rainy weekday", "sunny weekday", "cloudy weekday",
               "rainy weekend", "sunny weekend", "cloudy weekend"]

##############################################################################
# Four input files plus a ground-truth sidecar.
out = Path(tempfile.mkdtemp()) / "synthetic"
write_synthetic(out, n_stations=32, n_days=120, seed=1)
for f in sorted(out.iterdir()):
    print(f"{f.name:18s} {f.stat().st_size:8d} bytes")
print((out / "weather.csv").read_text().splitlines()[:3])

##############################################################################
# The weather label comes from precipitation first, then cloud cover.
print(label_weather(2.0, 0.1), label_weather(0.0, 0.1), label_weather(0.0, 0.5))

##############################################################################
# Days outside the record-count bounds are dropped. Trips become weighted
# undirected edges, and temperatures are standardized over the kept days.
ds = load_dir(out)
print("graphs:", len(ds), "stations:", len(ds.stations))
for name, count in zip(CLASS_NAMES, ds.class_counts):
    print(f"  {name:15s} {count}")

g = ds.graphs[0]
print(g.date, CLASS_NAMES[g.label], "records:", g.n_records, "edges:", len(g.edges))
print("heaviest edges (i, j, trips):")
print(g.edges[np.argsort(-g.edges[:, 2])[:5]])

temps = np.array([x.graph_features for x in ds.graphs])
print("temperature mean/std after scaling:", temps.mean(0).round(6), temps.std(0).round(6))
