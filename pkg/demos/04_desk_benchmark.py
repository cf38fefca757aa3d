"""
Desk-scale benchmark
====================

Plaintext vs encrypted latency and model size on a titanic-sized model.
Full 2048-bit keys take a minute or so; pass --test-mode for a quick look.
"""

import sys

import numpy as np

from ppxgboost.fixtures import model_thresholds, random_query, titanic_like_model
from ppxgboost.service import bench_run

test_mode = "--test-mode" in sys.argv
model = titanic_like_model(7)
rng = np.random.default_rng(7)
ts = model_thresholds(model)
queries = [random_query(model, rng, thresholds=ts) for _ in range(100)]

rep = bench_run(model, queries, 1, dataset="titanic-like", k=128, test_mode=test_mode)
print(rep.table())
