"""Seeded generators for models and queries used by tests, benchmarks and
the leakage experiments."""

from __future__ import annotations

import bisect
from typing import Sequence

import numpy as np

from .artifacts import Objective
from .model import Cart, Leaf, Node, PlaintextModel, Split

# (name, low, high, decimals); discrete features use .5 cut points
TITANIC_FEATURES = [
    ("Pclass", 1.0, 3.0, "half"),
    ("Sex", 0.0, 1.0, "half"),
    ("Age", 0.42, 80.0, 2),
    ("SibSp", 0.0, 8.0, "half"),
    ("Parch", 0.0, 6.0, "half"),
    ("Fare", 0.0, 512.33, 4),
    ("Embarked_C", 0.0, 1.0, "half"),
    ("Embarked_Q", 0.0, 1.0, "half"),
    ("Embarked_S", 0.0, 1.0, "half"),
]


def _draw_threshold(rng, lo, hi, decimals):
    if decimals == "half":
        cuts = np.arange(lo, hi) + 0.5
        return float(cuts[rng.integers(len(cuts))])
    return round(float(rng.uniform(lo, hi)), decimals)


def random_tree(rng: np.random.Generator, max_depth: int,
                features: Sequence[tuple[str, float, float, object]], *,
                split_prob: float = 0.85, leaf_scale: float = 0.3) -> Cart:
    """Random CART numbered breadth-first like a training-library dump."""
    specs = []  # (depth, is_split) in BFS order
    frontier = [0]
    while frontier:
        nxt = []
        for d in frontier:
            is_split = d < max_depth and (d == 0 and max_depth > 0 or rng.random() < split_prob)
            specs.append((d, is_split))
            if is_split:
                nxt += [d + 1, d + 1]
        frontier = nxt
    nodes: dict[int, Node] = {}
    child = 1
    for nid, (d, is_split) in enumerate(specs):
        if is_split:
            name, lo, hi, dec = features[int(rng.integers(len(features)))]
            yes, no = child, child + 1
            child += 2
            missing = yes if rng.random() < 0.5 else no
            nodes[nid] = Split(nid, name, _draw_threshold(rng, lo, hi, dec), yes, no, missing)
        else:
            nodes[nid] = Leaf(nid, round(float(rng.normal(0.0, leaf_scale)), 6))
    return Cart(0, nodes)


def random_model(seed: int | np.random.Generator, *, n_trees: int | None = None,
                 max_depth: int | None = None, objective: Objective | str = Objective.BINARY,
                 num_classes: int = 3, n_features: int = 6) -> PlaintextModel:
    """Random model over features ``f0..f{n-1}`` with thresholds in [-10, 10]."""
    rng = np.random.default_rng(seed)
    objective = Objective(objective)
    max_depth = int(rng.integers(1, 7)) if max_depth is None else max_depth
    features = [(f"f{i}", -10.0, 10.0, 3) for i in range(n_features)]
    if objective is Objective.SOFTMAX:
        rounds = int(rng.integers(1, 7)) if n_trees is None else max(1, n_trees // num_classes)
        n_trees = rounds * num_classes
    else:
        num_classes = 1
        n_trees = int(rng.integers(1, 21)) if n_trees is None else n_trees
    trees = [random_tree(rng, int(rng.integers(0, max_depth + 1)) if i else max_depth, features)
             for i in range(n_trees)]
    return PlaintextModel(trees, objective, num_classes, alpha=0.5,
                          base_score=round(float(rng.normal(0, 0.1)), 3))


def titanic_like_model(seed: int = 7, n_trees: int = 50, max_depth: int = 6) -> PlaintextModel:
    """A binary model of the size and feature set typical for Titanic survival."""
    rng = np.random.default_rng(seed)
    trees = [random_tree(rng, max_depth, TITANIC_FEATURES, split_prob=0.75, leaf_scale=0.15)
             for _ in range(n_trees)]
    return PlaintextModel(trees, Objective.BINARY, 1, alpha=0.5, base_score=0.0)


def model_thresholds(model: PlaintextModel) -> dict[str, list[float]]:
    out: dict[str, set[float]] = {}
    for t in model.trees:
        for s in t.splits():
            out.setdefault(s.feature, set()).add(s.threshold)
    return {k: sorted(v) for k, v in out.items()}


def near_threshold(value: float, thresholds: list[float], margin: float) -> bool:
    i = bisect.bisect_left(thresholds, value)
    return any(abs(value - thresholds[j]) < margin for j in (i - 1, i) if 0 <= j < len(thresholds))


def random_query(model: PlaintextModel, rng: np.random.Generator, *, present_prob: float = 1.0,
                 margin: float = 2.0 ** -16, thresholds: dict[str, list[float]] | None = None,
                 extra_features: Sequence[str] = ()) -> dict[str, float]:
    """Query over the model's features, each present with ``present_prob``,
    with no value within ``margin`` of a threshold of its feature."""
    thresholds = model_thresholds(model) if thresholds is None else thresholds
    q = {}
    for name in sorted(thresholds) + list(extra_features):
        if rng.random() >= present_prob:
            continue
        ts = thresholds.get(name, [0.0])
        lo, hi = ts[0], ts[-1]
        pad = max((hi - lo) * 0.25, 1.0)
        while True:
            v = round(float(rng.uniform(lo - pad, hi + pad)), 6)
            if not near_threshold(v, ts, margin):
                break
        q[name] = v
    return q
