"""Leakage functions evaluated on plaintext inputs, and the Real experiment."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from ..client import encrypt_query
from ..encoding import DEFAULT_PARAMS, EncodingParams, quantize_feature
from ..fixtures import model_thresholds, random_query
from ..inference import infer
from ..model import Cart, Leaf, PlaintextModel, Split, pad_model
from ..proxy import setup_user
from .profile import (QueryLeakage, SetupLeakage, TreeShape, Transcript, View, child_order,
                      dense_ranks, joint_query_leakage)

Query = Mapping[str, float]


def _shape(t: Cart) -> TreeShape:
    splits = tuple(sorted((s.nodeid, s.yes, s.no, s.missing) for s in t.splits()))
    return TreeShape(t.root, splits, tuple(sorted(n.nodeid for n in t.leaves())))


def _feature_classes(model: PlaintextModel) -> dict[str, int]:
    classes: dict[str, int] = {}
    for t in model.trees:
        for nid in sorted(t.nodes):
            n = t.nodes[nid]
            if isinstance(n, Split):
                classes.setdefault(n.feature, len(classes))
    return classes


def leak_setup(model: PlaintextModel, encoding: EncodingParams = DEFAULT_PARAMS) -> SetupLeakage:
    """Setup leakage of a (padded) model.  Thresholds enter only through
    their order after quantization; leaf values not at all."""
    shapes = tuple(_shape(t) for t in model.trees)
    refs, names, values = [], [], []
    for ti, shape in enumerate(shapes):
        for s in shape.splits:
            node = model.trees[ti].nodes[s[0]]
            refs.append((ti, s[0]))
            names.append(node.feature)
            values.append(quantize_feature(node.threshold, encoding))
    classes = _feature_classes(model)
    return SetupLeakage(len(model.trees), tuple(t.depth for t in model.trees), shapes,
                        model.objective.value, model.num_classes,
                        tuple(classes[n] for n in names), dense_ranks(values),
                        child_order(shapes, refs, values))


def _quantized_path(t: Cart, q: dict[str, int], encoding: EncodingParams) -> tuple[int, ...]:
    nid = t.root
    path = [nid]
    node = t.nodes[nid]
    while not isinstance(node, Leaf):
        v = q.get(node.feature)
        if v is None:
            nid = node.missing
        else:
            nid = node.yes if v < quantize_feature(node.threshold, encoding) else node.no
        path.append(nid)
        node = t.nodes[nid]
    return tuple(path)


def leak_query(model: PlaintextModel, queries: Sequence[Query],
               encoding: EncodingParams = DEFAULT_PARAMS) -> QueryLeakage:
    """Query pattern, present feature classes, paths, and the joint order of
    query values and thresholds for ``queries``.

    Comparisons use quantized values, i.e. exactly what the ciphertext
    comparison decides.  Features unknown to the model are ignored.
    """
    if not queries:
        raise ValueError("need at least one query")
    classes = _feature_classes(model)
    thresholds = [quantize_feature(model.trees[t].nodes[n].threshold, encoding)
                  for t, n in _internal_nodes(model)]
    keys, present, paths, values = [], [], [], []
    for q in queries:
        qq = {k: quantize_feature(v, encoding) for k, v in q.items() if v is not None}
        keys.append(tuple(sorted(qq.items())))
        mine = sorted((classes[k], v) for k, v in qq.items() if k in classes)
        present.append(tuple(c for c, _ in mine))
        values.append([v for _, v in mine])
        paths.append(tuple(_quantized_path(t, qq, encoding) for t in model.trees))
    return joint_query_leakage(keys, present, paths, values, thresholds)


def _internal_nodes(model: PlaintextModel) -> list[tuple[int, int]]:
    return [(ti, nid) for ti, t in enumerate(model.trees) for nid in sorted(t.nodes)
            if isinstance(t.nodes[nid], Split)]


QuerySource = Callable[[int, Transcript, np.random.Generator], Query]


class AdaptiveQuerySource:
    """Client strategy for the experiments: a uniformly random first query,
    afterwards either a repeat of an earlier query (probability
    ``repeat_prob``) or a fresh random one.  Values never sit within
    ``2**-16`` of a threshold."""

    def __init__(self, model: PlaintextModel, *, repeat_prob: float = 0.3, present_prob: float = 0.85):
        self.thresholds = model_thresholds(model)
        self.model = model
        self.repeat_prob = repeat_prob
        self.present_prob = present_prob
        self.history: list[dict[str, float]] = []

    def __call__(self, i: int, transcript: Transcript, rng: np.random.Generator) -> Query:
        if self.history and rng.random() < self.repeat_prob:
            q = self.history[int(rng.integers(len(self.history)))]
        else:
            q = random_query(self.model, rng, present_prob=self.present_prob, thresholds=self.thresholds)
        self.history.append(q)
        return q


@dataclass
class RealRun:
    view: View
    setup_leakage: SetupLeakage
    query_leakage: QueryLeakage
    queries: list[Query]
    padded_model: PlaintextModel


def run_real(model: PlaintextModel, k: int = 128, alpha: float = 0.5, m: int = 4,
             query_gen: QuerySource | None = None, *, test_mode: bool = True,
             rng: np.random.Generator | None = None) -> RealRun:
    """Setup followed by ``m`` query rounds between the real client and server.

    Returns the observable view and the leakage the inputs determine.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    rng = rng or np.random.default_rng()
    padded = pad_model(replace(model, alpha=alpha), rng=rng)
    encml, bundle = setup_user(padded, k, "real-user", pad=False, test_mode=test_mode)
    query_gen = query_gen or AdaptiveQuerySource(padded)
    transcript: list = []
    queries = []
    for i in range(m):
        q = query_gen(i, tuple(transcript), rng)
        queries.append(q)
        eq = encrypt_query(bundle, q)
        transcript.append((eq, infer(encml, eq)))
    view = View(encml, tuple(transcript))
    return RealRun(view, leak_setup(padded, bundle.encoding),
                   leak_query(padded, queries, bundle.encoding), queries, padded)
