"""Plaintext boosted-tree models: dump parsing, evaluation, padding.

The evaluator here is the reference every encrypted computation is checked
against.  The dump format is the JSON tree dump of the usual gradient
boosting libraries: an array of trees, each a nested object whose internal
nodes carry ``split``, ``split_condition``, ``yes``, ``no``, ``missing`` and
``children``, and whose leaves carry ``leaf``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from .artifacts import Objective
from .errors import ContractError, ModelParseError, ParameterError

Query = Mapping[str, float]


@dataclass(frozen=True)
class Split:
    nodeid: int
    feature: str
    threshold: float
    yes: int
    no: int
    missing: int


@dataclass(frozen=True)
class Leaf:
    nodeid: int
    value: float


Node = Union[Split, Leaf]


@dataclass
class Cart:
    root: int
    nodes: dict[int, Node]
    depth: int = field(init=False)

    def __post_init__(self):
        self.depth = _check_tree(self.root, self.nodes)

    def leaves(self) -> list[Leaf]:
        return [n for n in self.nodes.values() if isinstance(n, Leaf)]

    def splits(self) -> list[Split]:
        return [n for n in self.nodes.values() if isinstance(n, Split)]

    def is_complete(self, depth: int | None = None) -> bool:
        depth = self.depth if depth is None else depth
        return all(d == depth for d in _leaf_depths(self.root, self.nodes))


def _leaf_depths(root, nodes):
    stack = [(root, 0)]
    while stack:
        nid, d = stack.pop()
        node = nodes[nid]
        if isinstance(node, Leaf):
            yield d
        else:
            stack.append((node.yes, d + 1))
            stack.append((node.no, d + 1))


def _check_tree(root: int, nodes: Mapping[int, Node]) -> int:
    """Verify that ``nodes`` is a binary tree rooted at ``root``; return depth."""
    if root not in nodes:
        raise ModelParseError(f"root id {root} not in node table")
    seen = set()
    depth = 0
    stack = [(root, 0)]
    while stack:
        nid, d = stack.pop()
        if nid in seen:
            raise ModelParseError(f"node {nid} reached twice (cycle or shared child)")
        seen.add(nid)
        node = nodes[nid]
        if node.nodeid != nid:
            raise ModelParseError(f"node table key {nid} holds node {node.nodeid}")
        if isinstance(node, Leaf):
            depth = max(depth, d)
            continue
        if node.yes == node.no:
            raise ModelParseError(f"node {nid}: yes and no children coincide")
        if node.missing not in (node.yes, node.no):
            raise ModelParseError(f"node {nid}: missing child must be the yes or no child")
        for child in (node.yes, node.no):
            if child not in nodes:
                raise ModelParseError(f"node {nid}: child id {child} does not resolve")
            stack.append((child, d + 1))
    if len(seen) != len(nodes):
        raise ModelParseError(f"unreachable nodes: {sorted(set(nodes) - seen)}")
    return depth


@dataclass
class PlaintextModel:
    trees: list[Cart]
    objective: Objective = Objective.BINARY
    num_classes: int = 1
    alpha: float = 0.5
    base_score: float = 0.0

    def __post_init__(self):
        self.objective = Objective(self.objective)
        if not self.trees:
            raise ContractError("a model needs at least one tree")
        if self.objective is Objective.SOFTMAX:
            if self.num_classes < 2:
                raise ContractError("softmax needs num_classes >= 2")
            if len(self.trees) % self.num_classes:
                raise ContractError(
                    f"{len(self.trees)} trees cannot be split evenly over {self.num_classes} classes")
        else:
            self.num_classes = 1

    @property
    def max_depth(self) -> int:
        return max(t.depth for t in self.trees)

    def feature_names(self) -> list[str]:
        seen: dict[str, None] = {}
        for t in self.trees:
            for s in sorted(t.splits(), key=lambda s: s.nodeid):
                seen.setdefault(s.feature)
        return list(seen)

    def feature_ranges(self) -> dict[str, tuple[float, float]]:
        ranges: dict[str, tuple[float, float]] = {}
        for t in self.trees:
            for s in t.splits():
                lo, hi = ranges.get(s.feature, (s.threshold, s.threshold))
                ranges[s.feature] = (min(lo, s.threshold), max(hi, s.threshold))
        return ranges


# ---------------------------------------------------------------- parsing

def _parse_node(obj, nodes: dict, path: str) -> int:
    if not isinstance(obj, dict):
        raise ModelParseError(f"{path}: expected an object, got {type(obj).__name__}")
    try:
        nid = int(obj["nodeid"])
    except (KeyError, TypeError, ValueError):
        raise ModelParseError(f"{path}: missing or invalid 'nodeid'") from None
    path = f"{path}/node {nid}"
    if nid in nodes:
        raise ModelParseError(f"{path}: duplicate node id")
    if "leaf" in obj:
        value = _finite(obj["leaf"], path, "leaf")
        nodes[nid] = Leaf(nid, value)
        return nid
    for key in ("split", "split_condition", "yes", "no", "missing", "children"):
        if key not in obj:
            raise ModelParseError(f"{path}: missing field '{key}'")
    children = obj["children"]
    if not isinstance(children, list) or len(children) != 2:
        raise ModelParseError(f"{path}: internal node needs exactly two children")
    feature = obj["split"]
    if not isinstance(feature, str) or not feature:
        raise ModelParseError(f"{path}: 'split' must be a non-empty feature name")
    try:
        yes, no, missing = int(obj["yes"]), int(obj["no"]), int(obj["missing"])
    except (TypeError, ValueError):
        raise ModelParseError(f"{path}: child ids must be integers") from None
    child_ids = [_parse_node(c, nodes, path) for c in children]
    if yes not in child_ids:
        raise ModelParseError(f"{path}: yes id {yes} not among children {child_ids}")
    if no not in child_ids or no == yes:
        raise ModelParseError(f"{path}: no id {no} not among children {child_ids}")
    if missing not in (yes, no):
        raise ModelParseError(f"{path}: missing id {missing} is neither yes nor no")
    threshold = _finite(obj["split_condition"], path, "split_condition")
    nodes[nid] = Split(nid, feature, threshold, yes, no, missing)
    return nid


def _finite(v, path, name) -> float:
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise ModelParseError(f"{path}: '{name}' is not a number") from None
    if not math.isfinite(x):
        raise ModelParseError(f"{path}: '{name}' is not finite")
    return x


def parse_tree(obj, path: str = "tree 0") -> Cart:
    nodes: dict[int, Node] = {}
    root = _parse_node(obj, nodes, path)
    try:
        return Cart(root, nodes)
    except ModelParseError as e:
        raise ModelParseError(f"{path}: {e}") from None


def parse_model(dump, *, objective: str | Objective | None = None, num_classes: int | None = None,
                alpha: float | None = None, base_score: float | None = None) -> PlaintextModel:
    """Parse a JSON tree dump (bytes, str or already-decoded list).

    The dump may also be an object ``{"trees": [...], "objective": ...,
    "num_class": ..., "alpha": ..., "base_score": ...}``; keyword arguments
    override the embedded metadata.
    """
    if isinstance(dump, (bytes, bytearray, str)):
        try:
            dump = json.loads(dump)
        except json.JSONDecodeError as e:
            raise ModelParseError(f"malformed JSON: {e}") from None
    meta = {}
    if isinstance(dump, dict):
        meta = dump
        dump = dump.get("trees")
    if not isinstance(dump, list) or not dump:
        raise ModelParseError("dump must be a non-empty array of trees")
    trees = [parse_tree(t, f"tree {i}") for i, t in enumerate(dump)]
    objective = objective or meta.get("objective", Objective.BINARY)
    if num_classes is None:
        num_classes = int(meta.get("num_class", 1))
    alpha = float(meta.get("alpha", 0.5)) if alpha is None else alpha
    base_score = float(meta.get("base_score", 0.0)) if base_score is None else base_score
    try:
        return PlaintextModel(trees, Objective(objective), num_classes, alpha, base_score)
    except ValueError as e:
        raise ModelParseError(str(e)) from None


def _dump_node(tree: Cart, nid: int, depth: int) -> dict:
    node = tree.nodes[nid]
    if isinstance(node, Leaf):
        return {"nodeid": nid, "leaf": node.value}
    return {
        "nodeid": nid, "depth": depth, "split": node.feature,
        "split_condition": node.threshold, "yes": node.yes, "no": node.no,
        "missing": node.missing,
        "children": [_dump_node(tree, node.yes, depth + 1), _dump_node(tree, node.no, depth + 1)],
    }


def serialize_model(model: PlaintextModel, *, with_metadata: bool = False) -> bytes:
    """Canonical JSON dump (sorted keys, no whitespace)."""
    trees = [_dump_node(t, t.root, 0) for t in model.trees]
    obj = trees
    if with_metadata:
        obj = {"trees": trees, "objective": model.objective.value, "num_class": model.num_classes,
               "alpha": model.alpha, "base_score": model.base_score}
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


# ------------------------------------------------------------- evaluation

def evaluate_tree(tree: Cart, q: Query) -> tuple[float, list[int]]:
    """Score and root-to-leaf path of ``q``; ``yes`` is taken iff value < threshold."""
    nid = tree.root
    path = [nid]
    node = tree.nodes[nid]
    while isinstance(node, Split):
        v = q.get(node.feature)
        if v is None:
            nid = node.missing
        else:
            nid = node.yes if v < node.threshold else node.no
        path.append(nid)
        node = tree.nodes[nid]
    return node.value, path


def evaluate_model(model: PlaintextModel, q: Query) -> list[float]:
    if model.objective is Objective.SOFTMAX:
        sums = [model.base_score] * model.num_classes
        for i, t in enumerate(model.trees):
            sums[i % model.num_classes] += evaluate_tree(t, q)[0]
        return sums
    return [model.base_score + sum(evaluate_tree(t, q)[0] for t in model.trees)]


@dataclass(frozen=True)
class Prediction:
    label: int
    probabilities: tuple[float, ...]


def _sigmoid(y: float) -> float:
    if y >= 0:
        return 1.0 / (1.0 + math.exp(-y))
    e = math.exp(y)
    return e / (1.0 + e)


def interpret_scores(scores: Sequence[float], objective: Objective | str, num_classes: int,
                     alpha: float) -> Prediction:
    """Binary: ``p = sigmoid(y)`` and label ``p > alpha``.  Softmax: class
    probabilities and argmax, ties going to the lowest class index."""
    objective = Objective(objective)
    expected = num_classes if objective is Objective.SOFTMAX else 1
    if len(scores) != expected:
        raise ContractError(f"expected {expected} scores for {objective.value}, got {len(scores)}")
    if objective is Objective.BINARY:
        p = _sigmoid(scores[0])
        return Prediction(int(p > alpha), (p,))
    top = max(scores)
    exps = [math.exp(s - top) for s in scores]
    total = sum(exps)
    probs = tuple(e / total for e in exps)
    return Prediction(int(np.argmax(scores)), probs)


def interpret(scores: Sequence[float], model: PlaintextModel) -> Prediction:
    return interpret_scores(scores, model.objective, model.num_classes, model.alpha)


# ---------------------------------------------------------------- padding

def pad_to_complete(tree: Cart, target_depth: int, *,
                    features: Mapping[str, tuple[float, float]] | None = None,
                    rng: np.random.Generator | None = None) -> Cart:
    """Extend every shallow leaf with dummy splits until all leaves sit at
    ``target_depth``.  Both children of a dummy split carry the original leaf
    value, so scores are unchanged for every query.

    A tree that is already complete at ``target_depth`` is returned as is;
    otherwise nodes are renumbered in heap order (children of ``h`` are
    ``2h+1`` (yes) and ``2h+2`` (no)).  Dummy splits test a feature drawn
    from ``features`` (name -> threshold range) with a threshold uniform in
    that range, and a random missing direction.
    """
    if target_depth < tree.depth:
        raise ParameterError(f"target depth {target_depth} below tree depth {tree.depth}")
    if tree.is_complete(target_depth):
        return tree
    if features is None:
        features = PlaintextModel([tree]).feature_ranges()
    if not features:
        raise ParameterError("no feature available for dummy splits")
    rng = rng or np.random.default_rng()
    names = sorted(features)
    nodes: dict[int, Node] = {}

    def build(orig: int, h: int, d: int) -> None:
        node = tree.nodes[orig]
        yes_h, no_h = 2 * h + 1, 2 * h + 2
        if isinstance(node, Split):
            missing_h = yes_h if node.missing == node.yes else no_h
            nodes[h] = Split(h, node.feature, node.threshold, yes_h, no_h, missing_h)
            build(node.yes, yes_h, d + 1)
            build(node.no, no_h, d + 1)
        elif d < target_depth:
            name = names[int(rng.integers(len(names)))]
            lo, hi = features[name]
            thr = float(lo if hi <= lo else rng.uniform(lo, hi))
            missing_h = yes_h if rng.integers(2) == 0 else no_h
            nodes[h] = Split(h, name, thr, yes_h, no_h, missing_h)
            build(orig, yes_h, d + 1)
            build(orig, no_h, d + 1)
        else:
            nodes[h] = Leaf(h, node.value)

    build(tree.root, 0, 0)
    return Cart(0, nodes)


def pad_model(model: PlaintextModel, *, target_depth: int | None = None,
              rng: np.random.Generator | None = None) -> PlaintextModel:
    """Pad every tree to ``target_depth`` (default: the deepest tree)."""
    depth = model.max_depth if target_depth is None else target_depth
    ranges = model.feature_ranges()
    rng = rng or np.random.default_rng()
    trees = [pad_to_complete(t, depth, features=ranges or None, rng=rng) for t in model.trees]
    return PlaintextModel(trees, model.objective, model.num_classes, model.alpha, model.base_score)
