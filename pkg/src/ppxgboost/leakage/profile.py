"""Leakage values and the observable output of an experiment.

Internal nodes are always enumerated in canonical order: tree index, then
node id.  Feature classes and threshold ranks are dense integers assigned
in that order, so the same leakage computed from a plaintext model and
extracted from an encrypted model compares equal field by field.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..artifacts import EncLeaf, EncryptedModel, EncryptedQuery, EncryptedResult, EncSplit
from ..inference import infer_audited

NodeRef = tuple[int, int]  # (tree index, node id)


@dataclass(frozen=True)
class TreeShape:
    root: int
    splits: tuple[tuple[int, int, int, int], ...]  # (nodeid, yes, no, missing), sorted
    leaves: tuple[int, ...]


@dataclass(frozen=True)
class SetupLeakage:
    """Structure of the padded model plus the order pattern of its thresholds.

    ``threshold_ranks`` is the dense rank (ties share a rank) of every
    internal threshold among all thresholds of the model.  A deterministic
    OPE reveals this total order; ``child_order`` (sign of
    ``threshold(yes child) - threshold(no child)`` for nodes with two
    internal children) is implied by it and kept for readability.
    ``feature_classes`` numbers pseudonyms by first appearance.
    """

    num_trees: int
    depths: tuple[int, ...]
    shapes: tuple[TreeShape, ...]
    objective: str
    num_classes: int
    feature_classes: tuple[int, ...]
    threshold_ranks: tuple[int, ...]
    child_order: tuple[tuple[NodeRef, int], ...]

    def internal_nodes(self) -> list[NodeRef]:
        return [(t, s[0]) for t, shape in enumerate(self.shapes) for s in shape.splits]

    @property
    def num_features(self) -> int:
        return max(self.feature_classes, default=-1) + 1

    @property
    def threshold_rank_order(self) -> tuple[int, ...]:
        """Positions into :meth:`internal_nodes` sorted by threshold; equal
        thresholds keep canonical order."""
        return tuple(sorted(range(len(self.threshold_ranks)), key=lambda i: (self.threshold_ranks[i], i)))

    @property
    def child_order_bits(self) -> dict[NodeRef, int | None]:
        """1 if the ``no`` child holds the smaller threshold, 0 if the ``yes``
        child does, None on a tie."""
        return {ref: None if c == 0 else int(c > 0) for ref, c in self.child_order}


@dataclass(frozen=True)
class QueryLeakage:
    """Per-query leakage of the query phase.

    * ``query_pattern``: 0-based index classes of equal queries, ordered by
      first occurrence;
    * ``present``: sorted feature classes each query carries;
    * ``paths``: node ids traversed, per query and tree;
    * ``value_ranks``: dense rank of each present value (aligned with
      ``present``) in the joint order of all thresholds and all query values
      so far, with ``threshold_ranks`` giving the thresholds' places in that
      same order.  One OPE key covers every feature, so this whole order is
      visible to the server.
    """

    query_pattern: tuple[tuple[int, ...], ...]
    present: tuple[tuple[int, ...], ...]
    paths: tuple[tuple[tuple[int, ...], ...], ...]  # [query][tree] -> node ids
    value_ranks: tuple[tuple[int, ...], ...] = ()
    threshold_ranks: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.paths)

    def prefix(self, n: int) -> "QueryLeakage":
        pattern = tuple(c for c in (tuple(i for i in cls if i < n) for cls in self.query_pattern) if c)
        values = self.value_ranks[:n]
        joint = dense_ranks(list(self.threshold_ranks) + [r for q in values for r in q])
        t = len(self.threshold_ranks)
        return QueryLeakage(pattern, self.present[:n], self.paths[:n],
                            _regroup(joint[t:], values), joint[:t])

    def class_of(self, i: int) -> tuple[int, ...]:
        for cls in self.query_pattern:
            if i in cls:
                return cls
        raise IndexError(i)


def _regroup(flat, shape) -> tuple[tuple[int, ...], ...]:
    out, k = [], 0
    for q in shape:
        out.append(tuple(flat[k:k + len(q)]))
        k += len(q)
    return tuple(out)


def joint_query_leakage(keys: list, present: list, paths: list, values: list[list[int]],
                        thresholds: list[int]) -> QueryLeakage:
    """Assemble a :class:`QueryLeakage` from raw comparable values; used on
    quantized plaintexts and on OPE ciphertexts alike."""
    joint = dense_ranks(list(thresholds) + [v for q in values for v in q])
    t = len(thresholds)
    return QueryLeakage(partition(keys), tuple(present), tuple(paths),
                        _regroup(joint[t:], values), joint[:t])


def partition(keys: list) -> tuple[tuple[int, ...], ...]:
    """Equality classes of ``keys`` ordered by first occurrence."""
    classes: dict = {}
    for i, k in enumerate(keys):
        classes.setdefault(k, []).append(i)
    return tuple(tuple(v) for v in classes.values())


def dense_ranks(values: list) -> tuple[int, ...]:
    order = {v: r for r, v in enumerate(sorted(set(values)))}
    return tuple(order[v] for v in values)


def child_order(shapes, refs: list[NodeRef], values: list) -> tuple[tuple[NodeRef, int], ...]:
    val = dict(zip(refs, values))
    out = []
    for t, shape in enumerate(shapes):
        for nid, yes, no, _ in shape.splits:
            if (t, yes) in val and (t, no) in val:
                a, b = val[(t, yes)], val[(t, no)]
                out.append(((t, nid), (a > b) - (a < b)))
    return tuple(out)


Transcript = tuple[tuple[EncryptedQuery, EncryptedResult], ...]


@dataclass(frozen=True)
class View:
    """What the ML module (and hence a distinguisher) observes."""

    encml: EncryptedModel
    transcript: Transcript


def _shape(t) -> TreeShape:
    splits = tuple(sorted((n.nodeid, n.yes, n.no, n.missing) for n in t.nodes.values()
                          if isinstance(n, EncSplit)))
    leaves = tuple(sorted(n.nodeid for n in t.nodes.values() if isinstance(n, EncLeaf)))
    return TreeShape(t.root, splits, leaves)


def extract_setup_leakage(encml: EncryptedModel) -> SetupLeakage:
    shapes = tuple(_shape(t) for t in encml.trees)
    refs, names, cts = [], [], []
    for ti, shape in enumerate(shapes):
        for s in shape.splits:
            node = encml.trees[ti].nodes[s[0]]
            refs.append((ti, s[0]))
            names.append(node.pseudonym)
            cts.append(node.threshold_ct)
    classes = {}
    feature_classes = tuple(classes.setdefault(p, len(classes)) for p in names)
    return SetupLeakage(len(encml.trees), tuple(t.depth for t in encml.trees), shapes,
                        encml.objective.value, encml.num_classes, feature_classes,
                        dense_ranks(cts), child_order(shapes, refs, cts))


def extract_leakage(view: View) -> tuple[SetupLeakage, QueryLeakage]:
    """Recover both leakage values from the observable output alone."""
    setup = extract_setup_leakage(view.encml)
    classes: dict[str, int] = {}
    thresholds = []
    for t in view.encml.trees:
        for nid in sorted(t.nodes):
            n = t.nodes[nid]
            if isinstance(n, EncSplit):
                classes.setdefault(n.pseudonym, len(classes))
                thresholds.append(n.threshold_ct)
    keys, present, paths, values = [], [], [], []
    for q, _ in view.transcript:
        keys.append(tuple(sorted(q.entries.items())))
        mine = sorted((classes[p], v) for p, v in q.entries.items() if p in classes)
        present.append(tuple(c for c, _ in mine))
        values.append([v for _, v in mine])
        _, records = infer_audited(view.encml, q)
        paths.append(tuple(r.path for r in records))
    return setup, joint_query_leakage(keys, present, paths, values, thresholds)
