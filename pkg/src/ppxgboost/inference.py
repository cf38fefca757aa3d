"""The ML module: evaluate an encrypted query on an encrypted model.

Traversal compares OPE ciphertexts directly; the reached leaves are summed
homomorphically.  Nothing here can decrypt: the only inputs are the
encrypted model and the encrypted query.
"""

from __future__ import annotations

from .artifacts import EncCart, EncLeaf, EncryptedModel, EncryptedQuery, EncryptedResult, Objective, TraversalRecord
from .errors import ContractError, IntegrityError
from .paillier import she_eval_add


def _walk(t: EncCart, entries: dict[str, int], path: list[int] | None) -> EncLeaf:
    nodes = t.nodes
    node = nodes.get(t.root)
    steps = 0
    limit = len(nodes)
    while True:
        if node is None:
            raise IntegrityError("dangling child id in encrypted tree")
        if path is not None:
            path.append(node.nodeid)
        if isinstance(node, EncLeaf):
            return node
        steps += 1
        if steps > limit:
            raise IntegrityError("cycle in encrypted tree")
        v = entries.get(node.pseudonym)
        if v is None:
            nxt = node.missing
        else:
            nxt = node.yes if v < node.threshold_ct else node.no
        node = nodes.get(nxt)


def evaluate_encrypted_tree(t: EncCart, q: EncryptedQuery,
                            tree_index: int = 0) -> tuple[int, TraversalRecord]:
    path: list[int] = []
    leaf = _walk(t, q.entries, path)
    return leaf.score_ct, TraversalRecord(tree_index, tuple(path))


def _aggregate(encml: EncryptedModel, leaves: list[int]) -> EncryptedResult:
    pk = encml.she_public
    if encml.objective is Objective.SOFTMAX:
        k = encml.num_classes
        if len(leaves) % k:
            raise ContractError("tree count not divisible by num_classes")
        return EncryptedResult(tuple(she_eval_add(pk, leaves[c::k]) for c in range(k)))
    return EncryptedResult((she_eval_add(pk, leaves),))


def infer(encml: EncryptedModel, q: EncryptedQuery) -> EncryptedResult:
    """Encrypted margins: one ciphertext, or one per class for softmax
    (tree ``i`` feeds class ``i mod num_classes``)."""
    leaves = [_walk(t, q.entries, None).score_ct for t in encml.trees]
    return _aggregate(encml, leaves)


def infer_audited(encml: EncryptedModel, q: EncryptedQuery) -> tuple[EncryptedResult, list[TraversalRecord]]:
    """Like :func:`infer`, also returning the traversed path of every tree."""
    leaves, records = [], []
    for i, t in enumerate(encml.trees):
        ct, rec = evaluate_encrypted_tree(t, q, i)
        leaves.append(ct)
        records.append(rec)
    return _aggregate(encml, leaves), records
