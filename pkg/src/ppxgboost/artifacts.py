"""Objects that cross the trust boundary: the encrypted model, encrypted
queries and encrypted results, plus their JSON wire formats.

Nothing in this module holds secret key material.  OPE ciphertexts are
serialized as decimal strings, Paillier values as lowercase hex.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

from .encoding import EncodingParams
from .errors import ContractError, IntegrityError
from .ope import OpeParams
from .paillier import ShePublicKey

ENCML_VERSION = 1
_PSEUDONYM = re.compile(r"^[0-9a-f]{32}\Z")
_DECIMAL = re.compile(r"^[0-9]{1,40}\Z")


class Objective(str, Enum):
    BINARY = "binary_margin"
    SOFTMAX = "softmax"


@dataclass(frozen=True)
class EncSplit:
    nodeid: int
    pseudonym: str
    threshold_ct: int
    yes: int
    no: int
    missing: int


@dataclass(frozen=True)
class EncLeaf:
    nodeid: int
    score_ct: int


EncNode = Union[EncSplit, EncLeaf]


@dataclass
class EncCart:
    root: int
    nodes: dict[int, EncNode]
    depth: int = field(init=False)

    def __post_init__(self):
        self.depth = validate_structure(self.root, self.nodes)

    def splits(self) -> list[EncSplit]:
        return [n for n in self.nodes.values() if isinstance(n, EncSplit)]

    def leaves(self) -> list[EncLeaf]:
        return [n for n in self.nodes.values() if isinstance(n, EncLeaf)]


def validate_structure(root: int, nodes: dict) -> int:
    """Check binary-tree shape of a node table; return the depth."""
    if root not in nodes:
        raise IntegrityError(f"root {root} missing")
    seen = set()
    depth = 0
    stack = [(root, 0)]
    while stack:
        nid, d = stack.pop()
        if nid in seen:
            raise IntegrityError(f"node {nid} reached twice")
        seen.add(nid)
        node = nodes.get(nid)
        if node is None:
            raise IntegrityError(f"dangling child id {nid}")
        if node.nodeid != nid:
            raise IntegrityError(f"node key {nid} holds node {node.nodeid}")
        if hasattr(node, "yes"):
            if node.yes == node.no or node.missing not in (node.yes, node.no):
                raise IntegrityError(f"node {nid}: inconsistent child ids")
            stack.append((node.yes, d + 1))
            stack.append((node.no, d + 1))
        else:
            depth = max(depth, d)
    if len(seen) != len(nodes):
        raise IntegrityError("unreachable nodes in tree")
    return depth


@dataclass
class EncryptedModel:
    user_id: str
    she_public: ShePublicKey
    objective: Objective
    num_classes: int
    encoding: EncodingParams
    ope_params: OpeParams
    trees: tuple[EncCart, ...]
    version: int = ENCML_VERSION

    def __post_init__(self):
        self.objective = Objective(self.objective)
        self.trees = tuple(self.trees)
        if not self.trees:
            raise IntegrityError("encrypted model has no trees")
        if self.objective is Objective.SOFTMAX and len(self.trees) % self.num_classes:
            raise IntegrityError("tree count not divisible by num_classes")

    def validate(self) -> None:
        """Structural and range checks shared by real and simulated models."""
        n2 = self.she_public.nsquare
        top = 1 << self.ope_params.range_bits
        for i, t in enumerate(self.trees):
            validate_structure(t.root, t.nodes)
            for node in t.nodes.values():
                if isinstance(node, EncSplit):
                    if not _PSEUDONYM.match(node.pseudonym):
                        raise IntegrityError(f"tree {i} node {node.nodeid}: bad pseudonym")
                    if not 0 <= node.threshold_ct < top:
                        raise IntegrityError(f"tree {i} node {node.nodeid}: threshold out of range")
                elif not 0 < node.score_ct < n2:
                    raise IntegrityError(f"tree {i} node {node.nodeid}: leaf ciphertext out of range")

    def to_dict(self) -> dict:
        trees = []
        for t in self.trees:
            nodes = []
            for nid in sorted(t.nodes):
                n = t.nodes[nid]
                if isinstance(n, EncSplit):
                    nodes.append({"nodeid": nid, "pseudonym": n.pseudonym,
                                  "threshold": str(n.threshold_ct),
                                  "yes": n.yes, "no": n.no, "missing": n.missing})
                else:
                    nodes.append({"nodeid": nid, "leaf": format(n.score_ct, "x")})
            trees.append({"root": t.root, "nodes": nodes})
        return {
            "version": self.version, "user_id": self.user_id,
            "she_public": self.she_public.to_dict(), "objective": self.objective.value,
            "num_classes": self.num_classes, "encoding": self.encoding.to_dict(),
            "ope_params": self.ope_params.to_dict(), "trees": trees,
        }

    def to_json(self) -> bytes:
        return json.dumps(self.to_dict(), separators=(",", ":")).encode()

    @classmethod
    def from_dict(cls, d: dict) -> "EncryptedModel":
        try:
            if d["version"] != ENCML_VERSION:
                raise IntegrityError(f"unsupported EncML version {d['version']}")
            trees = []
            for t in d["trees"]:
                nodes: dict[int, EncNode] = {}
                for n in t["nodes"]:
                    nid = int(n["nodeid"])
                    if "leaf" in n:
                        nodes[nid] = EncLeaf(nid, int(n["leaf"], 16))
                    else:
                        nodes[nid] = EncSplit(nid, n["pseudonym"], int(n["threshold"]),
                                              int(n["yes"]), int(n["no"]), int(n["missing"]))
                trees.append(EncCart(int(t["root"]), nodes))
            return cls(d["user_id"], ShePublicKey.from_dict(d["she_public"]), d["objective"],
                       int(d["num_classes"]), EncodingParams.from_dict(d["encoding"]),
                       OpeParams.from_dict(d["ope_params"]), trees)
        except (KeyError, TypeError, ValueError) as e:
            raise IntegrityError(f"malformed EncML: {e!r}") from None

    @classmethod
    def from_json(cls, data: bytes | str) -> "EncryptedModel":
        try:
            return cls.from_dict(json.loads(data))
        except json.JSONDecodeError as e:
            raise IntegrityError(f"malformed EncML JSON: {e}") from None


@dataclass(frozen=True)
class EncryptedQuery:
    """Feature pseudonym -> OPE ciphertext; absent features are missing."""

    entries: dict[str, int]

    def to_dict(self) -> dict:
        return {"entries": {k: str(self.entries[k]) for k in sorted(self.entries)}}

    def to_json(self) -> bytes:
        return json.dumps(self.to_dict(), separators=(",", ":")).encode()

    @classmethod
    def from_dict(cls, d) -> "EncryptedQuery":
        if not isinstance(d, dict) or not isinstance(d.get("entries"), dict):
            raise ContractError("encrypted query must be an object with an 'entries' object")
        entries = {}
        for k, v in d["entries"].items():
            if not isinstance(k, str) or not _PSEUDONYM.match(k):
                raise ContractError("encrypted query keys must be 32-hex pseudonyms")
            if not isinstance(v, str) or not _DECIMAL.match(v):
                raise ContractError("encrypted query values must be decimal strings")
            entries[k] = int(v)
        return cls(entries)

    @classmethod
    def from_json(cls, data: bytes | str) -> "EncryptedQuery":
        try:
            return cls.from_dict(json.loads(data))
        except json.JSONDecodeError:
            raise ContractError("encrypted query is not valid JSON") from None

    def __hash__(self):
        return hash(tuple(sorted(self.entries.items())))


@dataclass(frozen=True)
class EncryptedResult:
    class_cts: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"class_cts": [format(c, "x") for c in self.class_cts]}

    def to_json(self) -> bytes:
        return json.dumps(self.to_dict(), separators=(",", ":")).encode()

    @classmethod
    def from_dict(cls, d) -> "EncryptedResult":
        try:
            return cls(tuple(int(c, 16) for c in d["class_cts"]))
        except (KeyError, TypeError, ValueError):
            raise ContractError("encrypted result must carry a list of hex ciphertexts") from None

    @classmethod
    def from_json(cls, data: bytes | str) -> "EncryptedResult":
        return cls.from_dict(json.loads(data))


@dataclass(frozen=True)
class TraversalRecord:
    tree_index: int
    path: tuple[int, ...]
