"""The simulator and the Ideal experiment.

The simulator sees leakage only.  It never imports the plaintext model,
the proxy, the client or any key bundle; its sole secret is randomness.
"""

from __future__ import annotations

import bisect
import random
from typing import Callable

from ..artifacts import EncCart, EncLeaf, EncryptedModel, EncryptedQuery, EncryptedResult, EncSplit, Objective
from ..encoding import DEFAULT_PARAMS, EncodingParams
from ..errors import HarnessError
from ..ope import OpeParams
from ..paillier import ShePublicKey, she_eval_add, she_keygen
from .profile import QueryLeakage, SetupLeakage, View

LEAF_MODES = ("uniform", "zero")


class Simulator:
    """Produces an encrypted model and transcript from leakage.

    * pseudonyms: fresh random 128-bit strings, one per feature class;
    * thresholds: sorted distinct uniform range elements, assigned by rank;
    * leaves: uniform elements of ``[1, n^2)``;
    * fresh queries: each present value goes to a uniform range element in
      the gap the leaked joint order assigns it, between already simulated
      thresholds and query values; repeats reuse the earlier objects.

    ``leaf_mode="zero"`` gives a deliberately broken simulator whose leaf
    ciphertexts are all ``1`` (an encryption of zero with ``r = 1``), used to
    check that the distinguishers have teeth.
    """

    def __init__(self, setup: SetupLeakage, *, k: int = 128, test_mode: bool = True,
                 modulus_bits: int | None = None, ope_params: OpeParams | None = None,
                 encoding: EncodingParams = DEFAULT_PARAMS, leaf_mode: str = "uniform",
                 rng: random.Random | None = None):
        if leaf_mode not in LEAF_MODES:
            raise ValueError(f"leaf_mode must be one of {LEAF_MODES}")
        self.setup_leakage = setup
        self.k = k
        self.test_mode = test_mode
        self.modulus_bits = modulus_bits
        self.ope_params = ope_params or OpeParams(domain_bits=encoding.feature_domain_bits)
        self.encoding = encoding
        self.leaf_mode = leaf_mode
        self.rng = rng or random.SystemRandom()
        self.encml: EncryptedModel | None = None
        self._thresholds: dict[tuple[int, int], int] = {}
        self._pseudonyms: list[str] = []
        self._feature_of: dict[tuple[int, int], int] = {}
        self._values: list[list[int]] = []  # simulated query values, aligned with present classes
        self.transcript: list[tuple[EncryptedQuery, EncryptedResult]] = []

    def _leaf(self, pk: ShePublicKey) -> int:
        if self.leaf_mode == "zero":
            return 1
        return self.rng.randrange(1, pk.nsquare)

    def simulate_setup(self) -> EncryptedModel:
        L = self.setup_leakage
        pk, _ = she_keygen(self.k, modulus_bits=self.modulus_bits, test_mode=self.test_mode)
        # the private half is discarded: nothing simulated is ever decrypted
        width = 1 << self.ope_params.range_bits
        ranks = max(L.threshold_ranks, default=-1) + 1
        values: set[int] = set()
        while len(values) < ranks:
            values.add(self.rng.randrange(width))
        by_rank = sorted(values)
        seen: set[str] = set()
        while len(self._pseudonyms) < L.num_features:
            p = f"{self.rng.getrandbits(128):032x}"
            if p not in seen:
                seen.add(p)
                self._pseudonyms.append(p)
        refs = L.internal_nodes()
        for ref, cls, rank in zip(refs, L.feature_classes, L.threshold_ranks):
            self._thresholds[ref] = by_rank[rank]
            self._feature_of[ref] = cls
        trees = []
        for ti, shape in enumerate(L.shapes):
            nodes: dict = {}
            for nid, yes, no, missing in shape.splits:
                nodes[nid] = EncSplit(nid, self._pseudonyms[self._feature_of[(ti, nid)]],
                                      self._thresholds[(ti, nid)], yes, no, missing)
            for nid in shape.leaves:
                nodes[nid] = EncLeaf(nid, self._leaf(pk))
            trees.append(EncCart(shape.root, nodes))
        self.encml = EncryptedModel("sim-user", pk, Objective(L.objective), L.num_classes,
                                    self.encoding, self.ope_params, tuple(trees))
        return self.encml

    def _place(self, leakage: QueryLeakage, i: int) -> list[int]:
        """Ciphertexts for query ``i``'s values, consistent with the joint
        order of thresholds and all earlier simulated query values."""
        L = self.setup_leakage
        known: dict[int, int] = {}

        def pin(rank: int, value: int) -> None:
            if known.setdefault(rank, value) != value:
                raise HarnessError("joint order conflicts with earlier simulated values")

        for ref, rank in zip(L.internal_nodes(), leakage.threshold_ranks):
            pin(rank, self._thresholds[ref])
        for j in range(i):
            for rank, value in zip(leakage.value_ranks[j], self._values[j]):
                pin(rank, value)
        ranks = sorted(known)
        gaps: dict[int, list[int]] = {}
        for r in sorted(set(leakage.value_ranks[i]) - set(known)):
            gaps.setdefault(bisect.bisect_left(ranks, r), []).append(r)
        top = 1 << self.ope_params.range_bits
        for g, new in gaps.items():
            lo = known[ranks[g - 1]] + 1 if g else 0
            hi = known[ranks[g]] if g < len(ranks) else top
            if hi - lo < len(new):
                raise HarnessError("no room between neighbouring ciphertexts")
            picks: set[int] = set()
            while len(picks) < len(new):
                picks.add(self.rng.randrange(lo, hi))
            for r, v in zip(new, sorted(picks)):
                known[r] = v
        return [known[r] for r in leakage.value_ranks[i]]

    def _check_paths(self, entries: dict[int, int], paths) -> None:
        L = self.setup_leakage
        for ti, path in enumerate(paths):
            splits = {s[0]: s for s in L.shapes[ti].splits}
            for nid, nxt in zip(path, path[1:]):
                if nid not in splits:
                    raise HarnessError("leaked path steps through a leaf")
                _, yes, no, missing = splits[nid]
                v = entries.get(self._feature_of[(ti, nid)])
                thr = self._thresholds[(ti, nid)]
                want = missing if v is None else (yes if v < thr else no)
                if nxt != want:
                    raise HarnessError("leaked path disagrees with the leaked value order")

    def _fresh_query(self, leakage: QueryLeakage, i: int) -> EncryptedQuery:
        if len(leakage.value_ranks) != len(leakage):
            raise HarnessError("query leakage lacks the joint value order")
        values = self._place(leakage, i)
        by_class = dict(zip(leakage.present[i], values))
        self._check_paths(by_class, leakage.paths[i])
        self._values.append(values)
        return EncryptedQuery({self._pseudonyms[c]: v for c, v in by_class.items()})

    def _result(self, paths) -> EncryptedResult:
        encml = self.encml
        leaves = [encml.trees[ti].nodes[path[-1]].score_ct for ti, path in enumerate(paths)]
        pk = encml.she_public
        if encml.objective is Objective.SOFTMAX:
            k = encml.num_classes
            return EncryptedResult(tuple(she_eval_add(pk, leaves[c::k]) for c in range(k)))
        return EncryptedResult((she_eval_add(pk, leaves),))

    def simulate_query(self, leakage: QueryLeakage) -> tuple[EncryptedQuery, EncryptedResult]:
        """Simulate the newest query in the leakage prefix ``leakage``."""
        if self.encml is None:
            raise HarnessError("simulate_setup must run first")
        i = len(leakage) - 1
        if i != len(self.transcript):
            raise HarnessError(f"expected leakage for query {len(self.transcript)}, got {i}")
        first = leakage.class_of(i)[0]
        if first < i:
            pair = self.transcript[first]
            self._values.append(self._values[first])
        else:
            pair = (self._fresh_query(leakage, i), self._result(leakage.paths[i]))
        self.transcript.append(pair)
        return pair


LeakageOracle = Callable[[int], QueryLeakage]


def run_ideal(setup: SetupLeakage, oracle: LeakageOracle, k: int = 128, m: int = 4,
              **simulator_kwargs) -> View:
    """``oracle(i)`` returns the query leakage through query ``i``."""
    sim = Simulator(setup, k=k, **simulator_kwargs)
    encml = sim.simulate_setup()
    for i in range(m):
        sim.simulate_query(oracle(i))
    return View(encml, tuple(sim.transcript))
