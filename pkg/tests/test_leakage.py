import ast
import random
import subprocess
import sys
import textwrap
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import ppxgboost
from ppxgboost.artifacts import EncLeaf, EncryptedModel, EncSplit
from ppxgboost.errors import HarnessError
from ppxgboost.fixtures import random_model, random_query
from ppxgboost.leakage.game import (Advantage, GameConfig, LeafMagnitudeDistinguisher,
                                    RandomGuessDistinguisher, advantage_from, distinguisher_game,
                                    fit_threshold, guess)
from ppxgboost.leakage.ideal import Simulator, run_ideal
from ppxgboost.leakage.profile import (QueryLeakage, SetupLeakage, TreeShape, extract_leakage,
                                       joint_query_leakage)
from ppxgboost.leakage.real import AdaptiveQuerySource, leak_query, leak_setup, run_real
from ppxgboost.model import Cart, Leaf, PlaintextModel, Split, pad_model
from ppxgboost.proxy import setup_user

PKG = Path(ppxgboost.__file__).parent


def chain_tree(depth: int) -> Cart:
    nodes = {}
    for d in range(depth):
        nodes[2 * d] = Split(2 * d, f"f{d % 2}", float(d), 2 * d + 1, 2 * d + 2, 2 * d + 1)
        nodes[2 * d + 1] = Leaf(2 * d + 1, 0.1 * d)
    nodes[2 * depth] = Leaf(2 * depth, 1.0)
    return Cart(0, nodes)


def test_setup_leakage_counts():
    m = PlaintextModel([chain_tree(2), chain_tree(3), chain_tree(4)])
    L = leak_setup(m)
    assert L.num_trees == 3 and L.depths == (2, 3, 4)
    assert L.objective == "binary_margin" and L.num_classes == 1


def test_leaf_values_not_leaked():
    m = random_model(8)
    other = PlaintextModel(
        [Cart(t.root, {k: Leaf(k, v.value + 1.0) if isinstance(v, Leaf) else v for k, v in t.nodes.items()})
         for t in m.trees], m.objective, m.num_classes)
    assert leak_setup(m) == leak_setup(other)


def test_rank_order_matches_independent_sort():
    m = random_model(12)
    L = leak_setup(m)
    thresholds = [m.trees[t].nodes[n].threshold for t, n in L.internal_nodes()]
    order = np.argsort(np.array(thresholds), kind="stable")
    assert list(L.threshold_rank_order) == order.tolist()
    for (t, n), bit in L.child_order_bits.items():
        s = m.trees[t].nodes[n]
        a, b = m.trees[t].nodes[s.yes].threshold, m.trees[t].nodes[s.no].threshold
        assert bit == (None if a == b else int(b < a))


def test_query_pattern_definition():
    m = random_model(1)
    rng = np.random.default_rng(0)
    q, r = random_query(m, rng), random_query(m, rng)
    assert leak_query(m, [q, r, q]).query_pattern == ((0, 2), (1,))
    qs = [random_query(m, rng) for _ in range(5)]
    assert leak_query(m, qs).query_pattern == tuple((i,) for i in range(5))
    with pytest.raises(ValueError):
        leak_query(m, [])


def test_prefix():
    L = QueryLeakage(((0, 2), (1, 3)), ((0,),) * 4, (((0,),),) * 4)
    assert L.prefix(2).query_pattern == ((0,), (1,))
    assert L.prefix(3).query_pattern == ((0, 2), (1,))


def test_prefix_redensifies_joint_order():
    Q = joint_query_leakage([0, 1], [(0,), (0,)], [(), ()], [[30], [10]], [20])
    assert (Q.threshold_ranks, Q.value_ranks) == ((1,), ((2,), (0,)))
    head = Q.prefix(1)
    assert (head.threshold_ranks, head.value_ranks) == ((0,), ((1,),))


def test_joint_order_spans_features_and_queries():
    # two features, one threshold each; oracle: rank = count of smaller distinct values
    thr, vals = [5, 9], [[7, 1], [9, 12]]
    Q = joint_query_leakage([0, 1], [(0, 1), (0, 1)], [(), ()], vals, thr)
    pool = sorted(set(thr + [v for q in vals for v in q]))
    assert Q.threshold_ranks == tuple(pool.index(t) for t in thr)
    assert Q.value_ranks == tuple(tuple(pool.index(v) for v in q) for q in vals)


def test_simulator_rejects_order_that_contradicts_paths():
    shape = TreeShape(0, ((0, 1, 2, 1),), (1, 2))
    L = SetupLeakage(1, (1,), (shape,), "binary_margin", 1, (0,), (0,), ())
    # value ranked above the threshold but the path takes the yes edge
    Q = QueryLeakage(((0,),), ((0,),), (((0, 1),),), ((1,),), (0,))
    with pytest.raises(HarnessError):
        run_ideal(L, lambda i: Q.prefix(i + 1), m=1, rng=random.Random(0))


@pytest.mark.parametrize("seed", range(4))
def test_real_leakage_matches_definitions(seed):
    m = random_model(seed, objective="softmax" if seed % 2 else "binary_margin")
    run = run_real(m, m=6, rng=np.random.default_rng(seed))
    assert len(run.view.transcript) == 6
    assert extract_leakage(run.view) == (run.setup_leakage, run.query_leakage)
    # paths from the plaintext definition equal audit records of the real run
    from ppxgboost.inference import infer_audited
    for (eq, _), paths in zip(run.view.transcript, run.query_leakage.paths):
        assert tuple(r.path for r in infer_audited(run.view.encml, eq)[1]) == paths


def test_real_single_query_and_repeats():
    m = random_model(2)
    run = run_real(m, m=1, rng=np.random.default_rng(1))
    assert len(run.view.transcript) == 1
    src = AdaptiveQuerySource(pad_model(m), repeat_prob=1.0)
    run = run_real(m, m=4, query_gen=src, rng=np.random.default_rng(2))
    wires = {eq.to_json() for eq, _ in run.view.transcript}
    assert len(wires) == 1
    assert run.query_leakage.query_pattern == ((0, 1, 2, 3),)
    with pytest.raises(ValueError):
        run_real(m, m=0)


@pytest.fixture(scope="module")
def matched():
    m = random_model(21, objective="softmax")
    run = run_real(m, m=8, rng=np.random.default_rng(21))
    q = run.query_leakage
    ideal = run_ideal(run.setup_leakage, lambda i: q.prefix(i + 1), m=8, rng=random.Random(1))
    return run, ideal


def test_simulated_model_is_structurally_valid(matched):
    run, ideal = matched
    ideal.encml.validate()
    assert EncryptedModel.from_json(ideal.encml.to_json()) == ideal.encml


def test_simulated_thresholds_follow_ranks(matched):
    run, ideal = matched
    L = run.setup_leakage
    cts = [ideal.encml.trees[t].nodes[n].threshold_ct for t, n in L.internal_nodes()]
    for i, j in zip(L.threshold_rank_order, L.threshold_rank_order[1:]):
        assert cts[i] <= cts[j]
        assert (cts[i] == cts[j]) == (L.threshold_ranks[i] == L.threshold_ranks[j])


def test_ideal_pattern_paths_and_shape(matched):
    run, ideal = matched
    assert extract_leakage(ideal) == (run.setup_leakage, run.query_leakage)
    for (rq, rr), (iq, ir) in zip(run.view.transcript, ideal.transcript):
        assert len(rq.entries) == len(iq.entries)
        assert len(rr.class_cts) == len(ir.class_cts)
    n2 = ideal.encml.she_public.nsquare
    assert all(0 < c < n2 for _, r in ideal.transcript for c in r.class_cts)


def test_repeats_reuse_ciphertext_objects(matched):
    run, ideal = matched
    for cls in run.query_leakage.query_pattern:
        assert all(ideal.transcript[i][0] is ideal.transcript[cls[0]][0] for i in cls)


def test_simulated_leaves_never_collide_with_real():
    m = random_model(3, n_trees=4, max_depth=3)
    padded = pad_model(m, rng=np.random.default_rng(0))
    encml, _ = setup_user(padded, test_mode=True, pad=False)
    real_leaves = {n.score_ct for t in encml.trees for n in t.leaves()}
    L = leak_setup(padded)
    sim = Simulator(L, rng=random.Random(0))
    hits = 0
    trials = 0
    while trials < 1000:
        enc = sim.simulate_setup()
        for t in enc.trees:
            for leaf in t.leaves():
                trials += 1
                hits += leaf.score_ct in real_leaves
        sim = Simulator(L, rng=random.Random(trials))
    assert hits == 0


def test_inconsistent_oracle_is_rejected():
    m = random_model(5, max_depth=3)
    run = run_real(m, m=2, rng=np.random.default_rng(5))
    q = run.query_leakage
    bad = replace(q, paths=tuple(tuple(p[:1] + (999,) for p in qp) for qp in q.paths))
    with pytest.raises((HarnessError, KeyError)):
        run_ideal(run.setup_leakage, lambda i: bad.prefix(i + 1), m=2)
    sim = Simulator(run.setup_leakage)
    with pytest.raises(HarnessError):
        sim.simulate_query(q.prefix(1))
    sim.simulate_setup()
    with pytest.raises(HarnessError):
        sim.simulate_query(q.prefix(2))


def test_broken_simulator_zero_leaves():
    m = random_model(4, n_trees=2, max_depth=2)
    run = run_real(m, m=1, rng=np.random.default_rng(4))
    v = run_ideal(run.setup_leakage, lambda i: run.query_leakage.prefix(i + 1), m=1, leaf_mode="zero")
    assert {leaf.score_ct for t in v.encml.trees for leaf in t.leaves()} == {1}
    with pytest.raises(ValueError):
        Simulator(run.setup_leakage, leaf_mode="bogus")


# ----------------------------------------------------------- game plumbing

def test_fit_threshold_oracle():
    rng = random.Random(0)
    for _ in range(50):
        xs = [rng.randint(0, 9) for _ in range(30)]
        ys = [rng.randint(0, 1) for _ in range(30)]
        cut = fit_threshold(xs, ys)
        acc = sum(guess(x, cut) == y for x, y in zip(xs, ys))
        # brute force over all cuts and directions
        best = max(sum(int(s * (x - t) > 0) == y for x, y in zip(xs, ys))
                   for t in [v + 0.5 for v in range(-1, 10)] for s in (1, -1))
        assert acc == best


def test_advantage_interval():
    a = advantage_from(549, 1000, "x")
    assert a.advantage == pytest.approx(0.049)
    assert a.ci_low == pytest.approx(0.049 - 1.96 * np.sqrt(0.549 * 0.451 / 1000))
    assert a.passed and not a.ci_within
    assert advantage_from(10_000, 20_000).ci_within
    assert not advantage_from(600, 1000).passed


def test_random_guess_interval_contains_zero():
    (a,) = distinguisher_game([RandomGuessDistinguisher()], GameConfig(rounds=200, train_rounds=20, seed=3))
    assert a.ci_low == 0.0


def test_magnitude_distinguisher_catches_broken_simulator():
    cfg = GameConfig(rounds=100, train_rounds=20, seed=1, simulator_kwargs={"leaf_mode": "zero"})
    (a,) = distinguisher_game([LeafMagnitudeDistinguisher()], cfg)
    assert a.advantage > 0.4


# ---------------------------------------------------------- interface audits

FORBIDDEN = {"model", "proxy", "client", "keys", "fixtures", "real", "service", "cli"}


def _local_imports(path: Path) -> set[str]:
    tree = ast.parse(path.read_text())
    out = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom) and node.level:
            base = node.module.split(".")[0] if node.module else None
            if base:
                out.add(base)
            else:
                out.update(a.name for a in node.names)
    return out


def test_ideal_import_closure_excludes_plaintext_types():
    seen, todo = set(), [PKG / "leakage" / "ideal.py"]
    while todo:
        path = todo.pop()
        if path in seen:
            continue
        seen.add(path)
        for name in _local_imports(path):
            assert name not in FORBIDDEN, f"{path.name} imports {name}"
            for cand in (path.parent / f"{name}.py", PKG / f"{name}.py"):
                if cand.exists():
                    todo.append(cand)


def test_ideal_runs_with_plaintext_modules_blocked():
    code = textwrap.dedent("""
        import importlib.abc, random, sys
        BLOCK = {"ppxgboost.model", "ppxgboost.proxy", "ppxgboost.client", "ppxgboost.keys",
                 "ppxgboost.fixtures", "ppxgboost.leakage.real"}
        class Blocker(importlib.abc.MetaPathFinder):
            def find_spec(self, name, path, target=None):
                if name in BLOCK:
                    raise ImportError("blocked " + name)
        sys.meta_path.insert(0, Blocker())
        from ppxgboost.leakage.ideal import run_ideal
        from ppxgboost.leakage.profile import QueryLeakage, SetupLeakage, TreeShape, extract_leakage
        shape = TreeShape(0, ((0, 1, 2, 1),), (1, 2))
        L = SetupLeakage(2, (1, 1), (shape, shape), "binary_margin", 1, (0, 1), (1, 0), ())
        # thresholds f0 < 10, f1 < 5; queries (3, 7), (12, -), (3, 7)
        Q = QueryLeakage(((0, 2), (1,)), ((0, 1), (0,), (0, 1)),
                         (((0, 1), (0, 2)), ((0, 2), (0, 1)), ((0, 1), (0, 2))),
                         ((0, 2), (4,), (0, 2)), (3, 1))
        view = run_ideal(L, lambda i: Q.prefix(i + 1), m=3, rng=random.Random(0))
        assert extract_leakage(view) == (L, Q)
        assert not BLOCK & set(sys.modules)
        print("ok")
    """)
    r = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert r.stdout.strip() == "ok"


def test_no_private_key_parameter_in_harness():
    for name in ("profile.py", "ideal.py", "game.py", "real.py"):
        src = (PKG / "leakage" / name).read_text()
        assert "ShePrivateKey" not in src and "she_decrypt" not in src and "decrypt_result" not in src
