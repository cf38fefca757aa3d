import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ppxgboost.errors import ContractError, ModelParseError, ParameterError
from ppxgboost.fixtures import random_model, random_query
from ppxgboost.model import (Cart, Leaf, PlaintextModel, Split, evaluate_model, evaluate_tree,
                             interpret, interpret_scores, pad_model, pad_to_complete, parse_model,
                             serialize_model)

DATA = Path(__file__).parent / "data"


@pytest.fixture
def tiny():
    return parse_model((DATA / "tiny_binary.json").read_bytes())


@pytest.fixture
def tiny_softmax():
    return parse_model((DATA / "tiny_softmax.json").read_bytes())


@pytest.mark.parametrize("q, margin", [
    ({"age": 40, "fare": 5}, -0.25 + 0.1),
    ({}, 0.5 + 0.1),
    ({"age": 20}, 0.5 + 0.1),
    ({"age": 40}, 0.75 + 0.1),
    ({"age": 30.0, "fare": 10.5}, 0.75 + 0.1),  # equality takes the no branch
])
def test_hand_traced_binary(tiny, q, margin):
    assert evaluate_model(tiny, q) == pytest.approx([margin])


def test_paths(tiny):
    assert evaluate_tree(tiny.trees[0], {"age": 40, "fare": 5})[1] == [0, 2, 3]
    assert evaluate_tree(tiny.trees[1], {})[1] == [0]


def test_softmax_class_assignment(tiny_softmax):
    # tree i feeds class i mod 3
    q = {"x": 1.0, "y": 0.5}
    assert evaluate_model(tiny_softmax, q) == pytest.approx([-1.0 + 0.0, 0.5 - 0.5, 0.25 + 0.0])
    pred = interpret(evaluate_model(tiny_softmax, q), tiny_softmax)
    assert pred.label == 2
    assert sum(pred.probabilities) == pytest.approx(1.0)


def test_sigmoid_reference():
    p = interpret_scores([2.0], "binary_margin", 1, 0.5)
    assert p.probabilities[0] == pytest.approx(0.8807970779778823, abs=1e-15)
    assert p.label == 1
    assert interpret_scores([2.0], "binary_margin", 1, 0.9).label == 0
    assert interpret_scores([-800.0], "binary_margin", 1, 0.5).probabilities[0] == 0.0
    assert interpret_scores([800.0], "binary_margin", 1, 0.5).probabilities[0] == 1.0


def test_softmax_ties_go_low():
    assert interpret_scores([1.0, 3.0, 3.0], "softmax", 3, 0.5).label == 1


def test_score_length_contract():
    with pytest.raises(ContractError):
        interpret_scores([1.0, 2.0], "binary_margin", 1, 0.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_serialize_round_trip(seed):
    m = random_model(seed, objective="softmax" if seed % 3 == 0 else "binary_margin")
    again = parse_model(serialize_model(m, with_metadata=True))
    assert serialize_model(again) == serialize_model(m)
    assert (again.objective, again.num_classes, again.base_score) == (m.objective, m.num_classes, m.base_score)


def _tree(obj):
    return json.dumps([obj])


@pytest.mark.parametrize("dump, needle", [
    ("not json", "malformed JSON"),
    ("[]", "non-empty"),
    (_tree({"nodeid": 0, "split": "a", "split_condition": 1, "yes": 1, "no": 2, "missing": 1,
            "children": [{"nodeid": 1, "leaf": 0}]}), "exactly two children"),
    (_tree({"nodeid": 0, "split": "a", "split_condition": 1, "yes": 1, "no": 5, "missing": 1,
            "children": [{"nodeid": 1, "leaf": 0}, {"nodeid": 2, "leaf": 0}]}), "no id 5"),
    (_tree({"nodeid": 0, "split": "a", "split_condition": 1, "yes": 1, "no": 2, "missing": 7,
            "children": [{"nodeid": 1, "leaf": 0}, {"nodeid": 2, "leaf": 0}]}), "missing id 7"),
    (_tree({"nodeid": 0, "split": "a", "split_condition": "NaN", "yes": 1, "no": 2, "missing": 1,
            "children": [{"nodeid": 1, "leaf": 0}, {"nodeid": 2, "leaf": 0}]}), "not finite"),
    (_tree({"nodeid": 0, "split": "a", "split_condition": 1, "yes": 1, "no": 2, "missing": 1,
            "children": [{"nodeid": 1, "leaf": 0}, {"nodeid": 1, "leaf": 0}]}), "duplicate node id"),
    (_tree({"nodeid": 0, "split_condition": 1, "yes": 1, "no": 2, "missing": 1,
            "children": [{"nodeid": 1, "leaf": 0}, {"nodeid": 2, "leaf": 0}]}), "missing field 'split'"),
])
def test_parse_errors_name_the_node(dump, needle):
    with pytest.raises(ModelParseError, match=needle):
        parse_model(dump)


def test_parse_error_path_mentions_tree():
    bad = json.loads((DATA / "tiny_binary.json").read_text())
    bad["trees"][0]["children"][1]["children"][0]["leaf"] = "x"
    with pytest.raises(ModelParseError, match="tree 0/node 0/node 2/node 3"):
        parse_model(json.dumps(bad))


def test_softmax_tree_count_contract():
    t = Cart(0, {0: Leaf(0, 0.0)})
    with pytest.raises(ContractError):
        PlaintextModel([t, t], "softmax", 3)


def test_cart_rejects_cycles_and_orphans():
    with pytest.raises(ModelParseError):
        Cart(0, {0: Split(0, "a", 1.0, 1, 0, 1), 1: Leaf(1, 0.0)})
    with pytest.raises(ModelParseError, match="unreachable"):
        Cart(0, {0: Leaf(0, 0.0), 1: Leaf(1, 0.0)})


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_padding_preserves_scores_and_completes(seed):
    m = random_model(seed)
    rng = np.random.default_rng(seed)
    padded = pad_model(m, rng=rng)
    assert all(t.is_complete(m.max_depth) for t in padded.trees)
    for t in padded.trees:
        assert len(t.leaves()) == 2 ** m.max_depth
    for _ in range(20):
        q = random_query(m, rng, present_prob=0.7)
        assert evaluate_model(padded, q) == evaluate_model(m, q)


def test_padding_complete_tree_unchanged(tiny):
    t = tiny.trees[0]
    full = pad_to_complete(t, 2, rng=np.random.default_rng(0))
    assert full.is_complete(2)
    assert pad_to_complete(full, 2) is full
    with pytest.raises(ParameterError):
        pad_to_complete(full, 1)


def test_padding_dummy_thresholds_in_feature_range(tiny):
    padded = pad_model(tiny, rng=np.random.default_rng(1))
    ranges = tiny.feature_ranges()
    for t in padded.trees:
        for s in t.splits():
            lo, hi = ranges[s.feature]
            assert lo <= s.threshold <= hi
