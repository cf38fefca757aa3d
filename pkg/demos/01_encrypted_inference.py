"""
Encrypted inference, end to end
===============================

Encrypt one model for one user, run a few queries through the server-side
evaluator, and compare against plaintext scoring.
"""

import numpy as np

from ppxgboost import (decrypt_result, encrypt_query, evaluate_model, infer, interpret,
                       interpret_result, setup_user)
from ppxgboost.fixtures import random_query, titanic_like_model

# a 50-tree binary model with titanic-style features
model = titanic_like_model(seed=7)
print(len(model.trees), "trees, features:", model.feature_names()[:5], "...")

# the proxy encrypts it for "alice"; test_mode keeps the Paillier modulus small
encml, bundle = setup_user(model, 128, "alice", test_mode=True)
print("encrypted model is", len(encml.to_json()) // 1024, "KiB")

# server never sees feature names, only pseudonyms
print("first split:", next(iter(encml.trees[0].nodes.values())))

rng = np.random.default_rng(0)
for _ in range(5):
    q = random_query(model, rng)
    eq = encrypt_query(bundle, q)                 # client
    er = infer(encml, eq)                         # server
    scores = decrypt_result(bundle, er)           # client
    enc = interpret_result(scores, bundle)
    plain = interpret(evaluate_model(model, q), model)
    print(f"label {enc.label} vs {plain.label}   p={enc.probabilities[0]:.6f} vs {plain.probabilities[0]:.6f}")
