"""
What the server learns
======================

Run the real protocol, extract its leakage, and feed only that leakage to
the simulator.  Then play a short distinguishing game.
"""

import random

import numpy as np

from ppxgboost.fixtures import random_model
from ppxgboost.leakage import GameConfig, battery, distinguisher_game, extract_leakage, run_ideal, run_real

model = random_model(3, objective="softmax")
real = run_real(model, m=6, rng=np.random.default_rng(3))
setup, queries = real.setup_leakage, real.query_leakage

print("trees:", setup.num_trees, "depths:", setup.depths)
print("query pattern:", queries.query_pattern)
print("joint value ranks:", queries.value_ranks)

ideal = run_ideal(setup, lambda i: queries.prefix(i + 1), m=6, rng=random.Random(0))
# the simulated view leaks exactly the same thing
assert extract_leakage(ideal) == (setup, queries)

# a quick game; the acceptance run uses many more rounds
for adv in distinguisher_game(battery(), GameConfig(rounds=200, train_rounds=40)):
    print(adv.line())

# a broken simulator (all leaves encrypt zero) is caught at once
cfg = GameConfig(rounds=200, train_rounds=40, simulator_kwargs={"leaf_mode": "zero"})
print("broken:", distinguisher_game(battery()[3:4], cfg)[0].line())
