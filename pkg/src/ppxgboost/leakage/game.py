"""Distinguishers and the Real/Ideal game.

Each distinguisher maps a view to one scalar statistic.  It is trained on
labelled views (a threshold and a direction that maximize training
accuracy) and then guesses the hidden bit on fresh rounds.  The advantage
is ``|accuracy - 1/2|`` with a normal 95% interval.
"""

from __future__ import annotations

import bisect
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..artifacts import EncLeaf, EncSplit, Objective
from ..fixtures import random_model
from ..inference import infer_audited
from ..model import PlaintextModel
from .ideal import run_ideal
from .profile import View
from .real import run_real

ADVANTAGE_BOUND = 0.05


class Distinguisher:
    name = "base"

    def statistic(self, view: View, rng: random.Random) -> float:
        raise NotImplementedError


class ThresholdRankDistinguisher(Distinguisher):
    """Fraction of parent/child pairs whose child threshold ciphertext is larger."""

    name = "ope_threshold_rank"

    def statistic(self, view, rng):
        up = total = 0
        for t in view.encml.trees:
            for n in t.nodes.values():
                if isinstance(n, EncSplit):
                    for c in (n.yes, n.no):
                        child = t.nodes[c]
                        if isinstance(child, EncSplit):
                            total += 1
                            up += child.threshold_ct > n.threshold_ct
        return up / total if total else 0.5


class QueryRankDistinguisher(Distinguisher):
    """Mean relative position of query values among same-feature thresholds."""

    name = "ope_query_rank"

    def statistic(self, view, rng):
        by_feature: dict[str, list[int]] = {}
        for t in view.encml.trees:
            for n in t.nodes.values():
                if isinstance(n, EncSplit):
                    by_feature.setdefault(n.pseudonym, []).append(n.threshold_ct)
        pos = []
        for q, _ in view.transcript:
            for p, v in q.entries.items():
                ts = by_feature.get(p)
                if ts:
                    pos.append(sum(v > x for x in ts) / len(ts))
        return float(np.mean(pos)) if pos else 0.5


class JointRankDistinguisher(Distinguisher):
    """Mean position of query values among all thresholds, across features,
    plus the share of value pairs from different queries that ascend."""

    name = "ope_joint_rank"

    def statistic(self, view, rng):
        ts = sorted(n.threshold_ct for t in view.encml.trees for n in t.nodes.values()
                    if isinstance(n, EncSplit))
        vals = [v for q, _ in view.transcript for v in q.entries.values()]
        if not ts or not vals:
            return 0.5
        pos = float(np.mean([bisect.bisect_left(ts, v) / len(ts) for v in vals]))
        firsts = [min(q.entries.values()) for q, _ in view.transcript if q.entries]
        up = sum(b > a for a, b in zip(firsts, firsts[1:]))
        return pos + up / max(len(firsts) - 1, 1)


class LeafMagnitudeDistinguisher(Distinguisher):
    """Mean of leaf and result ciphertexts scaled by ``n^2``."""

    name = "she_ciphertext_magnitude"

    def statistic(self, view, rng):
        n2 = view.encml.she_public.nsquare
        vals = [n.score_ct / n2 for t in view.encml.trees for n in t.nodes.values() if isinstance(n, EncLeaf)]
        vals += [c / n2 for _, r in view.transcript for c in r.class_cts]
        return float(np.mean(vals))


class PathFrequencyDistinguisher(Distinguisher):
    """Share of traversal steps taking the ``yes`` edge, plus the spread of
    leaf visit counts."""

    name = "path_frequency"

    def statistic(self, view, rng):
        yes = steps = 0
        visits: dict[tuple[int, int], int] = {}
        for q, _ in view.transcript:
            _, records = infer_audited(view.encml, q)
            for r in records:
                t = view.encml.trees[r.tree_index]
                for a, b in zip(r.path, r.path[1:]):
                    steps += 1
                    yes += t.nodes[a].yes == b
                key = (r.tree_index, r.path[-1])
                visits[key] = visits.get(key, 0) + 1
        share = yes / steps if steps else 0.5
        return share + float(np.std(list(visits.values()))) if visits else share


class TranscriptLengthDistinguisher(Distinguisher):
    """Structural sizes: entries per query, ciphertexts per result, nodes."""

    name = "transcript_length"

    def statistic(self, view, rng):
        entries = sum(len(q.entries) for q, _ in view.transcript)
        cts = sum(len(r.class_cts) for _, r in view.transcript)
        nodes = sum(len(t.nodes) for t in view.encml.trees)
        return entries + 1e-3 * cts + 1e-6 * nodes


class RandomGuessDistinguisher(Distinguisher):
    """Null baseline that ignores the view."""

    name = "random_guess"

    def statistic(self, view, rng):
        return rng.random()


class OpeMagnitudeDistinguisher(Distinguisher):
    """Spread of threshold ciphertexts relative to the OPE range.

    A deterministic OPE maps nearby plaintexts to nearby ciphertexts, so
    this tracks the plaintext spread that order leakage alone does not fix.
    Reported as a diagnostic, outside the battery.
    """

    name = "ope_magnitude_spread"

    def statistic(self, view, rng):
        cts = [n.threshold_ct for t in view.encml.trees for n in t.nodes.values() if isinstance(n, EncSplit)]
        if len(cts) < 2:
            return 0.0
        return (max(cts) - min(cts)) / float(1 << view.encml.ope_params.range_bits)


def battery() -> list[Distinguisher]:
    return [ThresholdRankDistinguisher(), QueryRankDistinguisher(), JointRankDistinguisher(),
            LeafMagnitudeDistinguisher(),
            PathFrequencyDistinguisher(), TranscriptLengthDistinguisher(), RandomGuessDistinguisher()]


def diagnostics() -> list[Distinguisher]:
    return [OpeMagnitudeDistinguisher()]


@dataclass
class Advantage:
    name: str
    accuracy: float
    advantage: float
    ci_low: float
    ci_high: float
    rounds: int

    @property
    def passed(self) -> bool:
        """Point estimate within the bound."""
        return self.advantage <= ADVANTAGE_BOUND

    @property
    def ci_within(self) -> bool:
        """The whole 95% interval within the bound (needs enough rounds)."""
        return self.ci_high <= ADVANTAGE_BOUND

    def line(self) -> str:
        return (f"{self.name:<26} adv={self.advantage:.3f} "
                f"95%CI=[{self.ci_low:.3f}, {self.ci_high:.3f}] n={self.rounds}")


def advantage_from(correct: int, rounds: int, name: str = "") -> Advantage:
    acc = correct / rounds
    adv = abs(acc - 0.5)
    half = 1.96 * math.sqrt(max(acc * (1 - acc), 1e-12) / rounds)
    return Advantage(name, acc, adv, max(0.0, adv - half), adv + half, rounds)


def fit_threshold(xs: Sequence[float], ys: Sequence[int]) -> tuple[float, int]:
    """Best single cut ``(t, s)``: guess ``1`` iff ``s * (x - t) > 0``."""
    pairs = sorted(zip(xs, ys))
    n = len(pairs)
    ones = sum(ys)
    best = (max(ones, n - ones), -math.inf, 1 if ones >= n - ones else -1)
    below_ones = 0
    for i, (x, y) in enumerate(pairs):
        below_ones += y
        if i + 1 < n and pairs[i + 1][0] == x:
            continue
        below = i + 1
        # guess 1 above the cut
        up = (below - below_ones) + (ones - below_ones)
        down = below_ones + (n - below - (ones - below_ones))
        cut = x if i + 1 == n else (x + pairs[i + 1][0]) / 2
        for acc, s in ((up, 1), (down, -1)):
            if acc > best[0]:
                best = (acc, cut, s)
    return best[1], best[2]


def guess(x: float, cut: tuple[float, int]) -> int:
    t, s = cut
    return int(s * (x - t) > 0) if math.isfinite(t) else int(s > 0)


ModelSource = Callable[[np.random.Generator], PlaintextModel]


def small_models(rng: np.random.Generator) -> PlaintextModel:
    """Adversary's model choice for the game: small random models of either objective."""
    objective = Objective.SOFTMAX if rng.random() < 0.25 else Objective.BINARY
    return random_model(rng, n_trees=int(rng.integers(1, 5)) * (3 if objective is Objective.SOFTMAX else 1),
                        max_depth=int(rng.integers(1, 4)), objective=objective, n_features=3)


@dataclass
class GameConfig:
    rounds: int = 1000
    train_rounds: int = 100
    m: int = 4
    k: int = 128
    seed: int = 0
    model_source: ModelSource = small_models
    simulator_kwargs: dict = field(default_factory=dict)


def _play(cfg: GameConfig, b: int, rng: np.random.Generator, prng: random.Random) -> View:
    model = cfg.model_source(rng)
    real = run_real(model, cfg.k, model.alpha, cfg.m, rng=rng)
    if b == 0:
        return real.view
    q = real.query_leakage
    return run_ideal(real.setup_leakage, lambda i: q.prefix(i + 1), cfg.k, cfg.m,
                     rng=random.Random(prng.getrandbits(64)), **cfg.simulator_kwargs)


def distinguisher_game(distinguishers: Sequence[Distinguisher] | None = None,
                       cfg: GameConfig | None = None) -> list[Advantage]:
    """Train every distinguisher, then play ``cfg.rounds`` rounds with a
    fresh hidden bit each round.  All distinguishers see the same views."""
    cfg = cfg or GameConfig()
    ds = list(distinguishers) if distinguishers is not None else battery()
    rng = np.random.default_rng(cfg.seed)
    prng = random.Random(cfg.seed)
    xs: list[list[float]] = [[] for _ in ds]
    ys: list[int] = []
    for i in range(2 * cfg.train_rounds):
        b = i % 2
        view = _play(cfg, b, rng, prng)
        ys.append(b)
        for j, d in enumerate(ds):
            xs[j].append(d.statistic(view, prng))
    cuts = [fit_threshold(x, ys) for x in xs]
    correct = [0] * len(ds)
    for _ in range(cfg.rounds):
        b = int(rng.integers(2))
        view = _play(cfg, b, rng, prng)
        for j, d in enumerate(ds):
            correct[j] += guess(d.statistic(view, prng), cuts[j]) == b
    return [advantage_from(c, cfg.rounds, d.name) for c, d in zip(correct, ds)]
