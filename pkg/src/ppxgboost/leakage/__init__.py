"""Leakage profile, Real and Ideal experiments, and distinguishers.

Exports load lazily: the simulator in ``ideal`` can be imported without the
plaintext-model modules that ``real`` needs.
"""

from importlib import import_module

_EXPORTS = {
    "ADVANTAGE_BOUND": "game", "Advantage": "game", "GameConfig": "game", "battery": "game",
    "diagnostics": "game", "distinguisher_game": "game",
    "Simulator": "ideal", "run_ideal": "ideal",
    "QueryLeakage": "profile", "SetupLeakage": "profile", "View": "profile", "extract_leakage": "profile",
    "AdaptiveQuerySource": "real", "RealRun": "real", "leak_query": "real", "leak_setup": "real",
    "run_real": "real",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    if name in _EXPORTS:
        return getattr(import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
