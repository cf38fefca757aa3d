"""Privacy-preserving inference for boosted tree ensembles.

A proxy encrypts a trained model once per user: split thresholds under an
order-preserving cipher, leaf values under Paillier, feature names under a
keyed pseudonym.  The server walks the encrypted trees with an encrypted
query and adds the reached leaves homomorphically; only the user can
decrypt the sum.

Names are loaded on first access so that importing one submodule (say the
server-side ``inference``) does not pull in the others.
"""

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "EncryptedModel": "artifacts", "EncryptedQuery": "artifacts", "EncryptedResult": "artifacts",
    "Objective": "artifacts", "TraversalRecord": "artifacts",
    "decrypt_result": "client", "encrypt_query": "client", "interpret_result": "client",
    "EncodingParams": "encoding",
    "infer": "inference", "infer_audited": "inference",
    "KeyBundle": "keys",
    "PlaintextModel": "model", "evaluate_model": "model", "interpret": "model", "pad_model": "model",
    "parse_model": "model", "serialize_model": "model",
    "setup_user": "proxy",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    if name in _EXPORTS:
        return getattr(import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
