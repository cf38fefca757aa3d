"""Client side of the query phase: encrypt a query, decrypt and interpret
the server's answer."""

from __future__ import annotations

import math
from typing import Mapping, Sequence

from .artifacts import EncryptedQuery, EncryptedResult, Objective
from .encoding import decode_signed, dequantize_score, quantize_feature
from .errors import ContractError, EncodingRangeError
from .keys import KeyBundle
from .model import Prediction, interpret_scores
from .paillier import she_decrypt
from .prf import pseudonym


def encrypt_query(bundle: KeyBundle, q: Mapping[str, float]) -> EncryptedQuery:
    """Pseudonymize names and OPE-encrypt values.  Features absent from
    ``q`` stay absent, which the server treats as missing values."""
    entries = {}
    for name, value in q.items():
        if value is None:
            continue
        if not math.isfinite(value):
            raise EncodingRangeError(f"feature {name!r}: value must be finite")
        try:
            m = quantize_feature(value, bundle.encoding)
        except EncodingRangeError as e:
            raise EncodingRangeError(f"feature {name!r}: {e}") from None
        entries[pseudonym(bundle.prf_key, name)] = bundle.ope.encrypt(m)
    return EncryptedQuery(entries)


def decrypt_result(bundle: KeyBundle, r: EncryptedResult) -> list[float]:
    expected = bundle.num_classes if Objective(bundle.objective) is Objective.SOFTMAX else 1
    if len(r.class_cts) != expected:
        raise ContractError(f"expected {expected} ciphertexts, got {len(r.class_cts)}")
    n = bundle.she_private.public.n
    return [bundle.base_score + dequantize_score(decode_signed(she_decrypt(bundle.she_private, c), n),
                                                 bundle.encoding)
            for c in r.class_cts]


def interpret_result(scores: Sequence[float], bundle: KeyBundle) -> Prediction:
    return interpret_scores(scores, bundle.objective, bundle.num_classes, bundle.alpha)
