"""Fixed-point quantization between real values and the integer domains used
by order-preserving encryption (features, thresholds) and Paillier (scores).

Features are scaled by ``2**feature_scale_bits``, rounded half-up and shifted
by half the feature domain so that signed reals map to unsigned integers with
their order intact.  Scores are scaled by ``2**score_scale_bits`` and lifted
into ``Z_n`` with a centered (two's-complement style) encoding.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import EncodingRangeError, ParameterError


@dataclass(frozen=True)
class EncodingParams:
    feature_scale_bits: int = 16
    score_scale_bits: int = 24
    feature_domain_bits: int = 40
    max_leaf_terms: int = 2**16

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
                raise ParameterError(f"{name} must be a positive integer, got {value!r}")
        if self.feature_domain_bits <= self.feature_scale_bits:
            raise ParameterError("feature_domain_bits must exceed feature_scale_bits")
        if self.score_scale_bits >= 63:
            raise ParameterError("score_scale_bits must leave room for an integer part")

    @property
    def max_score_magnitude_bits(self) -> int:
        # quantized scores are bounded by 2**63 (see quantize_score)
        return 63

    def required_modulus_bits(self) -> int:
        """Smallest Paillier modulus size that can hold ``max_leaf_terms``
        summed scores plus a sign bit."""
        return self.max_score_magnitude_bits + math.ceil(math.log2(self.max_leaf_terms)) + 2

    def check_modulus(self, modulus: int) -> None:
        if modulus.bit_length() < self.required_modulus_bits():
            raise ParameterError(
                f"modulus of {modulus.bit_length()} bits cannot hold "
                f"{self.max_leaf_terms} summed scores"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EncodingParams":
        return cls(**{k: int(d[k]) for k in
                      ("feature_scale_bits", "score_scale_bits",
                       "feature_domain_bits", "max_leaf_terms")})


DEFAULT_PARAMS = EncodingParams()


def _round_half_up(v: float) -> int:
    # floor(v + 0.5) commutes with integer shifts, unlike round-half-even,
    # so a gap of one quantum between reals survives quantization.
    return math.floor(v + 0.5)


def quantize_feature(x: float, p: EncodingParams = DEFAULT_PARAMS) -> int:
    """Map a real feature value or threshold into ``[0, 2**feature_domain_bits)``.

    >>> quantize_feature(0.0) == 2**39
    True
    """
    bound = 2.0 ** (p.feature_domain_bits - p.feature_scale_bits - 1)
    if not math.isfinite(x) or abs(x) >= bound:
        raise EncodingRangeError(
            f"feature value {x!r} outside the feature domain (|x| < 2**"
            f"{p.feature_domain_bits - p.feature_scale_bits - 1})"
        )
    q = _round_half_up(x * (1 << p.feature_scale_bits)) + (1 << (p.feature_domain_bits - 1))
    # rounding can push a value just under the bound onto the top edge
    return min(max(q, 0), (1 << p.feature_domain_bits) - 1)


def quantize_score(y: float, p: EncodingParams = DEFAULT_PARAMS) -> int:
    if not math.isfinite(y) or abs(y) >= 2.0 ** (63 - p.score_scale_bits):
        raise EncodingRangeError(f"score {y!r} overflows 63-bit fixed point")
    return _round_half_up(y * (1 << p.score_scale_bits))


def dequantize_score(s: int, p: EncodingParams = DEFAULT_PARAMS) -> float:
    # exact inverse of quantize_score while |s| < 2**52
    return s / (1 << p.score_scale_bits)


def encode_signed(v: int, modulus: int, max_leaf_terms: int = DEFAULT_PARAMS.max_leaf_terms) -> int:
    """Lift a signed integer into ``[0, modulus)`` so that up to
    ``max_leaf_terms`` such residues can be summed without wrap-around."""
    if 2 * max_leaf_terms * abs(v) >= modulus:
        raise EncodingRangeError(
            f"|{v}| too large for {max_leaf_terms} summands modulo a "
            f"{modulus.bit_length()}-bit modulus"
        )
    return v % modulus


def decode_signed(r: int, modulus: int) -> int:
    """Centered lift: residues above ``modulus // 2`` are negative."""
    r %= modulus
    return r - modulus if r > modulus // 2 else r
