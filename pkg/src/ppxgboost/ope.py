"""Stateless order-preserving encryption in the style of Boldyreva et al.

The key lazily defines a random strictly increasing map from the domain
``[0, 2**domain_bits)`` into the range ``[0, 2**range_bits)``.  Encryption
walks down a binary split of the domain: for the current domain interval
``[dlo, dhi]`` placed inside the range interval ``[rlo, rhi]`` it samples the
image of the domain midpoint, then recurses into the half that contains the
plaintext.  Every sample is drawn from coins that depend only on the key and
the interval descriptor, so client and proxy agree without shared state.

The image of the midpoint is the ``(j+1)``-th smallest of ``M`` points chosen
without replacement from ``N`` range slots.  For ``M <= EXACT_LIMIT`` this is
sampled exactly (Floyd's subset sampling).  Above that a normal draw matching
the mean and variance of the order statistic is used; this only changes the
distribution of ciphertexts, never monotonicity or determinism.
"""

from __future__ import annotations

import hashlib
import hmac
import math
import secrets
import struct
from dataclasses import dataclass
from functools import lru_cache

from .errors import EncodingRangeError, InvalidCiphertextError, ParameterError

SUPPORTED_SECURITY = (128, 256)
EXACT_LIMIT = 32
_Z_DRAWS = 12  # Irwin-Hall approximation of a standard normal
_Z_BITS = 32


@dataclass(frozen=True)
class OpeParams:
    domain_bits: int = 40
    range_bits: int = 64

    def __post_init__(self):
        if self.domain_bits <= 0 or self.range_bits <= self.domain_bits:
            raise ParameterError("OPE requires 0 < domain_bits < range_bits")

    def to_dict(self) -> dict:
        return {"domain_bits": self.domain_bits, "range_bits": self.range_bits}

    @classmethod
    def from_dict(cls, d: dict) -> "OpeParams":
        return cls(int(d["domain_bits"]), int(d["range_bits"]))


@dataclass(frozen=True, repr=False)
class OpeKey:
    key: bytes

    def __repr__(self):
        return f"OpeKey(<{len(self.key)} bytes>)"

    def hex(self) -> str:
        return self.key.hex()

    @classmethod
    def fromhex(cls, s: str) -> "OpeKey":
        return cls(bytes.fromhex(s))


def ope_keygen(k: int = 128) -> OpeKey:
    if k not in SUPPORTED_SECURITY:
        raise ParameterError(f"unsupported security parameter k={k}; use one of {SUPPORTED_SECURITY}")
    return OpeKey(secrets.token_bytes(k // 8))


class _Coins:
    """Deterministic uniform integers from HMAC-SHA256 in counter mode."""

    def __init__(self, key: bytes, descriptor: bytes):
        self._key = key
        self._desc = descriptor
        self._buf = b""
        self._ctr = 0

    def _take(self, n: int) -> bytes:
        while len(self._buf) < n:
            self._buf += hmac.digest(self._key, self._desc + self._ctr.to_bytes(4, "big"), hashlib.sha256)
            self._ctr += 1
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def words32(self, count: int) -> tuple[int, ...]:
        return struct.unpack(f">{count}I", self._take(4 * count))

    def below(self, bound: int) -> int:
        if bound == 1:
            return 0
        bits = (bound - 1).bit_length()
        nbytes = (bits + 7) // 8
        mask = (1 << bits) - 1
        while True:
            v = int.from_bytes(self._take(nbytes), "big") & mask
            if v < bound:
                return v


class OpeCipher:
    """OPE bound to one key and parameter set.

    Midpoint images of the upper levels are shared by all plaintexts, so
    they are memoized per instance.
    """

    _MEMO_LIMIT = 1 << 16

    def __init__(self, key: OpeKey, params: OpeParams = OpeParams()):
        self.key = key
        self.params = params
        self._width = (params.range_bits + 7) // 8
        self._memo: dict[tuple[int, int, int, int], int] = {}

    def _descriptor(self, dlo, dhi, rlo, rhi) -> bytes:
        w = self._width
        return b"|".join([b"ope", dlo.to_bytes(w, "big"), dhi.to_bytes(w, "big"),
                          rlo.to_bytes(w, "big"), rhi.to_bytes(w, "big")])

    def _midpoint_image(self, dlo: int, dhi: int, rlo: int, rhi: int) -> int:
        ident = (dlo, dhi, rlo, rhi)
        y = self._memo.get(ident)
        if y is None:
            y = self._sample(dlo, dhi, rlo, rhi)
            if len(self._memo) >= self._MEMO_LIMIT:
                self._memo.clear()
            self._memo[ident] = y
        return y

    def _sample(self, dlo, dhi, rlo, rhi) -> int:
        m_size = dhi - dlo + 1
        n_size = rhi - rlo + 1
        j = (m_size - 1) // 2
        coins = _Coins(self.key.key, self._descriptor(dlo, dhi, rlo, rhi))
        if m_size <= EXACT_LIMIT:
            chosen: set[int] = set()
            for t in range(n_size - m_size, n_size):
                v = coins.below(t + 1)
                chosen.add(t if v in chosen else v)
            return rlo + sorted(chosen)[j]
        free = n_size - m_size
        mean = free * (j + 1) // (m_size + 1)
        var = free * (j + 1) * (m_size - j) * (n_size + 1) // ((m_size + 1) ** 2 * (m_size + 2))
        sd = math.isqrt(var)
        z = sum(coins.words32(_Z_DRAWS)) - (_Z_DRAWS // 2 << _Z_BITS)
        gap = min(max(mean + ((sd * z) >> _Z_BITS), 0), free)
        return rlo + j + gap

    def encrypt(self, m: int) -> int:
        p = self.params
        if not 0 <= m < (1 << p.domain_bits):
            raise EncodingRangeError(f"OPE plaintext {m} outside [0, 2**{p.domain_bits})")
        dlo, dhi, rlo, rhi = 0, (1 << p.domain_bits) - 1, 0, (1 << p.range_bits) - 1
        while True:
            dm = dlo + (dhi - dlo) // 2
            y = self._midpoint_image(dlo, dhi, rlo, rhi)
            if m == dm:
                return y
            if m < dm:
                dhi, rhi = dm - 1, y - 1
            else:
                dlo, rlo = dm + 1, y + 1

    def decrypt(self, c: int) -> int:
        p = self.params
        if not 0 <= c < (1 << p.range_bits):
            raise InvalidCiphertextError(f"OPE ciphertext outside [0, 2**{p.range_bits})")
        dlo, dhi, rlo, rhi = 0, (1 << p.domain_bits) - 1, 0, (1 << p.range_bits) - 1
        while dlo <= dhi:
            dm = dlo + (dhi - dlo) // 2
            y = self._midpoint_image(dlo, dhi, rlo, rhi)
            if c == y:
                return dm
            if c < y:
                dhi, rhi = dm - 1, y - 1
            else:
                dlo, rlo = dm + 1, y + 1
        raise InvalidCiphertextError("value is not in the image of this OPE key")


@lru_cache(maxsize=32)
def _cipher(key: OpeKey, params: OpeParams) -> OpeCipher:
    return OpeCipher(key, params)


def ope_encrypt(key: OpeKey, params: OpeParams, m: int) -> int:
    return _cipher(key, params).encrypt(m)


def ope_decrypt(key: OpeKey, params: OpeParams, c: int) -> int:
    return _cipher(key, params).decrypt(c)
