"""Paillier additively homomorphic encryption (``g = n + 1`` variant).

Ciphertexts are plain Python ints in ``[1, n**2)``.  Big-integer modular
exponentiation is delegated to gmpy2.
"""

from __future__ import annotations

import math
import secrets
from dataclasses import dataclass, field
from typing import Iterable

import gmpy2

from .errors import EncodingRangeError, InvalidCiphertextError, ParameterError, PPXGBoostError

# security parameter -> modulus bits
MODULUS_BITS = {80: 512, 112: 2048, 128: 2048, 192: 3072, 256: 3072}
TEST_MODULUS_BITS = 512
MIN_MODULUS_BITS = 512


@dataclass(frozen=True)
class ShePublicKey:
    n: int
    g: int = 0
    nsquare: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.g == 0:
            object.__setattr__(self, "g", self.n + 1)
        object.__setattr__(self, "nsquare", self.n * self.n)

    @property
    def bits(self) -> int:
        return self.n.bit_length()

    def to_dict(self) -> dict:
        return {"n": format(self.n, "x"), "g": format(self.g, "x")}

    @classmethod
    def from_dict(cls, d: dict) -> "ShePublicKey":
        return cls(int(d["n"], 16), int(d["g"], 16))


@dataclass(frozen=True, repr=False)
class ShePrivateKey:
    """Decryption key.  ``p`` and ``q`` are kept for CRT acceleration."""

    public: ShePublicKey
    lam: int
    mu: int
    p: int
    q: int

    def __repr__(self):
        return f"ShePrivateKey(<{self.public.bits}-bit modulus>)"

    def to_dict(self) -> dict:
        return {"n": format(self.public.n, "x"), "lambda": format(self.lam, "x"),
                "mu": format(self.mu, "x"), "p": format(self.p, "x"), "q": format(self.q, "x")}

    @classmethod
    def from_dict(cls, d: dict) -> "ShePrivateKey":
        return cls(ShePublicKey(int(d["n"], 16)), int(d["lambda"], 16), int(d["mu"], 16),
                   int(d["p"], 16), int(d["q"], 16))


def modulus_bits_for(k: int, test_mode: bool = False) -> int:
    if test_mode:
        return TEST_MODULUS_BITS
    try:
        return MODULUS_BITS[k]
    except KeyError:
        raise ParameterError(f"no Paillier modulus size for security parameter k={k}") from None


def _prime(bits: int) -> int:
    # top two bits set so the product has exactly 2*bits bits
    candidate = secrets.randbits(bits) | (3 << (bits - 2)) | 1
    return int(gmpy2.next_prime(candidate))


def she_keygen(k: int = 128, *, modulus_bits: int | None = None,
               test_mode: bool = False) -> tuple[ShePublicKey, ShePrivateKey]:
    bits = modulus_bits or modulus_bits_for(k, test_mode)
    if bits < MIN_MODULUS_BITS or bits % 2:
        raise ParameterError(f"modulus must be an even number of bits >= {MIN_MODULUS_BITS}")
    while True:
        p, q = _prime(bits // 2), _prime(bits // 2)
        n = p * q
        if p != q and n.bit_length() == bits and math.gcd(n, (p - 1) * (q - 1)) == 1:
            break
    pk = ShePublicKey(n)
    lam = math.lcm(p - 1, q - 1)
    mu = pow(lam, -1, n)
    sk = ShePrivateKey(pk, lam, mu, p, q)
    probe = secrets.randbelow(n)
    if she_decrypt(sk, she_encrypt(pk, probe)) != probe:
        raise PPXGBoostError("Paillier key pair failed its probe round-trip")
    return pk, sk


def _random_unit(n: int) -> int:
    while True:
        r = secrets.randbelow(n - 1) + 1
        if math.gcd(r, n) == 1:
            return r


def _obfuscator(pk: ShePublicKey, r: int, sk: ShePrivateKey | None) -> int:
    if sk is None:
        return int(gmpy2.powmod(r, pk.n, pk.nsquare))
    # r^n mod n^2 via CRT over p^2 and q^2
    p2, q2 = sk.p * sk.p, sk.q * sk.q
    rp = gmpy2.powmod(r, pk.n % (sk.p * (sk.p - 1)), p2)
    rq = gmpy2.powmod(r, pk.n % (sk.q * (sk.q - 1)), q2)
    return int((rq + q2 * ((rp - rq) * gmpy2.invert(q2, p2) % p2)) % pk.nsquare)


def she_encrypt(pk: ShePublicKey, m: int, *, private: ShePrivateKey | None = None) -> int:
    """Encrypt a residue ``0 <= m < n``.

    Passing the matching ``private`` key only speeds the computation up
    (the proxy holds it); the ciphertext distribution is unchanged.
    """
    if not 0 <= m < pk.n:
        raise EncodingRangeError("Paillier plaintext must lie in [0, n)")
    r = _random_unit(pk.n)
    return (1 + m * pk.n) % pk.nsquare * _obfuscator(pk, r, private) % pk.nsquare


def she_decrypt(sk: ShePrivateKey, c: int) -> int:
    pk = sk.public
    if not 0 < c < pk.nsquare or math.gcd(c, pk.n) != 1:
        raise InvalidCiphertextError("Paillier ciphertext outside Z*_{n^2}")
    x = int(gmpy2.powmod(c, sk.lam, pk.nsquare))
    return (x - 1) // pk.n * sk.mu % pk.n


def she_eval_add(pk: ShePublicKey, cs: Iterable[int]) -> int:
    """Ciphertext whose plaintext is the sum (mod n) of the inputs' plaintexts."""
    acc = None
    for c in cs:
        acc = c % pk.nsquare if acc is None else acc * c % pk.nsquare
    if acc is None:
        raise ValueError("homomorphic sum needs at least one ciphertext")
    return acc
