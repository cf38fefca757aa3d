import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from ppxgboost.errors import EncodingRangeError, InvalidCiphertextError, ParameterError
from ppxgboost.paillier import (ShePrivateKey, ShePublicKey, modulus_bits_for, she_decrypt,
                                she_encrypt, she_eval_add, she_keygen)


def toy_key():
    p, q = 17, 19
    n = p * q
    lam = math.lcm(p - 1, q - 1)
    return ShePrivateKey(ShePublicKey(n), lam, pow(lam, -1, n), p, q)


def textbook_decrypt(n, lam, c):
    # independent oracle: L(c^lam) / L(g^lam) with g = n + 1
    L = lambda u: (u - 1) // n
    mu = pow(L(pow(n + 1, lam, n * n)), -1, n)
    return L(pow(c, lam, n * n)) * mu % n


def test_hand_computed_vector():
    sk = toy_key()
    n = 323
    c = (1 + 42 * n) * pow(5, n, n * n) % (n * n)
    assert she_decrypt(sk, c) == 42
    assert textbook_decrypt(n, sk.lam, c) == 42


def test_toy_key_exhaustive():
    sk = toy_key()
    for m in range(323):
        c = she_encrypt(sk.public, m)
        assert she_decrypt(sk, c) == m == textbook_decrypt(323, sk.lam, c)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0))
def test_round_trip_against_oracle(test_keys, m):
    pk, sk = test_keys
    m %= pk.n
    for c in (she_encrypt(pk, m), she_encrypt(pk, m, private=sk)):
        assert she_decrypt(sk, c) == m
        assert textbook_decrypt(pk.n, sk.lam, c) == m


def test_crt_and_plain_encryption_agree_in_law(test_keys):
    pk, sk = test_keys
    # same plaintext, both paths decrypt correctly and are randomized
    cs = {she_encrypt(pk, 7, private=sk) for _ in range(5)} | {she_encrypt(pk, 7) for _ in range(5)}
    assert len(cs) == 10
    assert {she_decrypt(sk, c) for c in cs} == {7}


def test_additive_homomorphism(test_keys):
    pk, sk = test_keys
    rng = random.Random(1)
    for _ in range(20):
        ms = [rng.randrange(pk.n) for _ in range(rng.randint(1, 30))]
        c = she_eval_add(pk, [she_encrypt(pk, m, private=sk) for m in ms])
        assert she_decrypt(sk, c) == sum(ms) % pk.n


def test_errors(test_keys):
    pk, sk = test_keys
    with pytest.raises(EncodingRangeError):
        she_encrypt(pk, pk.n)
    with pytest.raises(EncodingRangeError):
        she_encrypt(pk, -1)
    for bad in (0, pk.nsquare, pk.n, pk.n * 3):
        with pytest.raises(InvalidCiphertextError):
            she_decrypt(sk, bad)
    with pytest.raises(ValueError):
        she_eval_add(pk, [])
    with pytest.raises(ParameterError):
        she_keygen(modulus_bits=256)
    with pytest.raises(ParameterError):
        modulus_bits_for(100)


def test_modulus_sizes():
    assert modulus_bits_for(128) == 2048
    assert modulus_bits_for(128, test_mode=True) == 512
    pk, sk = she_keygen(modulus_bits=1024)
    assert pk.n.bit_length() == 1024
    assert sk.p * sk.q == pk.n


def test_serialization_and_repr(test_keys):
    pk, sk = test_keys
    assert ShePublicKey.from_dict(pk.to_dict()) == pk
    assert ShePrivateKey.from_dict(sk.to_dict()) == sk
    assert format(sk.lam, "x") not in repr(sk)
