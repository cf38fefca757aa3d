import hashlib
import hmac

import pytest
from hypothesis import given, strategies as st

from ppxgboost.errors import ParameterError
from ppxgboost.prf import PrfKey, prf_keygen, pseudonym

# RFC 4231 test case 2
RFC_KEY = b"Jefe"
RFC_MSG = "what do ya want for nothing?"
RFC_MAC = "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"


def test_known_answer():
    assert pseudonym(PrfKey(RFC_KEY), RFC_MSG) == RFC_MAC[:32]


@given(st.binary(min_size=16, max_size=32), st.text(min_size=1))
def test_matches_stdlib_hmac(key, name):
    expect = hmac.new(key, name.encode(), hashlib.sha256).hexdigest()[:32]
    assert pseudonym(PrfKey(key), name) == expect


def test_deterministic_and_key_dependent():
    k1, k2 = prf_keygen(), prf_keygen()
    assert pseudonym(k1, "Age") == pseudonym(k1, "Age")
    assert pseudonym(k1, "Age") != pseudonym(k2, "Age")
    assert pseudonym(k1, "Age") != pseudonym(k1, "Fare")


def test_no_collisions_on_many_names():
    k = prf_keygen()
    names = [f"feature_{i}" for i in range(10_000)]
    assert len({pseudonym(k, n) for n in names}) == len(names)


def test_keygen_sizes_and_errors():
    assert len(prf_keygen(128).key) == 16
    assert len(prf_keygen(256).key) == 32
    with pytest.raises(ParameterError):
        prf_keygen(64)
    with pytest.raises(ValueError):
        pseudonym(prf_keygen(), "")


def test_repr_hides_key():
    k = prf_keygen()
    assert k.hex() not in repr(k)
    assert PrfKey.fromhex(k.hex()) == k
