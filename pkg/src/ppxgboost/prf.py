"""Keyed pseudonyms for feature names (HMAC-SHA256 truncated to 128 bits)."""

from __future__ import annotations

import hashlib
import hmac
import secrets
from dataclasses import dataclass

from .errors import ParameterError

SUPPORTED_SECURITY = (128, 256)


@dataclass(frozen=True, repr=False)
class PrfKey:
    key: bytes

    def __repr__(self):
        return f"PrfKey(<{len(self.key)} bytes>)"

    def hex(self) -> str:
        return self.key.hex()

    @classmethod
    def fromhex(cls, s: str) -> "PrfKey":
        return cls(bytes.fromhex(s))


def prf_keygen(k: int = 128) -> PrfKey:
    if k not in SUPPORTED_SECURITY:
        raise ParameterError(f"unsupported security parameter k={k}; use one of {SUPPORTED_SECURITY}")
    return PrfKey(secrets.token_bytes(k // 8))


def pseudonym(key: PrfKey, feature_name: str | bytes) -> str:
    """Deterministic 32-hex-character pseudonym of ``feature_name`` under ``key``."""
    if isinstance(feature_name, str):
        feature_name = feature_name.encode("utf-8")
    if not feature_name:
        raise ValueError("feature name must be non-empty")
    return hmac.digest(key.key, feature_name, hashlib.sha256)[:16].hex()
