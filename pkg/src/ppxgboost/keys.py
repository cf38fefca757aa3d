"""The per-user secret bundle the proxy hands to a client."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

from .artifacts import Objective
from .encoding import EncodingParams
from .errors import ContractError
from .ope import OpeCipher, OpeKey, OpeParams
from .paillier import ShePrivateKey
from .prf import PrfKey

BUNDLE_VERSION = 1


@dataclass(frozen=True, repr=False)
class KeyBundle:
    user_id: str
    ope_key: OpeKey
    prf_key: PrfKey
    she_private: ShePrivateKey
    alpha: float
    objective: Objective
    num_classes: int
    encoding: EncodingParams = field(default_factory=EncodingParams)
    ope_params: OpeParams = field(default_factory=OpeParams)
    base_score: float = 0.0

    def __repr__(self):
        return f"KeyBundle(user_id={self.user_id!r}, <secret>)"

    @cached_property
    def ope(self) -> OpeCipher:
        return OpeCipher(self.ope_key, self.ope_params)

    def to_dict(self) -> dict:
        return {
            "version": BUNDLE_VERSION, "user_id": self.user_id,
            "ope_key": self.ope_key.hex(), "prf_key": self.prf_key.hex(),
            "she_private": self.she_private.to_dict(), "alpha": self.alpha,
            "objective": Objective(self.objective).value, "num_classes": self.num_classes,
            "base_score": self.base_score, "encoding": self.encoding.to_dict(),
            "ope_params": self.ope_params.to_dict(),
        }

    def to_json(self) -> bytes:
        return json.dumps(self.to_dict(), separators=(",", ":")).encode()

    @classmethod
    def from_dict(cls, d: dict) -> "KeyBundle":
        try:
            return cls(d["user_id"], OpeKey.fromhex(d["ope_key"]), PrfKey.fromhex(d["prf_key"]),
                       ShePrivateKey.from_dict(d["she_private"]), float(d["alpha"]),
                       Objective(d["objective"]), int(d["num_classes"]),
                       EncodingParams.from_dict(d["encoding"]), OpeParams.from_dict(d["ope_params"]),
                       float(d.get("base_score", 0.0)))
        except (KeyError, TypeError, ValueError) as e:
            raise ContractError(f"malformed key bundle: {e!r}") from None

    @classmethod
    def from_json(cls, data: bytes | str) -> "KeyBundle":
        return cls.from_dict(json.loads(data))

    def save(self, path: str | os.PathLike) -> None:
        """Write the bundle readable by the owner only."""
        path = Path(path)
        fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        with os.fdopen(fd, "wb") as fh:
            fh.write(self.to_json())
        os.chmod(path, 0o600)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "KeyBundle":
        return cls.from_json(Path(path).read_bytes())
