"""Exception hierarchy shared by every layer of the package."""


class PPXGBoostError(Exception):
    """Base class for all errors raised by ppxgboost."""


class ParameterError(PPXGBoostError, ValueError):
    """A parameter (security level, bit width, depth, ...) is unsupported."""


class EncodingRangeError(PPXGBoostError, ValueError):
    """A value does not fit the fixed-point or residue domain."""


class InvalidCiphertextError(PPXGBoostError, ValueError):
    """A ciphertext is outside its space or not in the image of a key."""


class ModelParseError(PPXGBoostError, ValueError):
    """A tree dump is malformed; the message carries the node path."""


class IntegrityError(PPXGBoostError):
    """An encrypted artifact is structurally corrupt."""


class ContractError(PPXGBoostError, ValueError):
    """Inputs are individually valid but inconsistent with each other."""


class NotFoundError(PPXGBoostError, LookupError):
    """Unknown model or user id."""


class ConflictError(PPXGBoostError):
    """A user has already been provisioned."""


class HarnessError(PPXGBoostError):
    """Leakage supplied to the simulator is inconsistent."""
