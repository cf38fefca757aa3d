"""Setup phase run by the trusted proxy: fresh keys per user and the
user's encrypted model.

Each internal node keeps its topology, gets its feature name replaced by a
keyed pseudonym and its threshold replaced by the OPE encryption of the
quantized threshold.  Each leaf value is quantized, lifted into ``Z_n`` and
Paillier-encrypted.
"""

from __future__ import annotations

import numpy as np

from .artifacts import EncCart, EncLeaf, EncNode, EncSplit, EncryptedModel
from .encoding import EncodingParams, encode_signed, quantize_feature, quantize_score
from .errors import ContractError, EncodingRangeError
from .keys import KeyBundle
from .model import Cart, Leaf, PlaintextModel, pad_model
from .ope import OpeParams, ope_keygen
from .paillier import ShePublicKey, she_encrypt, she_keygen
from .prf import prf_keygen, pseudonym


def encrypt_tree(tree: Cart, bundle: KeyBundle, pk: ShePublicKey,
                 _names: dict[str, str] | None = None) -> EncCart:
    """Node-for-node encryption of an (already padded) tree; ids are kept."""
    names = {} if _names is None else _names
    enc = bundle.encoding
    n = pk.n
    nodes: dict[int, EncNode] = {}
    for nid, node in tree.nodes.items():
        try:
            if isinstance(node, Leaf):
                m = encode_signed(quantize_score(node.value, enc), n, enc.max_leaf_terms)
                nodes[nid] = EncLeaf(nid, she_encrypt(pk, m, private=bundle.she_private))
            else:
                if node.feature not in names:
                    names[node.feature] = pseudonym(bundle.prf_key, node.feature)
                ct = bundle.ope.encrypt(quantize_feature(node.threshold, enc))
                nodes[nid] = EncSplit(nid, names[node.feature], ct, node.yes, node.no, node.missing)
        except EncodingRangeError as e:
            raise EncodingRangeError(f"node {nid}: {e}") from None
    return EncCart(tree.root, nodes)


def setup_user(model: PlaintextModel, k: int = 128, user_id: str = "user", *,
               pad: bool = True, test_mode: bool = False, modulus_bits: int | None = None,
               encoding: EncodingParams | None = None, ope_params: OpeParams | None = None,
               rng: np.random.Generator | None = None) -> tuple[EncryptedModel, KeyBundle]:
    """Generate the user's keys and encrypted model.

    With ``pad`` (default) every tree is first padded to the deepest tree's
    depth so that all encrypted trees have the same shape.  Pass a model
    already padded with :func:`ppxgboost.model.pad_model` to keep track of
    the exact source of the encrypted trees.
    """
    if not model.trees:
        raise ContractError("model has no trees")
    encoding = encoding or EncodingParams()
    ope_params = ope_params or OpeParams(domain_bits=encoding.feature_domain_bits)
    if ope_params.domain_bits != encoding.feature_domain_bits:
        raise ContractError("OPE domain must match the feature quantization domain")
    if len(model.trees) > encoding.max_leaf_terms:
        raise ContractError(f"{len(model.trees)} trees exceed max_leaf_terms={encoding.max_leaf_terms}")
    if pad:
        model = pad_model(model, rng=rng)

    sym_k = 128 if k <= 128 else 256  # symmetric keys never drop below 128 bits
    ope_key = ope_keygen(sym_k)
    pk, sk = she_keygen(k, modulus_bits=modulus_bits, test_mode=test_mode)
    encoding.check_modulus(pk.n)
    prf_key = prf_keygen(sym_k)
    bundle = KeyBundle(user_id, ope_key, prf_key, sk, model.alpha, model.objective,
                       model.num_classes, encoding, ope_params, model.base_score)

    names: dict[str, str] = {}
    trees = [encrypt_tree(t, bundle, pk, names) for t in model.trees]
    encml = EncryptedModel(user_id, pk, model.objective, model.num_classes, encoding, ope_params, trees)
    return encml, bundle
