"""
Circular (ECFP-style) fingerprints and Tanimoto similarity.

Environment identifiers are 64-bit FNV-1a hashes over little-endian
uint64 words, so bit positions are identical on every platform and run.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

from .smiles import InvalidSmiles, Molecule, atom_invariant, canonicalize, parse

__all__ = [
    "DEFAULT_PARAMS",
    "Fingerprint",
    "FingerprintParams",
    "GoldInvalid",
    "InvalidParameter",
    "ParameterMismatch",
    "environment_ids",
    "fingerprint",
    "fnv1a_64",
    "similarity_of_smiles",
    "tanimoto",
]

MAX_RADIUS = 16
_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


class InvalidParameter(ValueError):
    pass


class ParameterMismatch(ValueError):
    pass


class GoldInvalid(ValueError):
    """The reference SMILES of a benchmark record does not parse."""

    def __init__(self, smiles: str, reason: str = "", record_id: str | None = None):
        self.smiles = smiles
        self.reason = reason
        self.record_id = record_id
        where = f" (record {record_id})" if record_id is not None else ""
        super().__init__(f"gold SMILES {smiles!r} is invalid{where}: {reason}")


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def hash_words(words: Sequence[int]) -> int:
    """Hash a sequence of integers, each packed as a two's-complement uint64."""
    return fnv1a_64(struct.pack(f"<{len(words)}Q", *(w & _MASK64 for w in words)))


def check_params(radius: int, width: int) -> None:
    if width <= 0:
        raise InvalidParameter(f"width must be positive, got {width}")
    if width < 64 or width & (width - 1):
        raise InvalidParameter(f"width must be a power of two >= 64, got {width}")
    if not 0 <= radius <= MAX_RADIUS:
        raise InvalidParameter(f"radius must be in [0, {MAX_RADIUS}], got {radius}")


@dataclass(frozen=True)
class FingerprintParams:
    radius: int = 2
    width: int = 2048

    def __post_init__(self) -> None:
        check_params(self.radius, self.width)


DEFAULT_PARAMS = FingerprintParams()


@dataclass(frozen=True)
class Fingerprint:
    bits: int
    width: int
    radius: int

    @property
    def n_set(self) -> int:
        return self.bits.bit_count()

    def on_bits(self) -> list[int]:
        return [i for i in range(self.width) if self.bits >> i & 1]


def environment_ids(mol: Molecule, radius: int) -> list[list[int]]:
    """Identifier of every atom's environment, one list per radius ``0..radius``.

    Iteration ``r`` hashes ``(r, own id, sorted (bond order, neighbor id) pairs)``
    from the identifiers of iteration ``r - 1``.
    """
    adj = mol.adjacency
    layer = [hash_words(atom_invariant(mol, i)) for i in range(len(mol))]
    layers = [layer]
    for r in range(1, radius + 1):
        prev = layers[-1]
        layer = []
        for i in range(len(mol)):
            pairs = sorted((int(order), prev[j]) for j, order in adj[i])
            words = [r, prev[i]]
            for order, nid in pairs:
                words.extend((order, nid))
            layer.append(hash_words(words))
        layers.append(layer)
    return layers


def fold(ids: Iterable[int], width: int, radius: int) -> Fingerprint:
    bits = 0
    for ident in ids:
        bits |= 1 << (ident % width)
    return Fingerprint(bits, width, radius)


def fingerprint(mol: Molecule, radius: int = 2, width: int = 2048) -> Fingerprint:
    check_params(radius, width)
    ids = {ident for layer in environment_ids(mol, radius) for ident in layer}
    return fold(ids, width, radius)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    if a.width != b.width or a.radius != b.radius:
        raise ParameterMismatch(
            f"cannot compare width={a.width}/radius={a.radius} "
            f"with width={b.width}/radius={b.radius}"
        )
    union = (a.bits | b.bits).bit_count()
    if union == 0:
        return 1.0
    return (a.bits & b.bits).bit_count() / union


def similarity_of_smiles(
    pred: str | None,
    gold: str,
    params: FingerprintParams = DEFAULT_PARAMS,
) -> float:
    """Tanimoto similarity of a predicted SMILES against the reference.

    Unparsable or missing predictions score 0.0. Predictions that
    canonicalize to the reference score exactly 1.0.
    """
    try:
        gold_mol = parse(gold)
    except InvalidSmiles as exc:
        raise GoldInvalid(gold, exc.reason) from exc
    if pred is None:
        return 0.0
    try:
        pred_mol = parse(pred)
    except (InvalidSmiles, TypeError):
        return 0.0
    if canonicalize(pred) == canonicalize(gold):
        return 1.0
    return tanimoto(
        fingerprint(pred_mol, params.radius, params.width),
        fingerprint(gold_mol, params.radius, params.width),
    )
