"""
Bit-packed hash codes and Hamming-distance ranking.

Code i occupies ⌈d/64⌉ 64-bit words; bit j lives in word j // 64 at
position j % 64 (least significant first). Padding bits are always zero.
"""

import math
from typing import Optional

import numpy as np
from pydantic import ConfigDict, Field, field_validator, model_validator

from core.errors import DimensionMismatchError
from core.models import ProxyHashModel
from core.utils import freeze
from hashing.layer import HashingLayer, embed

WORD_BITS = 64
_PAIR_BUDGET = 1 << 22


def num_words(bits: int) -> int:
    return math.ceil(bits / WORD_BITS)


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """n x d boolean matrix -> n x ⌈d/64⌉ uint64 words."""
    bits = np.atleast_2d(np.asarray(bits, dtype=bool))
    n, d = bits.shape
    padded = np.zeros((n, num_words(d) * WORD_BITS), dtype=bool)
    padded[:, :d] = bits
    packed = np.packbits(padded, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64)


def unpack_bits(words: np.ndarray, bits: int) -> np.ndarray:
    """Inverse of `pack_bits`: n x d boolean matrix."""
    words = np.atleast_2d(np.asarray(words, dtype=np.uint64))
    raw = np.ascontiguousarray(words.astype("<u8")).view(np.uint8)
    return np.unpackbits(raw, axis=1, bitorder="little")[:, :bits].astype(bool)


class BinaryCodeDatabase(ProxyHashModel):
    """n packed d-bit codes with the relevance payload of every item."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    words: np.ndarray = Field(description="n x ⌈d/64⌉ uint64 matrix.")
    bits: int = Field(ge=1, description="Code length d.")
    labels: Optional[np.ndarray] = Field(default=None, description="0-based class per item.")
    tags: Optional[np.ndarray] = Field(default=None, description="n x T 0/1 tag matrix.")

    @field_validator("words", mode="before")
    @classmethod
    def _as_words(cls, value):
        value = np.asarray(value, dtype=np.uint64)
        if value.ndim != 2:
            raise DimensionMismatchError(f"code words must be an n x w matrix, got shape {value.shape}")
        return freeze(value)

    @field_validator("labels", mode="before")
    @classmethod
    def _as_labels(cls, value):
        return None if value is None else freeze(np.asarray(value, dtype=np.int64))

    @field_validator("tags", mode="before")
    @classmethod
    def _as_tags(cls, value):
        return None if value is None else freeze(np.asarray(value, dtype=np.uint8))

    @model_validator(mode="after")
    def _check(self):
        n, w = self.words.shape
        if w != num_words(self.bits):
            raise DimensionMismatchError(f"{self.bits}-bit codes need {num_words(self.bits)} words, got {w}")
        spare = w * WORD_BITS - self.bits
        if spare and n and np.any(self.words[:, -1] >> np.uint64(WORD_BITS - spare)):
            raise ValueError("padding bits beyond d must be zero")
        if self.labels is not None and self.labels.shape != (n,):
            raise DimensionMismatchError(f"{n} codes but {self.labels.shape} labels")
        if self.tags is not None and (self.tags.ndim != 2 or self.tags.shape[0] != n):
            raise DimensionMismatchError(f"{n} codes but tag matrix of shape {self.tags.shape}")
        return self

    @classmethod
    def from_bits(cls, bits: np.ndarray, labels=None, tags=None) -> "BinaryCodeDatabase":
        bits = np.atleast_2d(np.asarray(bits, dtype=bool))
        return cls(words=pack_bits(bits), bits=bits.shape[1], labels=labels, tags=tags)

    @property
    def num_codes(self) -> int:
        return self.words.shape[0]

    @property
    def payload(self) -> Optional[np.ndarray]:
        return self.tags if self.tags is not None else self.labels

    def to_bits(self) -> np.ndarray:
        return unpack_bits(self.words, self.bits)

    def to_signs(self) -> np.ndarray:
        """Codes as ±1 float rows (bit 1 -> +1)."""
        return np.where(self.to_bits(), 1.0, -1.0)

    def subset(self, indices: np.ndarray) -> "BinaryCodeDatabase":
        indices = np.asarray(indices)
        return BinaryCodeDatabase(words=self.words[indices], bits=self.bits,
                                  labels=None if self.labels is None else self.labels[indices],
                                  tags=None if self.tags is None else self.tags[indices])


class RankedList(ProxyHashModel):
    """Database indices by ascending Hamming distance, ties by index."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    indices: np.ndarray
    distances: np.ndarray

    @model_validator(mode="after")
    def _sorted(self):
        if self.indices.shape != self.distances.shape:
            raise DimensionMismatchError("indices and distances differ in length")
        if np.any(np.diff(self.distances) < 0):
            raise ValueError("distances must be non-decreasing")
        return self


def encode_embeddings(nu: np.ndarray, labels=None, tags=None) -> BinaryCodeDatabase:
    """Bit j set iff ν_j ≥ 0."""
    return BinaryCodeDatabase.from_bits(np.atleast_2d(nu) >= 0, labels=labels, tags=tags)


def encode(layer: HashingLayer, features: np.ndarray, labels=None, tags=None) -> BinaryCodeDatabase:
    """b(x) = sgn(ν(x)) for every row, packed."""
    return encode_embeddings(embed(layer, features), labels=labels, tags=tags)


def _words(code) -> np.ndarray:
    if isinstance(code, BinaryCodeDatabase):
        return code.words
    return np.asarray(code, dtype=np.uint64)


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    """Popcount of a XOR b over the packed words of two codes."""
    a, b = np.asarray(a, dtype=np.uint64).reshape(-1), np.asarray(b, dtype=np.uint64).reshape(-1)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"codes have {a.size} and {b.size} words")
    return int(np.bitwise_count(a ^ b).sum())


def hamming_matrix(queries, db) -> np.ndarray:
    """n_q x n table of Hamming distances, evaluated in query chunks."""
    q, x = np.atleast_2d(_words(queries)), np.atleast_2d(_words(db))
    if q.shape[1] != x.shape[1]:
        raise DimensionMismatchError(f"query codes have {q.shape[1]} words, database codes {x.shape[1]}")
    out = np.empty((q.shape[0], x.shape[0]), dtype=np.int64)
    step = max(1, _PAIR_BUDGET // max(1, x.shape[0] * x.shape[1]))
    for lo in range(0, q.shape[0], step):
        xor = q[lo:lo + step, None, :] ^ x[None, :, :]
        out[lo:lo + step] = np.bitwise_count(xor).sum(axis=2)
    return out


def rank_distances(distances: np.ndarray, exclude: Optional[int] = None) -> RankedList:
    distances = np.asarray(distances, dtype=np.int64)
    order = np.argsort(distances, kind="stable")
    if exclude is not None:
        order = order[order != exclude]
    return RankedList(indices=order, distances=distances[order])


def rank(query: np.ndarray, db: BinaryCodeDatabase, exclude: Optional[int] = None) -> RankedList:
    """
    Rank the database against one packed query code.

    Args:
        query: The query's words.
        db: Non-empty code database.
        exclude: Database index to drop, for a query drawn from the database.
    """
    if db.num_codes == 0:
        raise ValueError("cannot rank against an empty database")
    return rank_distances(hamming_matrix(np.asarray(query, dtype=np.uint64).reshape(1, -1), db)[0], exclude)
