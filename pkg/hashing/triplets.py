"""
In-batch triplet sampling.
"""

from typing import List, NamedTuple

import numpy as np


class Triplet(NamedTuple):
    """Row indices of an anchor, a similar and a dissimilar sample."""
    anchor: int
    positive: int
    negative: int


def similarity_mask(payload: np.ndarray) -> np.ndarray:
    """True where two rows share the class (labels) or at least one tag (tags)."""
    payload = np.asarray(payload)
    if payload.ndim == 1:
        return payload[:, None] == payload[None, :]
    tags = payload.astype(np.int64)
    return (tags @ tags.T) > 0


def sample_triplets(payload: np.ndarray, rng: np.random.Generator | int) -> np.ndarray:
    """
    One triplet per anchor, drawn inside the batch.

    The positive is uniform over the other rows similar to the anchor, the
    negative uniform over the dissimilar rows; anchors lacking either are
    skipped.

    Args:
        payload: Labels (B,) or tags (B x T) of the batch rows.
        rng: Generator or seed.

    Returns:
        k x 3 int array of (anchor, positive, negative) row indices.
    """
    rng = np.random.default_rng(rng) if isinstance(rng, (int, np.integer)) else rng
    same = similarity_mask(payload)
    B = same.shape[0]
    positive = same & ~np.eye(B, dtype=bool)
    negative = ~same
    # the masked argmax of i.i.d. uniform keys is a uniform pick
    pos_keys = np.where(positive, rng.random((B, B)), -1.0)
    neg_keys = np.where(negative, rng.random((B, B)), -1.0)
    anchors = np.flatnonzero(positive.any(axis=1) & negative.any(axis=1))
    return np.stack([anchors, pos_keys[anchors].argmax(axis=1), neg_keys[anchors].argmax(axis=1)], axis=1).astype(np.int64)


def as_triplets(array: np.ndarray) -> List[Triplet]:
    """Rows of a k x 3 array as Triplet tuples."""
    return [Triplet(int(a), int(p), int(n)) for a, p, n in np.asarray(array)]
