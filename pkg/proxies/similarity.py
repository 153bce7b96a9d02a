"""
Class and tag similarity matrices used by the semantic assignment.
"""

import logging
import warnings
from itertools import combinations
from typing import Literal

import numpy as np
import pandas as pd
from pydantic import ConfigDict, Field, field_validator, model_validator

from core.errors import DegenerateSimilarityWarning, EmptyClassError, InvalidSimilarityError
from core.models import ProxyHashModel
from core.utils import freeze
from features.dataset import FeatureDataset

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-12


class SimilarityMatrix(ProxyHashModel):
    """Symmetric C x C similarities in [0, 1]; consumers ignore the diagonal."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    S: np.ndarray
    source: Literal["gaussian_means", "tag_cooccurrence", "user_supplied"]
    degenerate: bool = Field(default=False, description="True when the all-ones fallback was used.")

    @field_validator("S", mode="before")
    @classmethod
    def _as_matrix(cls, value):
        return freeze(np.asarray(value, dtype=np.float64))

    @model_validator(mode="after")
    def _check(self):
        S = self.S
        if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] < 2:
            raise ValueError(f"similarity must be square with C >= 2, got shape {S.shape}")
        if np.max(np.abs(S - S.T)) > SYMMETRY_TOLERANCE:
            raise ValueError("similarity matrix is not symmetric")
        if S.min() < 0.0 or S.max() > 1.0:
            raise ValueError("similarities must lie in [0, 1]")
        return self

    @property
    def num_classes(self) -> int:
        return self.S.shape[0]

    def to_frame(self) -> pd.DataFrame:
        """Square DataFrame indexed by 1-based class numbers, for CSV export."""
        names = list(range(1, self.num_classes + 1))
        return pd.DataFrame(self.S, index=names, columns=names)


class ClassMeans(ProxyHashModel):
    """Average input feature u_y of every class."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    u: np.ndarray = Field(description="C x D matrix of class means.")
    counts: np.ndarray

    @model_validator(mode="after")
    def _non_empty(self):
        if np.any(self.counts < 1):
            raise ValueError("every class needs at least one sample")
        return self


def class_means(data: FeatureDataset) -> ClassMeans:
    """
    u_y = mean of q(x_i) over samples with y_i = y, computed on raw features.

    Raises:
        EmptyClassError: naming the first (1-based) class without samples.
    """
    if data.is_multilabel:
        raise InvalidSimilarityError("class means need single-label data")
    counts = data.class_counts()
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise EmptyClassError(int(empty[0]) + 1)
    sums = np.zeros((data.num_classes, data.dim), dtype=np.float64)
    np.add.at(sums, data.labels, data.features.astype(np.float64))
    return ClassMeans(u=freeze(sums / counts[:, None]), counts=freeze(counts))


def gaussian_similarity(means: ClassMeans) -> SimilarityMatrix:
    """
    s_ij = exp(−‖u_i − u_j‖² / (2κ²)), κ the mean Euclidean distance over
    pairs i < j. Identical means give κ = 0 and the all-ones limit, with a
    DegenerateSimilarityWarning.
    """
    u = means.u
    C = u.shape[0]
    if C < 2:
        raise InvalidSimilarityError("need at least two classes")
    sq = np.sum((u[:, None, :] - u[None, :, :]) ** 2, axis=-1)
    kappa = float(np.mean([np.sqrt(sq[i, j]) for i, j in combinations(range(C), 2)]))
    if kappa == 0.0:
        warnings.warn("all class means coincide; similarity is all ones", DegenerateSimilarityWarning)
        return SimilarityMatrix(S=np.ones((C, C)), source="gaussian_means", degenerate=True)
    S = np.exp(-sq / (2.0 * kappa ** 2))
    S = 0.5 * (S + S.T)
    np.fill_diagonal(S, 1.0)
    return SimilarityMatrix(S=S, source="gaussian_means")


def tag_cooccurrence_similarity(tags: np.ndarray) -> SimilarityMatrix:
    """
    s_ij = 2 Σ_n t_ni t_nj / (Σ_n t_ni + Σ_n t_nj).

    Raises:
        InvalidSimilarityError: if a tag never occurs.
    """
    t = np.asarray(tags, dtype=np.float64)
    if t.ndim != 2 or t.shape[1] < 2:
        raise InvalidSimilarityError(f"expected an n x T tag matrix with T >= 2, got shape {t.shape}")
    if np.any((t != 0) & (t != 1)):
        raise InvalidSimilarityError("tags must be 0/1")
    freq = t.sum(axis=0)
    missing = np.flatnonzero(freq == 0)
    if missing.size:
        raise InvalidSimilarityError(f"tag {int(missing[0]) + 1} never occurs")
    S = 2.0 * (t.T @ t) / (freq[:, None] + freq[None, :])
    np.fill_diagonal(S, 1.0)
    return SimilarityMatrix(S=np.clip(S, 0.0, 1.0), source="tag_cooccurrence")


def dataset_similarity(data: FeatureDataset, method: str = "means") -> SimilarityMatrix:
    """Similarity for a dataset: class means for labels, co-occurrence or tag means for tags."""
    if method == "cooccur":
        if not data.is_multilabel:
            raise InvalidSimilarityError("co-occurrence similarity needs tags")
        return tag_cooccurrence_similarity(data.tags)
    if data.is_multilabel:
        return gaussian_similarity(tag_means(data))
    return gaussian_similarity(class_means(data))


def tag_means(data: FeatureDataset) -> ClassMeans:
    """Mean feature of the samples carrying each tag."""
    t = data.tags.astype(np.float64)
    counts = t.sum(axis=0).astype(np.int64)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise EmptyClassError(int(empty[0]) + 1)
    u = (t.T @ data.features.astype(np.float64)) / counts[:, None]
    return ClassMeans(u=freeze(u), counts=freeze(counts))
