"""
FeatureDataset: input feature vectors q(x) with single labels or tag sets.
"""

from typing import Optional

import numpy as np
from pydantic import ConfigDict, Field, field_validator, model_validator

from core.models import ProxyHashModel
from core.utils import freeze

SPLITS = ("train", "db", "query")


class FeatureDataset(ProxyHashModel):
    """
    n feature vectors of dimension D and their supervision.

    Exactly one of `labels` (0-based class indices) or `tags` (n x T 0/1
    matrix) is present. `split` optionally marks every row as train, db or
    query.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    features: np.ndarray = Field(description="n x D float32 matrix.")
    labels: Optional[np.ndarray] = Field(default=None, description="n class indices in [0, num_classes).")
    tags: Optional[np.ndarray] = Field(default=None, description="n x T binary tag matrix.")
    num_classes: int = Field(default=0, description="C for labels, T for tags; inferred when 0.")
    split: Optional[np.ndarray] = Field(default=None, description="Per-row split name.")

    @field_validator("features", mode="before")
    @classmethod
    def _as_features(cls, value):
        value = np.asarray(value, dtype=np.float32)
        if value.ndim != 2 or value.shape[0] < 1 or value.shape[1] < 1:
            raise ValueError(f"features must be a non-empty n x D matrix, got shape {value.shape}")
        if not np.all(np.isfinite(value)):
            raise ValueError("features contain non-finite values")
        return freeze(value)

    @field_validator("labels", mode="before")
    @classmethod
    def _as_labels(cls, value):
        return None if value is None else freeze(np.asarray(value, dtype=np.int64))

    @field_validator("tags", mode="before")
    @classmethod
    def _as_tags(cls, value):
        return None if value is None else freeze(np.asarray(value, dtype=np.uint8))

    @field_validator("split", mode="before")
    @classmethod
    def _as_split(cls, value):
        return None if value is None else freeze(np.asarray(value, dtype="<U5"))

    @model_validator(mode="after")
    def _check_supervision(self):
        n = self.features.shape[0]
        if (self.labels is None) == (self.tags is None):
            raise ValueError("exactly one of labels or tags must be given")
        if self.labels is not None:
            if self.labels.shape != (n,):
                raise ValueError(f"expected {n} labels, got shape {self.labels.shape}")
            if self.labels.min() < 0:
                raise ValueError("labels must be non-negative")
            if self.num_classes == 0:
                object.__setattr__(self, "num_classes", int(self.labels.max()) + 1)
            elif self.labels.max() >= self.num_classes:
                raise ValueError(f"label {int(self.labels.max()) + 1} exceeds num_classes={self.num_classes}")
        else:
            if self.tags.ndim != 2 or self.tags.shape[0] != n:
                raise ValueError(f"expected an {n} x T tag matrix, got shape {self.tags.shape}")
            if np.any(self.tags > 1):
                raise ValueError("tags must be 0/1")
            empty = np.flatnonzero(self.tags.sum(axis=1) == 0)
            if empty.size:
                raise ValueError(f"sample {int(empty[0]) + 1} carries no tag")
            object.__setattr__(self, "num_classes", self.tags.shape[1])
        if self.split is not None:
            if self.split.shape != (n,):
                raise ValueError(f"expected {n} split entries, got shape {self.split.shape}")
            unknown = set(np.unique(self.split).tolist()) - set(SPLITS)
            if unknown:
                raise ValueError(f"unknown split names {sorted(unknown)}")
        return self

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def is_multilabel(self) -> bool:
        return self.tags is not None

    @property
    def payload(self) -> np.ndarray:
        """Labels or tags, whichever is present."""
        return self.tags if self.is_multilabel else self.labels

    def subset(self, indices: np.ndarray, num_classes: Optional[int] = None) -> "FeatureDataset":
        """Rows `indices`, keeping the class count unless told otherwise."""
        indices = np.asarray(indices)
        return FeatureDataset(
            features=self.features[indices],
            labels=None if self.labels is None else self.labels[indices],
            tags=None if self.tags is None else self.tags[indices],
            num_classes=self.num_classes if num_classes is None else num_classes,
            split=None if self.split is None else self.split[indices],
        )

    def class_counts(self) -> np.ndarray:
        """Samples per class (labels) or per tag (tags)."""
        if self.is_multilabel:
            return self.tags.sum(axis=0).astype(np.int64)
        return np.bincount(self.labels, minlength=self.num_classes)

    def relabel(self, classes: np.ndarray) -> "FeatureDataset":
        """
        Keep only samples of `classes` and renumber them 0..len(classes)-1 in
        the given order.
        """
        classes = np.asarray(classes)
        lookup = np.full(self.num_classes, -1, dtype=np.int64)
        lookup[classes] = np.arange(classes.size)
        keep = np.flatnonzero(lookup[self.labels] >= 0)
        return FeatureDataset(
            features=self.features[keep],
            labels=lookup[self.labels[keep]],
            num_classes=int(classes.size),
            split=None if self.split is None else self.split[keep],
        )


def query_split(groups: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Mark round(fraction · size) random rows of every group as "query", the rest "train"."""
    groups = np.asarray(groups)
    split = np.full(groups.size, "train", dtype="<U5")
    for g in np.unique(groups):
        rows = np.flatnonzero(groups == g)
        split[rng.permutation(rows)[:int(round(fraction * rows.size))]] = "query"
    return split


def primary_groups(data: FeatureDataset) -> np.ndarray:
    """Label per row, or the first tag for multi-label rows."""
    return np.argmax(data.tags, axis=1) if data.is_multilabel else data.labels
