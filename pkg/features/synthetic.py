"""
Hierarchical Gaussian features: a desk-scale stand-in for CNN activations.

Every superclass has a center of norm `superclass_separation`; its classes
sit at that center plus an offset of norm `class_spread`, and samples add
isotropic noise of standard deviation `noise`. Classes of one superclass
are therefore semantically close, which is what the semantic assignment
exploits.
"""

import logging
from typing import Tuple

import numpy as np

from core.config import SynthConfig
from core.utils import rngs
from features.dataset import FeatureDataset, query_split

logger = logging.getLogger(__name__)


def _unit_rows(rng: np.random.Generator, n: int, D: int) -> np.ndarray:
    x = rng.standard_normal((n, D))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def class_structure(cfg: SynthConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    Ground-truth class means and their superclass.

    Returns:
        (C x D means, C superclass indices); class y belongs to superclass
        y // classes_per_superclass.
    """
    center_rng, offset_rng, _, _ = rngs(cfg.seed, 4)
    centers = cfg.superclass_separation * _unit_rows(center_rng, cfg.superclasses, cfg.feature_dim)
    superclass = np.repeat(np.arange(cfg.superclasses), cfg.classes_per_superclass)
    offsets = cfg.class_spread * _unit_rows(offset_rng, cfg.num_classes, cfg.feature_dim)
    return centers[superclass] + offsets, superclass


def synth_generate(cfg: SynthConfig = SynthConfig()) -> FeatureDataset:
    """
    Draw a dataset; the same config yields a bit-identical dataset.

    Single-label mode gives `samples_per_class` rows per class. Multi-label
    mode gives each row its primary class as a tag plus, with probability
    `extra_tag_probability`, a second tag from the same superclass; its
    features are the mean of its tags' means plus noise.

    A `query_fraction` share of each primary class is marked "query"; the
    rest is "train".
    """
    means, superclass = class_structure(cfg)
    _, _, noise_rng, split_rng = rngs(cfg.seed, 4)
    C, D, per = cfg.num_classes, cfg.feature_dim, cfg.samples_per_class
    primary = np.repeat(np.arange(C), per)
    n = primary.size

    if not cfg.multilabel:
        features = means[primary] + cfg.noise * noise_rng.standard_normal((n, D))
        data = FeatureDataset(features=features, labels=primary, num_classes=C,
                              split=query_split(primary, cfg.query_fraction, split_rng))
    else:
        tags = np.zeros((n, C), dtype=np.uint8)
        tags[np.arange(n), primary] = 1
        extra = noise_rng.random(n) < cfg.extra_tag_probability
        if cfg.classes_per_superclass > 1:
            # a sibling other than the primary class, uniformly
            shift = noise_rng.integers(1, cfg.classes_per_superclass, size=n)
            local = (primary % cfg.classes_per_superclass + shift) % cfg.classes_per_superclass
            sibling = superclass[primary] * cfg.classes_per_superclass + local
            tags[np.flatnonzero(extra), sibling[extra]] = 1
        features = (tags @ means) / tags.sum(axis=1, keepdims=True) + cfg.noise * noise_rng.standard_normal((n, D))
        data = FeatureDataset(features=features, tags=tags,
                              split=query_split(primary, cfg.query_fraction, split_rng))

    logger.info("Synthesized %d samples, %d %s, D=%d", n, C, "tags" if cfg.multilabel else "classes", D)
    return data
