"""
Rotational ambiguity of the proxy loss.

Rotating embeddings and proxies together leaves every inner product, and so
the cross-entropy, unchanged, while the sign patterns used as hash codes move.
"""

import logging
from typing import Tuple

import numpy as np
from pydantic import Field

from core.errors import DimensionMismatchError
from core.models import ProxyHashModel
from core.utils import random_orthogonal, require_orthogonal, sgn
from hashing.losses import proxy_losses_single
from theory.equivalence import SuiteResult

logger = logging.getLogger(__name__)

ROTATION_TOLERANCE = 1e-12


class RotationReport(ProxyHashModel):
    """Loss and hash-code behaviour before and after a joint rotation."""
    loss_before: float
    loss_after: float
    loss_difference: float
    codes_changed: int = Field(description="Samples whose sign pattern differs after rotation.")
    distance_pairs_changed: int = Field(description="Sample pairs whose code Hamming distance differs.")
    same_class_agreement_before: float = Field(description="Share of same-class pairs with identical codes.")
    same_class_agreement_after: float


def _pairwise_hamming(codes: np.ndarray) -> np.ndarray:
    return 0.5 * (codes.shape[1] - codes @ codes.T)


def _same_class_agreement(codes: np.ndarray, labels: np.ndarray) -> float:
    iu = np.triu_indices(len(labels), k=1)
    same = (labels[:, None] == labels[None, :])[iu]
    if not same.any():
        return 1.0
    identical = np.all(codes[:, None, :] == codes[None, :, :], axis=2)[iu]
    return float(identical[same].mean())


def rotation_ambiguity_demo(nu: np.ndarray, labels: np.ndarray, W: np.ndarray, R: np.ndarray) -> RotationReport:
    """
    Compare the mean proxy loss and the sign codes of ν before and after
    ν -> Rν, W -> RW.

    Args:
        nu: n x d embeddings.
        labels: n class indices into the columns of W.
        W: d x C proxies.
        R: d x d orthogonal matrix.

    Raises:
        InvalidRotationError: R is not orthogonal.
    """
    R = require_orthogonal(R)
    nu, W = np.atleast_2d(np.asarray(nu, dtype=np.float64)), np.asarray(W, dtype=np.float64)
    labels = np.asarray(labels)
    if nu.shape[1] != W.shape[0] or R.shape[0] != W.shape[0]:
        raise DimensionMismatchError(f"ν {nu.shape}, W {W.shape}, R {R.shape} disagree")
    nu_rot, W_rot = nu @ R.T, R @ W

    before = float(proxy_losses_single(nu, labels, W).mean())
    after = float(proxy_losses_single(nu_rot, labels, W_rot).mean())
    codes, codes_rot = sgn(nu), sgn(nu_rot)
    changed = np.triu(_pairwise_hamming(codes) != _pairwise_hamming(codes_rot), k=1)
    return RotationReport(
        loss_before=before,
        loss_after=after,
        loss_difference=abs(after - before),
        codes_changed=int(np.sum(np.any(codes != codes_rot, axis=1))),
        distance_pairs_changed=int(changed.sum()),
        same_class_agreement_before=_same_class_agreement(codes, labels),
        same_class_agreement_after=_same_class_agreement(codes_rot, labels),
    )


def orthant_layout(points_per_class: int = 7, spread_degrees: float = 30.0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Four classes in the plane with proxies at the orthant diagonals and
    samples fanned ±spread around them, so every class has one sign code.

    Returns:
        (ν n x 2, labels, W 2 x 4)
    """
    centers = np.deg2rad(45.0 + 90.0 * np.arange(4))
    offsets = np.deg2rad(np.linspace(-spread_degrees, spread_degrees, points_per_class))
    angles = (centers[:, None] + offsets[None, :]).ravel()
    nu = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    labels = np.repeat(np.arange(4), points_per_class)
    W = np.stack([np.cos(centers), np.sin(centers)])
    return nu, labels, W


def planar_rotation(degrees: float) -> np.ndarray:
    theta = np.deg2rad(degrees)
    return np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])


def run_rotation_suite(trials: int = 100, seed: int = 0) -> SuiteResult:
    """
    Random instances under random rotations: the loss must not move by
    1e-12 or more, and at least one instance must change its codes.
    """
    rng = np.random.default_rng(seed)
    failures, worst, code_changes = [], 0.0, 0
    for t in range(trials):
        d, C, n = int(rng.integers(2, 17)), int(rng.integers(2, 11)), int(rng.integers(2, 33))
        nu = np.tanh(rng.standard_normal((n, d)))
        W = rng.standard_normal((d, C))
        W /= np.linalg.norm(W, axis=0)
        report = rotation_ambiguity_demo(nu, rng.integers(0, C, size=n), W, random_orthogonal(d, rng))
        worst = max(worst, report.loss_difference)
        code_changes += report.codes_changed > 0
        if report.loss_difference >= ROTATION_TOLERANCE:
            failures.append(f"trial {t}: loss moved by {report.loss_difference:.3e}")
    if code_changes == 0:
        failures.append("no rotation changed any hash code")
    logger.info("Rotation suite: %d trials, worst %.3e, codes changed in %d", trials, worst, code_changes)
    return SuiteResult(suite="rotation", trials=trials, passed=not failures, worst=worst, failures=failures,
                       notes={"trials_with_code_changes": code_changes})
