"""
Core utility functions for proxyhash
Handles sign conventions, seeding, restarts and small linear-algebra helpers
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

import numpy as np

from core.errors import InvalidRotationError

logger = logging.getLogger(__name__)

T = TypeVar("T")

ORTHOGONALITY_TOLERANCE = 1e-8


def sgn(values: np.ndarray) -> np.ndarray:
    """Elementwise sign with sgn(0) = +1, as float64."""
    return np.where(np.asarray(values) >= 0, 1.0, -1.0)


def child_seeds(seed: int, count: int) -> List[np.random.SeedSequence]:
    """Independent, reproducible seed sequences for `count` sub-tasks."""
    return np.random.SeedSequence(seed).spawn(count)


def rngs(seed: int, count: int) -> List[np.random.Generator]:
    """One Generator per sub-task, derived from a single seed."""
    return [np.random.default_rng(s) for s in child_seeds(seed, count)]


def run_restarts(task: Callable[[int, np.random.Generator], T], restarts: int, seed: int, workers: int = 1) -> List[T]:
    """
    Run independent restarts and return their results in restart order.

    Args:
        task: Called as task(restart_index, rng).
        restarts: Number of restarts.
        seed: Master seed; each restart gets its own child stream.
        workers: Thread count. Results are merged by index so the output does
            not depend on scheduling.

    Returns:
        List of results, index i from restart i.
    """
    generators = rngs(seed, restarts)
    if workers <= 1 or restarts == 1:
        return [task(i, rng) for i, rng in enumerate(generators)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, range(restarts), generators))


def pick_best(scores: Sequence[float], maximize: bool) -> int:
    """Index of the best score; the lowest index wins ties."""
    best = 0
    for i, score in enumerate(scores):
        if (score > scores[best]) if maximize else (score < scores[best]):
            best = i
    return best


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix from the QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))


def orthogonality_error(matrix: np.ndarray) -> float:
    """‖MᵀM − I‖∞ (max absolute entry)."""
    matrix = np.asarray(matrix, dtype=np.float64)
    return float(np.max(np.abs(matrix.T @ matrix - np.eye(matrix.shape[1]))))


def require_orthogonal(matrix: np.ndarray, tolerance: float = ORTHOGONALITY_TOLERANCE) -> np.ndarray:
    """Return `matrix` as float64 or raise InvalidRotationError."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidRotationError(f"rotation must be square, got shape {matrix.shape}")
    error = orthogonality_error(matrix)
    if error >= tolerance:
        raise InvalidRotationError(f"matrix is not orthogonal: ‖RᵀR − I‖∞ = {error:.3e}")
    return matrix


def freeze(array: np.ndarray) -> np.ndarray:
    """Read-only copy, for arrays held by immutable models."""
    array = np.array(array)
    array.flags.writeable = False
    return array
