"""
Binary alignment of real proxies.

ITQ-style alternating minimization finds the rotation Γ that brings the
proxy columns closest to their sign patterns; binarizing the rotated set
gives the hash-consistent large-margin (HCLM) proxies.
"""

import logging
import warnings
from typing import Iterator, List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import ConfigDict, Field, field_validator, model_validator
from scipy.linalg import orthogonal_procrustes, qr

from core.config import ITQ_EXACT_SEARCH_BITS, AlignConfig
from core.errors import CollapsedProxiesWarning, ConvergenceWarning, DimensionMismatchError, InvalidProxySetError
from core.models import ProxyHashModel
from core.utils import freeze, pick_best, random_orthogonal, require_orthogonal, run_restarts, sgn
from proxies.proxy_set import ProxySet

logger = logging.getLogger(__name__)

DETERMINANT_TOLERANCE = 1e-6
EXACT_TOLERANCE = 1e-6
RANK_TOLERANCE = 1e-10
EXACT_SEARCH_CHUNK = 4096
REAL_KINDS = frozenset({"tammes", "random", "aligned", "learned"})


class RotationMatrix(ProxyHashModel):
    """Orthogonal d x d matrix Γ."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    gamma: np.ndarray

    @field_validator("gamma", mode="before")
    @classmethod
    def _orthogonal(cls, value):
        value = require_orthogonal(value)
        if abs(abs(np.linalg.det(value)) - 1.0) >= DETERMINANT_TOLERANCE:
            raise ValueError("rotation determinant magnitude differs from 1")
        return freeze(value)

    @property
    def dim(self) -> int:
        return self.gamma.shape[0]


class AlignmentTrace(ProxyHashModel):
    """Quantization error after each accepted ITQ iteration."""
    model_config = ConfigDict(frozen=True)

    errors: List[float] = Field(description="Σ_k ‖Γw_k − sgn(Γw_k)‖², non-increasing.")
    iterations: int
    converged: bool

    @model_validator(mode="after")
    def _non_increasing(self):
        if any(later > earlier for earlier, later in zip(self.errors, self.errors[1:])):
            raise ValueError("quantization error increased between iterations")
        return self


class _Restart(NamedTuple):
    gamma: np.ndarray
    errors: List[float]
    converged: bool


def _matrix(p: ProxySet | np.ndarray) -> np.ndarray:
    return p.W if isinstance(p, ProxySet) else np.asarray(p, dtype=np.float64)


def _error(rotated: np.ndarray) -> float:
    return float(np.sum((rotated - sgn(rotated)) ** 2))


def quantization_error(gamma: RotationMatrix | np.ndarray, p: ProxySet | np.ndarray) -> float:
    """Σ_k ‖Γw_k − sgn(Γw_k)‖² with sgn(0) = +1."""
    G = gamma.gamma if isinstance(gamma, RotationMatrix) else np.asarray(gamma, dtype=np.float64)
    W = _matrix(p)
    if G.shape[1] != W.shape[0]:
        raise DimensionMismatchError(f"rotation is {G.shape}, proxies have dimension {W.shape[0]}")
    return _error(G @ W)


def l1_mass(gamma: RotationMatrix | np.ndarray, p: ProxySet | np.ndarray) -> float:
    """Σ_k ‖Γw_k‖₁; equals C·√d exactly when every rotated unit proxy is binary."""
    G = gamma.gamma if isinstance(gamma, RotationMatrix) else np.asarray(gamma, dtype=np.float64)
    return float(np.abs(G @ _matrix(p)).sum())


def _itq_restart(W: np.ndarray, gamma: np.ndarray, cfg: AlignConfig) -> _Restart:
    rotated = gamma @ W
    B = sgn(rotated)
    errors = [_error(rotated)]
    converged = False
    for _ in range(cfg.max_iters):
        # Procrustes: R minimizes ‖WᵀR − Bᵀ‖, so Γ = Rᵀ minimizes ‖ΓW − B‖
        R, _ = orthogonal_procrustes(W.T, B.T)
        candidate = R.T
        rotated = candidate @ W
        error = _error(rotated)
        if error > errors[-1]:
            converged = True
            break
        gamma = candidate
        B_next = sgn(rotated)
        change = errors[-1] - error
        errors.append(error)
        if change < cfg.tolerance or np.array_equal(B_next, B):
            converged = True
            break
        B = B_next
    return _Restart(gamma, errors, converged)


def _sign_patterns(d: int, chunk: int) -> Iterator[np.ndarray]:
    """All ±1 patterns of length d with a leading +1, `chunk` rows at a time."""
    shifts = np.arange(d - 1, dtype=np.int64)
    for start in range(0, 2 ** (d - 1), chunk):
        codes = np.arange(start, min(start + chunk, 2 ** (d - 1)), dtype=np.int64)
        bits = (codes[:, None] >> shifts) & 1
        yield np.hstack([np.ones((len(codes), 1)), 1.0 - 2.0 * bits])


def exact_binary_rotation(W: np.ndarray, max_bits: int = ITQ_EXACT_SEARCH_BITS,
                          tolerance: float = EXACT_TOLERANCE) -> Optional[np.ndarray]:
    """
    Orthogonal Γ with ΓW = t·B for a ±1 matrix B, when one exists.

    Every row of such a ΓW is a sign vector in the row space of W, and d
    pivot columns fix any vector of that space. Enumerating the sign patterns
    on the pivots finds every sign vector; the ones whose row of Γ has unit
    norm are collected greedily into mutually orthogonal rows. Returns None
    when d exceeds `max_bits`, W is rank deficient, or fewer than d rows
    are found.
    """
    d, C = W.shape
    if d < 2 or d > max_bits or C < d:
        return None
    _, R, pivots = qr(W, mode="economic", pivoting=True)
    if abs(R[d - 1, d - 1]) <= RANK_TOLERANCE * abs(R[0, 0]):
        return None
    pivot_block = W[:, pivots[:d]]
    scale = float(np.mean(np.linalg.norm(W, axis=0))) / np.sqrt(d)

    rows: List[np.ndarray] = []
    for patterns in _sign_patterns(d, EXACT_SEARCH_CHUNK):
        coefficients = np.linalg.solve(pivot_block.T, patterns.T).T
        completed = coefficients @ W
        signed = np.all(np.abs(np.abs(completed) - 1.0) < tolerance, axis=1)
        for a in coefficients[signed]:
            g = scale * a
            if abs(np.linalg.norm(g) - 1.0) >= tolerance:
                continue
            if all(abs(float(g @ h)) < tolerance for h in rows):
                rows.append(g)
                if len(rows) == d:
                    logger.info("exact binary rotation found for d=%d C=%d", d, C)
                    gamma, _ = orthogonal_procrustes(np.eye(d), np.vstack(rows))
                    return gamma
    return None


def itq_rotation(p: ProxySet | np.ndarray, cfg: AlignConfig = AlignConfig(), workers: int = 1) -> Tuple[RotationMatrix, AlignmentTrace]:
    """
    Find the rotation making the proxies most binary.

    Alternates B = sgn(ΓW) with the orthogonal Procrustes update of Γ.
    Restart 0 starts from the identity, the rest from random orthogonal
    matrices. For d up to `cfg.exact_search_bits` an exactly binary
    rotation, if one exists, joins as a final start. The lowest final error
    wins, ties to the lowest index.

    Args:
        p: Real-valued proxies (tammes, random, aligned or learned), or a raw d x C matrix.
        cfg: Iteration cap, restarts, tolerance and seed.
        workers: Threads for running restarts concurrently.

    Returns:
        (Γ, trace of the winning restart).
    """
    if isinstance(p, ProxySet) and p.kind not in REAL_KINDS:
        raise InvalidProxySetError(f"ITQ alignment needs real-valued proxies, got kind {p.kind}")
    W = _matrix(p)
    if W.ndim != 2:
        raise DimensionMismatchError(f"proxy matrix must be 2-D, got shape {W.shape}")
    d = W.shape[0]

    def task(index: int, rng: np.random.Generator) -> _Restart:
        start = np.eye(d) if index == 0 else random_orthogonal(d, rng)
        return _itq_restart(W, start, cfg)

    results = run_restarts(task, cfg.restarts, cfg.seed, workers)
    exact = exact_binary_rotation(W, cfg.exact_search_bits)
    if exact is not None:
        results.append(_itq_restart(W, exact, cfg))
    winner = pick_best([r.errors[-1] for r in results], maximize=False)
    best = results[winner]
    logger.info("ITQ d=%d C=%d: quantization error %.6f (restart %d, %d iterations)",
                d, W.shape[1], best.errors[-1], winner, len(best.errors) - 1)
    if not best.converged:
        warnings.warn(f"ITQ stopped at max_iters={cfg.max_iters}", ConvergenceWarning)
    trace = AlignmentTrace(errors=best.errors, iterations=len(best.errors) - 1, converged=best.converged)
    return RotationMatrix(gamma=best.gamma), trace


def rotate_proxies(gamma: RotationMatrix, p: ProxySet) -> ProxySet:
    """The real-valued rotated set ΓW (the Aligned baseline); margins are unchanged."""
    rotated = gamma.gamma @ p.W
    rotated = rotated / np.linalg.norm(rotated, axis=0, keepdims=True)
    return ProxySet.from_matrix(rotated, "aligned", assignment=p.assignment, converged=p.converged)


def binarize(gamma: RotationMatrix, p: ProxySet) -> ProxySet:
    """
    HCLM proxies W_h = sgn(ΓW), K = d, sgn(0) = +1.

    Columns that collapse onto the same code are kept and reported with a
    CollapsedProxiesWarning.
    """
    if p.kind not in REAL_KINDS:
        raise InvalidProxySetError(f"binarize needs real-valued proxies, got kind {p.kind}")
    if gamma.dim != p.dim:
        raise DimensionMismatchError(f"rotation is {gamma.dim}-D, proxies are {p.dim}-D")
    hclm = ProxySet.from_matrix(sgn(gamma.gamma @ p.W), "hclm", assignment=p.assignment)
    collapsed = hclm.duplicate_columns()
    if collapsed:
        warnings.warn(f"{collapsed} proxies collapsed onto an existing code after binarization", CollapsedProxiesWarning)
    return hclm


def alignment_trace_frame(trace: AlignmentTrace):
    """AlignmentTrace as a pandas DataFrame with columns (iteration, error)."""
    return pd.DataFrame({"iteration": range(len(trace.errors)), "error": trace.errors})
