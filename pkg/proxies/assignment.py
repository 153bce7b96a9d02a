"""
Semantic proxy/class assignment.

Finds the permutation γ minimizing Σ_{i≠j} s_ij (1 − w_{γ_i}ᵀ w_{γ_j}) so that
semantically similar classes receive nearby proxies (the sHCLM set).
"""

import logging
from itertools import permutations
from typing import List, Tuple

import numpy as np
from pydantic import ConfigDict, field_validator

from core.config import AssignConfig
from core.errors import AssignmentTooLargeError, DimensionMismatchError
from core.models import ProxyHashModel
from core.utils import freeze, pick_best, run_restarts
from proxies.proxy_set import ProxySet
from proxies.similarity import SimilarityMatrix

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 9
IMPROVEMENT_EPS = 1e-10
_CHUNK = 40320


class Assignment(ProxyHashModel):
    """γ: class index -> proxy column, a bijection."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    gamma: np.ndarray

    @field_validator("gamma", mode="before")
    @classmethod
    def _bijective(cls, value):
        value = np.asarray(value, dtype=np.int64)
        if value.ndim != 1 or sorted(value.tolist()) != list(range(value.size)):
            raise ValueError("assignment must be a permutation of 0..C-1")
        return freeze(value)


def _columns(p: ProxySet | np.ndarray) -> np.ndarray:
    """Proxy columns in production order (the thing γ indexes into)."""
    return p.W if isinstance(p, ProxySet) else np.asarray(p, dtype=np.float64)


def _similarity(S: SimilarityMatrix | np.ndarray) -> np.ndarray:
    S = S.S if isinstance(S, SimilarityMatrix) else np.asarray(S, dtype=np.float64)
    S0 = S.copy()
    np.fill_diagonal(S0, 0.0)
    return S0


def _check_dims(S0: np.ndarray, W: np.ndarray) -> None:
    if S0.shape != (W.shape[1], W.shape[1]):
        raise DimensionMismatchError(f"similarity is {S0.shape}, proxy set has {W.shape[1]} columns")


def _objective(S0: np.ndarray, G: np.ndarray, gamma: np.ndarray) -> float:
    M = G[np.ix_(gamma, gamma)]
    return float(np.sum(S0) - np.sum(S0 * M))


def assignment_objective(S: SimilarityMatrix | np.ndarray, p: ProxySet | np.ndarray, a: Assignment | np.ndarray) -> float:
    """Σ_{i≠j} s_ij (1 − w_{γ_i}ᵀ w_{γ_j}) with raw dot products."""
    S0, W = _similarity(S), _columns(p)
    _check_dims(S0, W)
    gamma = a.gamma if isinstance(a, Assignment) else np.asarray(a)
    return _objective(S0, W.T @ W, gamma)


def _swap_deltas(S0: np.ndarray, M: np.ndarray) -> np.ndarray:
    """
    Objective change of swapping the proxies of classes u and v, for all u, v.

    With T = S0·M the change of Σ s_ij M_ij is
    2[T_uv + T_vu − T_uu − T_vv − s_uv(M_uu + M_vv − 2M_uv)];
    the objective moves by its negative.
    """
    T = S0 @ M
    t = np.diag(T)
    m = np.diag(M)
    change = 2.0 * (T + T.T - t[:, None] - t[None, :] - S0 * (m[:, None] + m[None, :] - 2.0 * M))
    return -change


def _greedy_descent(S0: np.ndarray, G: np.ndarray, gamma: np.ndarray) -> Tuple[np.ndarray, List[float]]:
    C = gamma.size
    iu = np.triu_indices(C, k=1)
    gamma = gamma.copy()
    trace = [_objective(S0, G, gamma)]
    while True:
        deltas = _swap_deltas(S0, G[np.ix_(gamma, gamma)])[iu]
        # argmin returns the first minimum, i.e. the lexicographically smallest pair
        k = int(np.argmin(deltas))
        if deltas[k] >= -IMPROVEMENT_EPS:
            return gamma, trace
        u, v = iu[0][k], iu[1][k]
        gamma[[u, v]] = gamma[[v, u]]
        trace.append(_objective(S0, G, gamma))


def greedy_assign_with_trace(S: SimilarityMatrix | np.ndarray, p: ProxySet | np.ndarray, cfg: AssignConfig = AssignConfig(),
                             workers: int = 1) -> Tuple[Assignment, List[float], float]:
    """
    Greedy swap descent from random permutations, best of restarts.

    Returns:
        (assignment, objective trace of the winning restart, objective of
        its initial permutation).
    """
    S0, W = _similarity(S), _columns(p)
    _check_dims(S0, W)
    C = W.shape[1]
    G = W.T @ W

    def task(_: int, rng: np.random.Generator):
        return _greedy_descent(S0, G, rng.permutation(C))

    results = run_restarts(task, cfg.restarts, cfg.seed, workers)
    winner = pick_best([trace[-1] for _, trace in results], maximize=False)
    gamma, trace = results[winner]
    logger.info("Greedy assignment C=%d: objective %.6f -> %.6f after %d swaps (restart %d)",
                C, trace[0], trace[-1], len(trace) - 1, winner)
    return Assignment(gamma=gamma), trace, trace[0]


def greedy_assign(S: SimilarityMatrix | np.ndarray, p: ProxySet | np.ndarray, cfg: AssignConfig = AssignConfig(),
                  workers: int = 1) -> Assignment:
    """
    Steepest-descent pairwise swaps until no swap lowers the objective.

    Each restart starts from a random permutation; ties between swaps go to
    the lexicographically smallest pair and ties between restarts to the
    lowest restart index.
    """
    return greedy_assign_with_trace(S, p, cfg, workers)[0]


def brute_force_assign(S: SimilarityMatrix | np.ndarray, p: ProxySet | np.ndarray) -> Assignment:
    """
    Global optimum by exhaustive enumeration (C <= 9), ties to the
    lexicographically first permutation.
    """
    S0, W = _similarity(S), _columns(p)
    _check_dims(S0, W)
    C = W.shape[1]
    if C > BRUTE_FORCE_LIMIT:
        raise AssignmentTooLargeError(f"brute force is limited to C <= {BRUTE_FORCE_LIMIT}, got C={C}")
    G = W.T @ W
    total = float(np.sum(S0))

    best_value, best_gamma = np.inf, None
    candidates = permutations(range(C))
    while True:
        chunk = np.array([perm for _, perm in zip(range(_CHUNK), candidates)], dtype=np.int64)
        if chunk.size == 0:
            break
        M = G[chunk[:, :, None], chunk[:, None, :]]
        values = total - np.einsum("ij,nij->n", S0, M)
        k = int(np.flatnonzero(values <= values.min() + IMPROVEMENT_EPS)[0])
        if values[k] < best_value - IMPROVEMENT_EPS:
            best_value, best_gamma = float(values[k]), chunk[k]
    return Assignment(gamma=best_gamma)


def apply_assignment(p: ProxySet, a: Assignment, kind: str = "shclm") -> ProxySet:
    """Proxy set using assignment γ (sHCLM when p is HCLM)."""
    return p.with_assignment(a.gamma, kind=kind if p.is_binary else p.kind)
