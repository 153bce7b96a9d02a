"""
Proxy design: maximally separated proxies on the unit sphere and the
random baselines they are compared against.

The Tammes search maximizes a log-sum-exp smoothed minimum of the pairwise
squared distances by projected gradient ascent on the sphere. The smoothing
is sharpened geometrically and the best restart wins.
"""

import logging
import warnings
from typing import List, NamedTuple

import numpy as np
from pydantic import ConfigDict, Field
from scipy.special import logsumexp

from core.config import TammesConfig
from core.errors import ConvergenceWarning, InvalidProxySetError
from core.models import ProxyHashModel
from core.utils import pick_best, run_restarts
from proxies.proxy_set import ProxySet

logger = logging.getLogger(__name__)

MIN_STEP = 1e-14


class TammesSolution(ProxyHashModel):
    """Best restart of a Tammes search."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    proxies: ProxySet
    min_squared_distance: float
    history: List[float] = Field(description="Best min squared distance after each iteration of the winning restart.")
    restart: int
    iterations: int


class _Restart(NamedTuple):
    X: np.ndarray
    min_sq: float
    history: List[float]
    iterations: int
    converged: bool


def _normalize(X: np.ndarray) -> np.ndarray:
    return X / np.linalg.norm(X, axis=0, keepdims=True)


def pairwise_squared_distances(X: np.ndarray) -> np.ndarray:
    """C x C matrix of ‖x_i − x_j‖² for the columns of X."""
    G = X.T @ X
    sq = np.diag(G)
    return np.maximum(sq[:, None] + sq[None, :] - 2.0 * G, 0.0)


def min_squared_distance(X: np.ndarray) -> float:
    """min_{i≠j} ‖x_i − x_j‖² over the columns of X."""
    D = pairwise_squared_distances(np.asarray(X, dtype=np.float64))
    iu = np.triu_indices(D.shape[0], k=1)
    return float(D[iu].min())


def _smoothed_min(D_pairs: np.ndarray, t: float) -> float:
    return float(-logsumexp(-t * D_pairs) / t)


def _ascent_direction(X: np.ndarray, t: float, iu) -> np.ndarray:
    D = pairwise_squared_distances(X)
    logits = -t * D[iu]
    weights = np.exp(logits - logsumexp(logits))
    P = np.zeros_like(D)
    P[iu] = weights
    P = P + P.T
    grad = 2.0 * (X * P.sum(axis=0) - X @ P)
    # project onto the tangent space of each column's sphere
    return grad - X * np.sum(X * grad, axis=0)


def _tammes_restart(C: int, d: int, cfg: TammesConfig, rng: np.random.Generator) -> _Restart:
    if d == 1:
        X = np.where(np.arange(C) % 2 == 0, 1.0, -1.0)[None, :]
        return _Restart(X, min_squared_distance(X), [min_squared_distance(X)], 0, True)

    iu = np.triu_indices(C, k=1)
    X = _normalize(rng.standard_normal((d, C)))
    t = cfg.smoothing_temperature
    step = cfg.step_size
    f = _smoothed_min(pairwise_squared_distances(X)[iu], t)

    best_X, best = X, min_squared_distance(X)
    history = []
    converged = False
    iteration = 0
    for iteration in range(1, cfg.max_iters + 1):
        candidate = _normalize(X + step * _ascent_direction(X, t, iu))
        f_candidate = _smoothed_min(pairwise_squared_distances(candidate)[iu], t)
        at_max_temperature = t >= cfg.max_temperature
        if f_candidate >= f:
            gain = f_candidate - f
            X, f = candidate, f_candidate
            step = min(step * 1.2, cfg.step_size)
            current = min_squared_distance(X)
            if current > best:
                best_X, best = X, current
            if at_max_temperature and gain < cfg.tolerance:
                converged = True
        else:
            step *= 0.5
            if step < MIN_STEP:
                converged = at_max_temperature
        history.append(best)
        if converged:
            break
        if not at_max_temperature:
            t = min(t * cfg.temperature_growth, cfg.max_temperature)
            f = _smoothed_min(pairwise_squared_distances(X)[iu], t)
    return _Restart(best_X, best, history, iteration, converged)


def tammes_search(C: int, d: int, cfg: TammesConfig = TammesConfig(), workers: int = 1) -> TammesSolution:
    """
    Solve the Tammes problem for C unit proxies in d dimensions.

    Args:
        C: Number of proxies (classes), at least 2.
        d: Dimension, at least 1.
        cfg: Solver settings.
        workers: Threads for running restarts concurrently.

    Returns:
        TammesSolution holding the best restart (ties go to the lowest
        restart index). If that restart hit max_iters, a ConvergenceWarning
        is issued and `proxies.converged` is False.
    """
    if C < 2 or d < 1:
        raise InvalidProxySetError(f"need C >= 2 and d >= 1, got C={C}, d={d}")

    results = run_restarts(lambda i, rng: _tammes_restart(C, d, cfg, rng), cfg.restarts, cfg.seed, workers)
    winner = pick_best([r.min_sq for r in results], maximize=True)
    best = results[winner]
    logger.info("Tammes C=%d d=%d: min squared distance %.6f (restart %d, %d iterations)",
                C, d, best.min_sq, winner, best.iterations)
    if not best.converged:
        warnings.warn(f"Tammes search stopped at max_iters={cfg.max_iters} (C={C}, d={d})", ConvergenceWarning)

    proxies = ProxySet.from_matrix(_normalize(best.X), "tammes", converged=best.converged)
    return TammesSolution(proxies=proxies, min_squared_distance=min_squared_distance(proxies.W),
                          history=best.history, restart=winner, iterations=best.iterations)


def solve_tammes(C: int, d: int, cfg: TammesConfig = TammesConfig(), workers: int = 1) -> ProxySet:
    """Unit-norm proxies maximizing the minimum pairwise distance."""
    return tammes_search(C, d, cfg, workers).proxies


def margins(p: ProxySet) -> np.ndarray:
    """
    Classification margin per class, M_y = ‖w_y‖² − max_{c≠y} ⟨w_y, w_c⟩.

    ‖w_y‖² equals K for every fixed-norm kind; learned proxies use their own norms.
    """
    G = p.gram()
    off = G.copy()
    np.fill_diagonal(off, -np.inf)
    return np.diag(G) - off.max(axis=1)


def random_proxies(C: int, d: int, seed: int = 0) -> ProxySet:
    """Fixed random unit-norm Gaussian directions."""
    rng = np.random.default_rng(seed)
    return ProxySet.from_matrix(_normalize(rng.standard_normal((d, C))), "random")


def random_binary_proxies(C: int, d: int, seed: int = 0) -> ProxySet:
    """Fixed random proxies with i.i.d. uniform +-1 entries."""
    rng = np.random.default_rng(seed)
    return ProxySet.from_matrix(rng.choice([-1.0, 1.0], size=(d, C)), "random_binary")


def learned_proxies_init(C: int, d: int, seed: int = 0) -> ProxySet:
    """Gaussian unit-norm starting point for proxies trained by back-propagation."""
    rng = np.random.default_rng(seed)
    return ProxySet.from_matrix(_normalize(rng.standard_normal((d, C))), "learned")
