"""
Classification / metric-learning equivalence for the Gaussian case.

With φ(a) = ψ(a) = ½‖a‖² the Bregman divergence is d_φ(a, b) = ½‖a − b‖²,
and the softmax over wᵀν + b_y equals the softmax over −d_φ(ν, w_y) exactly
when b_y = −½‖w_y‖² up to a constant shared by all classes.
"""

import logging
from typing import List, Optional

import numpy as np
from pydantic import ConfigDict, Field, model_validator
from scipy.special import softmax

from core.errors import DimensionMismatchError
from core.models import ProxyHashModel
from core.utils import freeze

logger = logging.getLogger(__name__)

EQUIVALENCE_TOLERANCE = 1e-12
NEGATIVE_CONTROL_THRESHOLD = 1e-6


class EquivalenceCase(ProxyHashModel):
    """An embedding ν, proxies W (d x C) and the biases of the dot-product form."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    nu: np.ndarray
    W: np.ndarray
    biases: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def _as_arrays(cls, values):
        values = dict(values)
        values["nu"] = freeze(np.asarray(values["nu"], dtype=np.float64).reshape(-1))
        values["W"] = freeze(np.atleast_2d(np.asarray(values["W"], dtype=np.float64)))
        if values.get("biases") is None:
            values["biases"] = matched_biases(values["W"])
        values["biases"] = freeze(np.asarray(values["biases"], dtype=np.float64).reshape(-1))
        return values

    @model_validator(mode="after")
    def _shapes(self):
        d, C = self.W.shape
        if self.nu.shape != (d,) or self.biases.shape != (C,):
            raise DimensionMismatchError(f"ν {self.nu.shape}, W {self.W.shape}, biases {self.biases.shape} disagree")
        return self


class SuiteResult(ProxyHashModel):
    """Outcome of a randomized verification suite."""
    suite: str
    trials: int
    passed: bool
    worst: float = Field(description="Largest discrepancy seen among the checks that must hold.")
    failures: List[str] = Field(default_factory=list)
    notes: dict = Field(default_factory=dict)


def matched_biases(W: np.ndarray) -> np.ndarray:
    """b_y = −½‖w_y‖²."""
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    return -0.5 * np.sum(W ** 2, axis=0)


def bregman_divergence(a: np.ndarray, b: np.ndarray) -> float:
    """d_φ(a, b) for φ = ½‖·‖², i.e. ½‖a − b‖²."""
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return 0.5 * float(diff @ diff)


def softmax_dot_form(nu: np.ndarray, W: np.ndarray, biases: Optional[np.ndarray] = None) -> np.ndarray:
    """softmax_y(w_yᵀν + b_y)."""
    nu, W = np.asarray(nu, dtype=np.float64), np.atleast_2d(np.asarray(W, dtype=np.float64))
    if nu.shape != (W.shape[0],):
        raise DimensionMismatchError(f"ν has shape {nu.shape}, proxies have dimension {W.shape[0]}")
    logits = nu @ W
    if biases is not None:
        logits = logits + np.asarray(biases, dtype=np.float64)
    return softmax(logits)


def softmax_distance_form(nu: np.ndarray, W: np.ndarray) -> np.ndarray:
    """softmax_y(−½‖ν − w_y‖²)."""
    nu, W = np.asarray(nu, dtype=np.float64), np.atleast_2d(np.asarray(W, dtype=np.float64))
    if nu.shape != (W.shape[0],):
        raise DimensionMismatchError(f"ν has shape {nu.shape}, proxies have dimension {W.shape[0]}")
    return softmax(-0.5 * np.sum((W - nu[:, None]) ** 2, axis=0))


def check_equivalence(case: EquivalenceCase) -> float:
    """Max absolute difference between the two softmax forms."""
    dot = softmax_dot_form(case.nu, case.W, case.biases)
    dist = softmax_distance_form(case.nu, case.W)
    return float(np.max(np.abs(dot - dist)))


def run_equivalence_suite(trials: int = 1000, seed: int = 0) -> SuiteResult:
    """
    Random instances with matched biases plus a random shared offset must
    agree within 1e-12; the same instances with zero biases and unequal
    proxy norms must disagree by more than 1e-6.
    """
    rng = np.random.default_rng(seed)
    failures, worst, weakest_control = [], 0.0, np.inf
    for t in range(trials):
        d, C = int(rng.integers(1, 17)), int(rng.integers(2, 17))
        nu = rng.standard_normal(d) / np.sqrt(d)
        W = rng.standard_normal((d, C)) / np.sqrt(d) * rng.uniform(0.5, 2.0, size=C)
        case = EquivalenceCase(nu=nu, W=W, biases=matched_biases(W) + rng.normal())
        gap = check_equivalence(case)
        worst = max(worst, gap)
        if gap >= EQUIVALENCE_TOLERANCE:
            failures.append(f"trial {t}: matched biases disagree by {gap:.3e}")
        control = check_equivalence(EquivalenceCase(nu=nu, W=W, biases=np.zeros(C)))
        weakest_control = min(weakest_control, control)
        if control <= NEGATIVE_CONTROL_THRESHOLD:
            failures.append(f"trial {t}: zero biases agree within {control:.3e}")
    logger.info("Equivalence suite: %d trials, worst %.3e, %d failures", trials, worst, len(failures))
    return SuiteResult(suite="equivalence", trials=trials, passed=not failures, worst=worst, failures=failures,
                       notes={"weakest_negative_control": float(weakest_control)})
