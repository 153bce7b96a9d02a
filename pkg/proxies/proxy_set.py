"""
ProxySet: the fixed class representatives of a proxy embedding.
"""

from typing import Optional

import numpy as np
from pydantic import ConfigDict, Field, field_validator, model_validator

from core.config import ProxyKind
from core.errors import InvalidProxySetError
from core.models import ProxyHashModel
from core.utils import freeze

BINARY_KINDS = frozenset({"hclm", "shclm", "random_binary"})
NORM_TOLERANCE = 1e-9


class ProxySet(ProxyHashModel):
    """
    C proxy columns of dimension d plus the class/column assignment.

    `W` keeps the columns in the order they were produced; `assignment[y]`
    is the column used for class y. `matrix` gives the class-ordered view
    that training and evaluation consume.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    W: np.ndarray = Field(description="d x C proxy matrix, one proxy per column.")
    kind: ProxyKind
    norm_constant: float = Field(description="Squared norm K shared by all columns (1 real, d binary).")
    assignment: Optional[np.ndarray] = Field(default=None, description="Class index -> column index permutation.")
    converged: bool = Field(default=True, description="False when the producing solver hit its iteration cap.")

    @field_validator("W", mode="before")
    @classmethod
    def _as_float_matrix(cls, value):
        value = np.asarray(value, dtype=np.float64)
        if value.ndim != 2:
            raise InvalidProxySetError(f"proxy matrix must be 2-D (d x C), got shape {value.shape}")
        return freeze(value)

    @field_validator("assignment", mode="before")
    @classmethod
    def _as_index_vector(cls, value):
        return None if value is None else freeze(np.asarray(value, dtype=np.int64))

    @model_validator(mode="after")
    def _check_invariants(self):
        d, C = self.W.shape
        if C < 2 or d < 1:
            raise InvalidProxySetError(f"need C >= 2 and d >= 1, got C={C}, d={d}")
        if not np.all(np.isfinite(self.W)):
            raise InvalidProxySetError("proxy matrix has non-finite entries")
        if self.assignment is None:
            object.__setattr__(self, "assignment", freeze(np.arange(C)))
        elif sorted(self.assignment.tolist()) != list(range(C)):
            raise InvalidProxySetError("assignment is not a permutation of the columns")

        if self.kind in BINARY_KINDS:
            if d < 63 and C > 2 ** d:
                raise InvalidProxySetError(f"{C} binary proxies do not fit in {d} bits")
            if not np.all(np.abs(self.W) == 1.0):
                raise InvalidProxySetError(f"{self.kind} proxies must be exactly +-1")
            expected = float(d)
        else:
            expected = 1.0
        if self.norm_constant != expected:
            raise InvalidProxySetError(f"{self.kind} proxies need K={expected}, got {self.norm_constant}")
        if self.kind != "learned":
            worst = float(np.max(np.abs(np.sum(self.W ** 2, axis=0) - expected)))
            if worst >= NORM_TOLERANCE:
                raise InvalidProxySetError(f"column squared norms deviate from K by {worst:.3e}")
        return self

    @classmethod
    def from_matrix(cls, W: np.ndarray, kind: str, assignment: Optional[np.ndarray] = None, converged: bool = True) -> "ProxySet":
        """Build a ProxySet, deriving K from the kind."""
        W = np.asarray(W, dtype=np.float64)
        K = float(W.shape[0]) if kind in BINARY_KINDS else 1.0
        return cls(W=W, kind=kind, norm_constant=K, assignment=assignment, converged=converged)

    @property
    def dim(self) -> int:
        return self.W.shape[0]

    @property
    def num_classes(self) -> int:
        return self.W.shape[1]

    @property
    def is_binary(self) -> bool:
        return self.kind in BINARY_KINDS

    @property
    def matrix(self) -> np.ndarray:
        """d x C matrix whose column y is the proxy of class y."""
        return self.W[:, self.assignment]

    def gram(self) -> np.ndarray:
        """Class-ordered Gram matrix WᵀW."""
        m = self.matrix
        return m.T @ m

    def with_assignment(self, assignment: np.ndarray, kind: Optional[str] = None) -> "ProxySet":
        """Same columns, new class assignment."""
        return ProxySet(W=self.W, kind=kind or self.kind, norm_constant=self.norm_constant,
                        assignment=assignment, converged=self.converged)

    def duplicate_columns(self) -> int:
        """Number of columns that repeat an earlier column."""
        return self.num_classes - len(np.unique(self.W.T, axis=0))
