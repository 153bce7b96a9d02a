"""
HashingLayer: ν(x) = tanh(Lᵀq(x) + b) in front of a fixed proxy classifier.
"""

from typing import List

import numpy as np
from pydantic import ConfigDict, Field, field_validator, model_validator

from core.errors import DimensionMismatchError
from core.models import ProxyHashModel
from core.utils import freeze
from proxies.proxy_set import ProxySet


class HashingLayer(ProxyHashModel):
    """Projection L (D x d), bias b (d) and the proxy set W it was trained against."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    L: np.ndarray
    bias: np.ndarray
    proxies: ProxySet
    loss_curve: List[float] = Field(default_factory=list, description="Mean training loss per epoch.")

    @field_validator("L", "bias", mode="before")
    @classmethod
    def _as_float(cls, value):
        return freeze(np.asarray(value, dtype=np.float64))

    @model_validator(mode="after")
    def _shapes(self):
        if self.L.ndim != 2 or self.bias.shape != (self.L.shape[1],):
            raise DimensionMismatchError(f"L is {self.L.shape}, bias is {self.bias.shape}")
        if self.proxies.dim != self.L.shape[1]:
            raise DimensionMismatchError(f"layer outputs {self.L.shape[1]} bits, proxies have dimension {self.proxies.dim}")
        return self

    @property
    def input_dim(self) -> int:
        return self.L.shape[0]

    @property
    def bits(self) -> int:
        return self.L.shape[1]


def initial_layer(D: int, proxies: ProxySet, rng: np.random.Generator) -> HashingLayer:
    """L ~ N(0, 1/D), b = 0."""
    return HashingLayer(L=rng.standard_normal((D, proxies.dim)) / np.sqrt(D), bias=np.zeros(proxies.dim), proxies=proxies)


def pre_activation(L: np.ndarray, bias: np.ndarray, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape[-1] != L.shape[0]:
        raise DimensionMismatchError(f"input has dimension {q.shape[-1]}, layer expects {L.shape[0]}")
    return q @ L + bias


def forward(layer: HashingLayer, q: np.ndarray) -> np.ndarray:
    """ν(x) for one D-vector or an n x D batch."""
    return np.tanh(pre_activation(layer.L, layer.bias, q))


def embed(layer: HashingLayer, features: np.ndarray, chunk: int = 8192) -> np.ndarray:
    """Forward a whole dataset in chunks."""
    features = np.asarray(features)
    return np.concatenate([forward(layer, features[i:i + chunk]) for i in range(0, len(features), chunk)]) \
        if len(features) else np.zeros((0, layer.bits))


def classification_accuracy(layer: HashingLayer, features: np.ndarray, labels: np.ndarray) -> float:
    """Accuracy of argmax_y ⟨ν(x), w_y⟩."""
    logits = embed(layer, features) @ layer.proxies.matrix
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(labels)))
