"""
Losses of the hashing embedding and their closed-form gradients.

proxy term   single label: softmax cross-entropy over ⟨ν, w_k⟩
             multi label:  balanced binary cross-entropy with s_k = σ(w_kᵀν)
triplet term logistic loss with margin m on the Hamming surrogate
             d_H(ν_i, ν_j) = ½(d − ν_iᵀν_j)
joint        proxy_weight · mean proxy + λ · mean triplet

Proxies receive no gradient from `gradients`; `proxy_gradient` exists only
for the Learned baseline.
"""

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import expit, logsumexp, softmax

from core.errors import DimensionMismatchError, NoTripletsWarning
from hashing.layer import HashingLayer, pre_activation
from proxies.proxy_set import ProxySet


@dataclass(frozen=True)
class Batch:
    """A minibatch: inputs, their supervision and triplets as (a, p, n) row indices."""
    features: np.ndarray
    labels: Optional[np.ndarray] = None
    tags: Optional[np.ndarray] = None
    triplets: Optional[np.ndarray] = None

    @property
    def num_triplets(self) -> int:
        return 0 if self.triplets is None else len(self.triplets)


@dataclass(frozen=True)
class LossWeights:
    """How the loss terms are combined and scaled."""
    proxy_weight: float = 1.0
    lam: float = 0.0
    margin: float = 2.0
    logit_scale: float = 1.0
    balance_weights: Optional[np.ndarray] = None


class LayerGradients(NamedTuple):
    """∂loss/∂L and ∂loss/∂b; proxies have no entry."""
    L: np.ndarray
    bias: np.ndarray


def _proxy_matrix(W: ProxySet | np.ndarray) -> np.ndarray:
    return W.matrix if isinstance(W, ProxySet) else np.asarray(W, dtype=np.float64)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


# -------------------------------------------------------------------------------------------------
# Per-sample losses
# -------------------------------------------------------------------------------------------------

def proxy_losses_single(nu: np.ndarray, labels: np.ndarray, W: ProxySet | np.ndarray, logit_scale: float = 1.0) -> np.ndarray:
    """−log softmax(s·Wᵀν)_y for every row of an n x d batch."""
    W = _proxy_matrix(W)
    nu = np.atleast_2d(nu)
    if nu.shape[1] != W.shape[0]:
        raise DimensionMismatchError(f"embedding has {nu.shape[1]} dims, proxies have {W.shape[0]}")
    z = logit_scale * (nu @ W)
    labels = np.asarray(labels).reshape(-1)
    return logsumexp(z, axis=1) - z[np.arange(len(z)), labels]


def proxy_loss_single(nu: np.ndarray, y: int, W: ProxySet | np.ndarray, logit_scale: float = 1.0) -> float:
    """Softmax cross-entropy of one embedding against class y (0-based)."""
    return float(proxy_losses_single(nu, [y], W, logit_scale)[0])


def proxy_losses_multi(nu: np.ndarray, tags: np.ndarray, W: ProxySet | np.ndarray, c: np.ndarray, logit_scale: float = 1.0) -> np.ndarray:
    """Balanced binary cross-entropy per row."""
    W = _proxy_matrix(W)
    nu = np.atleast_2d(nu)
    t = np.atleast_2d(np.asarray(tags, dtype=np.float64))
    c = np.asarray(c, dtype=np.float64)
    z = logit_scale * (nu @ W)
    # −log σ(z) = softplus(−z), −log(1 − σ(z)) = softplus(z)
    return np.sum(c * t * _softplus(-z) + (1.0 - c) * (1.0 - t) * _softplus(z), axis=1)


def proxy_loss_multi(nu: np.ndarray, t: np.ndarray, W: ProxySet | np.ndarray, c: np.ndarray, logit_scale: float = 1.0) -> float:
    """Balanced binary cross-entropy of one embedding against its tag vector."""
    return float(proxy_losses_multi(nu, t, W, c, logit_scale)[0])


def hamming_surrogate(nu_i: np.ndarray, nu_j: np.ndarray) -> float | np.ndarray:
    """½(d − ν_iᵀν_j); exact Hamming distance for ±1 inputs."""
    nu_i, nu_j = np.asarray(nu_i, dtype=np.float64), np.asarray(nu_j, dtype=np.float64)
    if nu_i.shape[-1] != nu_j.shape[-1]:
        raise DimensionMismatchError(f"surrogate inputs have {nu_i.shape[-1]} and {nu_j.shape[-1]} dims")
    value = 0.5 * (nu_i.shape[-1] - np.sum(nu_i * nu_j, axis=-1))
    return float(value) if np.ndim(value) == 0 else value


def triplet_loss(nu_a: np.ndarray, nu_p: np.ndarray, nu_n: np.ndarray, m: float) -> float | np.ndarray:
    """log(1 + exp(m + d_H(a, p) − d_H(a, n))) in softplus form."""
    value = _softplus(m + hamming_surrogate(nu_a, nu_p) - hamming_surrogate(nu_a, nu_n))
    return float(value) if np.ndim(value) == 0 else value


# -------------------------------------------------------------------------------------------------
# Batch objective
# -------------------------------------------------------------------------------------------------

def balance_weights(tags: np.ndarray) -> np.ndarray:
    """c_k = 1 − f_k, f_k the fraction of samples carrying tag k."""
    return 1.0 - np.asarray(tags, dtype=np.float64).mean(axis=0)


def _terms(nu: np.ndarray, batch: Batch, W: np.ndarray, weights: LossWeights):
    """
    Mean proxy loss, mean triplet loss, ∂total/∂ν and ∂total/∂z where
    z = s·νᵀW are the logits.
    """
    B = len(nu)
    dnu = np.zeros_like(nu)
    dz = None
    proxy_mean = 0.0
    if weights.proxy_weight > 0:
        z = weights.logit_scale * (nu @ W)
        if batch.tags is not None:
            t = np.asarray(batch.tags, dtype=np.float64)
            c = weights.balance_weights if weights.balance_weights is not None else balance_weights(batch.tags)
            per_sample = np.sum(c * t * _softplus(-z) + (1.0 - c) * (1.0 - t) * _softplus(z), axis=1)
            dz = -c * t * expit(-z) + (1.0 - c) * (1.0 - t) * expit(z)
        else:
            per_sample = logsumexp(z, axis=1) - z[np.arange(B), batch.labels]
            dz = softmax(z, axis=1)
            dz[np.arange(B), batch.labels] -= 1.0
        proxy_mean = float(per_sample.mean())
        dz *= weights.proxy_weight / B
        dnu += weights.logit_scale * (dz @ W.T)

    triplet_mean = 0.0
    if weights.lam > 0 and batch.num_triplets:
        a, p, n = batch.triplets[:, 0], batch.triplets[:, 1], batch.triplets[:, 2]
        x = weights.margin + 0.5 * (np.sum(nu[a] * nu[n], axis=1) - np.sum(nu[a] * nu[p], axis=1))
        triplet_mean = float(_softplus(x).mean())
        g = (weights.lam / len(x)) * expit(x)[:, None]
        np.add.at(dnu, a, 0.5 * g * (nu[n] - nu[p]))
        np.add.at(dnu, p, -0.5 * g * nu[a])
        np.add.at(dnu, n, 0.5 * g * nu[a])

    return proxy_mean, triplet_mean, dnu, dz


def joint_loss(nu: np.ndarray, batch: Batch, W: ProxySet | np.ndarray, lam: float, m: float,
               logit_scale: float = 1.0, c: Optional[np.ndarray] = None, proxy_weight: float = 1.0) -> float:
    """
    proxy_weight · mean proxy loss + λ · mean triplet loss.

    A batch without triplets contributes a zero triplet term; with λ > 0 that
    raises a NoTripletsWarning.
    """
    if lam > 0 and not batch.num_triplets:
        warnings.warn("batch has no valid triplet; triplet term is 0", NoTripletsWarning)
    weights = LossWeights(proxy_weight=proxy_weight, lam=lam, margin=m, logit_scale=logit_scale, balance_weights=c)
    proxy_mean, triplet_mean, _, _ = _terms(np.atleast_2d(nu), batch, _proxy_matrix(W), weights)
    return proxy_weight * proxy_mean + lam * triplet_mean


class BackpropResult(NamedTuple):
    loss: float
    proxy_loss: float
    triplet_loss: float
    grads: LayerGradients
    proxy_grad: Optional[np.ndarray]


def backprop(L: np.ndarray, bias: np.ndarray, W: np.ndarray, batch: Batch, weights: LossWeights) -> BackpropResult:
    """
    Forward a batch through tanh(qL + b) and back-propagate the objective.

    `proxy_grad` is ∂loss/∂W (d x C, class order), None when the proxy term
    is off; only the Learned baseline consumes it.
    """
    nu = np.tanh(pre_activation(L, bias, batch.features))
    proxy_mean, triplet_mean, dnu, dz = _terms(nu, batch, W, weights)
    da = dnu * (1.0 - nu ** 2)
    q = np.asarray(batch.features, dtype=np.float64)
    grads = LayerGradients(L=q.T @ da, bias=da.sum(axis=0))
    dW = None if dz is None else weights.logit_scale * (nu.T @ dz)
    total = weights.proxy_weight * proxy_mean + weights.lam * triplet_mean
    return BackpropResult(total, proxy_mean, triplet_mean, grads, dW)


def gradients(batch: Batch, layer: HashingLayer, weights: LossWeights) -> LayerGradients:
    """Analytic ∂loss/∂L and ∂loss/∂b of the batch objective."""
    return backprop(layer.L, layer.bias, layer.proxies.matrix, batch, weights).grads


def proxy_gradient(batch: Batch, layer: HashingLayer, weights: LossWeights) -> np.ndarray:
    """∂loss/∂W (class order), for the Learned baseline."""
    dW = backprop(layer.L, layer.bias, layer.proxies.matrix, batch, weights).proxy_grad
    return np.zeros_like(layer.proxies.matrix) if dW is None else dW
