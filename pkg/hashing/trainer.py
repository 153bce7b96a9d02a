"""
Minibatch training of the hashing layer against fixed proxies.
"""

import logging
import math
import warnings
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.config import QUERY_FRACTION, TrainConfig
from core.errors import DimensionMismatchError, NoTripletsWarning, TrainingDivergedError
from core.utils import rngs
from features.dataset import FeatureDataset, primary_groups, query_split
from hashing.layer import HashingLayer, initial_layer
from hashing.losses import Batch, LossWeights, backprop, balance_weights
from hashing.triplets import sample_triplets
from proxies.proxy_set import ProxySet
from retrieval.engine import evaluate_layer

logger = logging.getLogger(__name__)


def loss_weights(cfg: TrainConfig, data: FeatureDataset) -> LossWeights:
    """Combine the configured terms; c_k comes from the training tags when not given."""
    c = None
    if data.is_multilabel:
        c = np.asarray(cfg.balance_weights, dtype=np.float64) if cfg.balance_weights is not None else balance_weights(data.tags)
        if c.shape != (data.num_classes,):
            raise DimensionMismatchError(f"{c.size} balance weights for {data.num_classes} tags")
    return LossWeights(proxy_weight=cfg.proxy_weight, lam=cfg.triplet_weight, margin=cfg.triplet_margin,
                       logit_scale=cfg.logit_scale, balance_weights=c)


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    """Step schedule: lr, then lr·decay from the decay epoch on."""
    decay_epoch = math.floor(cfg.lr_decay_at * cfg.epochs)
    return cfg.learning_rate * (cfg.lr_decay if epoch >= decay_epoch else 1.0)


def train_with_history(data: FeatureDataset, proxies: ProxySet, cfg: TrainConfig = TrainConfig()) -> Tuple[HashingLayer, pd.DataFrame]:
    """
    Train ν(x) = tanh(Lᵀq(x) + b) with momentum SGD.

    Initialization, data order and triplet sampling draw from separate
    streams of `cfg.seed`, so runs that differ only in λ start identically.
    Proxies stay untouched unless `cfg.learn_proxies` is set.

    Args:
        data: Training set (labels or tags).
        proxies: Proxy set with one column per class or tag.
        cfg: Training hyper-parameters.

    Returns:
        (trained layer, per-batch history with columns epoch, batch, lr,
        loss, proxy_loss, triplet_loss, triplets).

    Raises:
        TrainingDivergedError: on a non-finite loss.
    """
    if proxies.num_classes != data.num_classes:
        raise DimensionMismatchError(f"{proxies.num_classes} proxies for {data.num_classes} classes")
    init_rng, order_rng, triplet_rng = rngs(cfg.seed, 3)
    start = initial_layer(data.dim, proxies, init_rng)
    L, bias = start.L.copy(), start.bias.copy()
    W = proxies.matrix.copy()
    vel_L, vel_b, vel_W = np.zeros_like(L), np.zeros_like(bias), np.zeros_like(W)
    weights = loss_weights(cfg, data)
    payload = data.payload
    features = data.features.astype(np.float64)
    n = data.num_samples

    rows = []
    loss_curve = []
    empty_batches = 0
    for epoch in range(cfg.epochs):
        lr = learning_rate(cfg, epoch)
        order = order_rng.permutation(n)
        epoch_losses = []
        for k, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            triplets = sample_triplets(payload[idx], triplet_rng) if cfg.uses_triplets else None
            batch = Batch(features=features[idx],
                          labels=None if data.is_multilabel else payload[idx],
                          tags=payload[idx] if data.is_multilabel else None,
                          triplets=triplets)
            if weights.lam > 0 and batch.num_triplets == 0:
                empty_batches += 1
            result = backprop(L, bias, W, batch, weights)
            if not np.isfinite(result.loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {k} (lr={lr}, proxy={result.proxy_loss}, "
                    f"triplet={result.triplet_loss}, max |L|={np.abs(L).max():.3e})")

            vel_L = cfg.momentum * vel_L - lr * result.grads.L
            vel_b = cfg.momentum * vel_b - lr * result.grads.bias
            L += vel_L
            bias += vel_b
            if cfg.learn_proxies and result.proxy_grad is not None:
                vel_W = cfg.momentum * vel_W - lr * result.proxy_grad
                W += vel_W

            epoch_losses.append(result.loss)
            rows.append({"epoch": epoch, "batch": k, "lr": lr, "loss": result.loss,
                         "proxy_loss": result.proxy_loss, "triplet_loss": result.triplet_loss,
                         "triplets": batch.num_triplets})
        loss_curve.append(float(np.mean(epoch_losses)))
        logger.debug("epoch %d: loss %.6f (lr %.4g)", epoch, loss_curve[-1], lr)

    if empty_batches:
        warnings.warn(f"{empty_batches} batches had no valid triplet; their triplet term is 0", NoTripletsWarning)
    logger.info("Trained %s layer D=%d d=%d for %d epochs: loss %.4f -> %.4f",
                proxies.kind, data.dim, proxies.dim, cfg.epochs, loss_curve[0], loss_curve[-1])
    final_proxies = ProxySet.from_matrix(W, "learned") if cfg.learn_proxies else proxies
    layer = HashingLayer(L=L, bias=bias, proxies=final_proxies, loss_curve=loss_curve)
    return layer, pd.DataFrame(rows)


def train(data: FeatureDataset, proxies: ProxySet, cfg: TrainConfig = TrainConfig()) -> HashingLayer:
    """Train a hashing layer; see `train_with_history`."""
    return train_with_history(data, proxies, cfg)[0]


def lambda_sweep(data: FeatureDataset, proxies: ProxySet, cfg: TrainConfig, grid: Sequence[float],
                 validation_fraction: float = QUERY_FRACTION, top_n: Optional[int] = None) -> Tuple[float, Dict[float, float]]:
    """
    Choose λ for the joint objective by validation mAP.

    A `validation_fraction` share of every class (first tag for multi-label
    rows) becomes validation queries; the layer for each λ trains on the
    rest, which also serves as the retrieval database.

    Returns:
        (best λ, validation mAP per λ); ties go to the earlier grid entry.
    """
    split = query_split(primary_groups(data), validation_fraction, np.random.default_rng(cfg.seed))
    fit_rows, held_rows = np.flatnonzero(split == "train"), np.flatnonzero(split == "query")
    if held_rows.size == 0 or fit_rows.size == 0:
        raise ValueError("validation split is empty; raise the validation fraction or add samples")
    fit, held_out = data.subset(fit_rows), data.subset(held_rows)
    scores: Dict[float, float] = {}
    for lam in grid:
        layer = train(fit, proxies, cfg.model_copy(update={"objective": "joint", "lam": float(lam)}))
        scores[float(lam)] = evaluate_layer(layer, held_out, fit, "validation", top_n=top_n, with_accuracy=False).mean_ap
        logger.info("λ=%g: validation mAP %.4f", lam, scores[float(lam)])
    best = max(scores, key=lambda lam: (scores[lam], -list(scores).index(lam)))
    return best, scores
