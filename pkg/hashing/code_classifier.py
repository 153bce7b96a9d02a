"""
Softmax regression on hash codes, used to score how much class information
binary codes of unseen classes still carry.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np
from pydantic import ConfigDict, Field
from scipy.special import logsumexp, softmax

from core.errors import DimensionMismatchError
from core.models import ProxyHashModel
from retrieval.codes import BinaryCodeDatabase

logger = logging.getLogger(__name__)

CLASSIFIER_EPOCHS = 300
CLASSIFIER_LEARNING_RATE = 0.5
CLASSIFIER_L2 = 1e-4


class CodeClassifier(ProxyHashModel):
    """Weights V (d x K) and bias c over ±1 codes; `classes[k]` is the label of output k."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    weights: np.ndarray
    bias: np.ndarray
    classes: np.ndarray
    accuracy: float = Field(description="Accuracy on the evaluation codes, or the training codes when none were given.")
    loss_curve: List[float] = Field(default_factory=list)


def _signs(codes: BinaryCodeDatabase | np.ndarray) -> np.ndarray:
    if isinstance(codes, BinaryCodeDatabase):
        return codes.to_signs()
    return np.atleast_2d(np.asarray(codes, dtype=np.float64))


def code_loss_and_grad(V: np.ndarray, c: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float = 0.0) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Mean cross-entropy of softmax(XV + c) plus ½·l2·‖V‖², with its gradients.

    Returns:
        (loss, ∂loss/∂V, ∂loss/∂c)
    """
    n = X.shape[0]
    z = X @ V + c
    loss = float(np.mean(logsumexp(z, axis=1) - z[np.arange(n), y]) + 0.5 * l2 * np.sum(V ** 2))
    residual = softmax(z, axis=1)
    residual[np.arange(n), y] -= 1.0
    residual /= n
    return loss, X.T @ residual + l2 * V, residual.sum(axis=0)


def predict(clf: CodeClassifier, codes: BinaryCodeDatabase | np.ndarray) -> np.ndarray:
    """Predicted labels (in the caller's label space)."""
    z = _signs(codes) @ clf.weights + clf.bias
    return clf.classes[np.argmax(z, axis=1)]


def train_code_classifier(codes: BinaryCodeDatabase | np.ndarray, labels: Optional[np.ndarray] = None,
                          eval_codes: BinaryCodeDatabase | np.ndarray | None = None, eval_labels: Optional[np.ndarray] = None,
                          epochs: int = CLASSIFIER_EPOCHS, learning_rate: float = CLASSIFIER_LEARNING_RATE,
                          l2: float = CLASSIFIER_L2) -> CodeClassifier:
    """
    Multinomial logistic regression by full-batch gradient descent.

    Args:
        codes: Packed codes, or an n x d matrix of ±1 reals.
        labels: Per-code labels; taken from `codes` when it is a database.
        eval_codes, eval_labels: Held-out set the reported accuracy is measured on.

    Raises:
        ValueError: fewer than two distinct labels.
    """
    X = _signs(codes)
    if labels is None:
        if not isinstance(codes, BinaryCodeDatabase) or codes.labels is None:
            raise ValueError("labels are required for raw code matrices")
        labels = codes.labels
    labels = np.asarray(labels)
    if labels.shape != (X.shape[0],):
        raise DimensionMismatchError(f"{X.shape[0]} codes but {labels.size} labels")
    classes, y = np.unique(labels, return_inverse=True)
    if classes.size < 2:
        raise ValueError("softmax regression needs at least two classes")

    V = np.zeros((X.shape[1], classes.size))
    c = np.zeros(classes.size)
    curve = []
    for _ in range(epochs):
        loss, dV, dc = code_loss_and_grad(V, c, X, y, l2)
        curve.append(loss)
        V -= learning_rate * dV
        c -= learning_rate * dc

    clf = CodeClassifier(weights=V, bias=c, classes=classes, accuracy=0.0, loss_curve=curve)
    if eval_codes is None:
        eval_codes, eval_labels = X, labels
    elif eval_labels is None:
        eval_labels = eval_codes.labels
    accuracy = float(np.mean(predict(clf, eval_codes) == np.asarray(eval_labels)))
    logger.info("Code classifier over %d classes: loss %.4f, accuracy %.4f", classes.size, curve[-1], accuracy)
    return clf.model_copy(update={"accuracy": accuracy})
