"""Multinomial logistic regression trained by full-batch gradient descent.

Features are standardized with statistics of the training data. The model
minimizes the mean softmax cross-entropy plus ``l2_weight * ||W||²`` over the
non-bias weights, starting from zero weights, with Armijo backtracking.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp, softmax

import cardiomech.types as _types
from cardiomech.errors import ValidationError

_LOGGER = logging.getLogger(__name__)

_ARMIJO = 1e-4
_MAX_BACKTRACKS = 60


@dataclass(frozen=True)
class LogRegHyper:
    """Training hyperparameters.

    :param l2_weight: Ridge weight on non-bias weights.
    :param max_iters: Maximum accepted gradient steps.
    :param tol: Gradient norm ending the optimization.
    :param seed: Recorded for provenance; training itself is deterministic.
    """

    l2_weight: float = 1e-3
    max_iters: int = 2000
    tol: float = 1e-5
    seed: int = 0

    def __post_init__(self) -> None:
        """Validate ranges.

        :raises ValidationError: On negative values.
        """
        if self.l2_weight < 0 or self.max_iters < 0 or self.tol < 0:
            raise ValidationError(f"invalid logistic regression settings: {self}")

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a JSON-compatible mapping."""
        return {
            "l2_weight": self.l2_weight,
            "max_iters": self.max_iters,
            "tol": self.tol,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> LogRegHyper:
        """Decode from :meth:`to_dict` output; absent keys take defaults.

        :param data: Mapping of hyperparameters.
        :returns: Hyperparameters.
        :raises ConfigError: On unknown keys.
        """
        _types.check_keys(data, ("l2_weight", "max_iters", "tol", "seed"), "logreg")
        d = cls()
        return cls(
            l2_weight=float(data.get("l2_weight", d.l2_weight)),
            max_iters=int(data.get("max_iters", d.max_iters)),
            tol=float(data.get("tol", d.tol)),
            seed=int(data.get("seed", d.seed)),
        )


def fit_standardization(
    x: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Return per-feature mean and std; constant features get std 1.

    :param x: Training matrix.
    :returns: ``(mean, std)``.
    """
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    return mean, std


@dataclass(frozen=True, eq=False)
class LogRegModel:
    """Trained logistic regression.

    :param weights: Matrix (classes, features + 1); column 0 is the bias.
    :param mean: Standardization means.
    :param std: Standardization stds.
    :param hyper: Training hyperparameters.
    :param loss_history: Training loss at the start and after every accepted
        step; empty for a model decoded from JSON.
    """

    weights: NDArray[np.float64]
    mean: NDArray[np.float64]
    std: NDArray[np.float64]
    hyper: LogRegHyper = field(default_factory=LogRegHyper)
    loss_history: tuple[float, ...] = ()

    @property
    def n_classes(self) -> int:
        """Number of classes."""
        return int(self.weights.shape[0])

    @property
    def n_features(self) -> int:
        """Number of input features."""
        return int(self.weights.shape[1]) - 1

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a JSON-compatible mapping."""
        return {
            "weights": self.weights.tolist(),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "hyper": self.hyper.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> LogRegModel:
        """Decode from :meth:`to_dict` output.

        :param data: Mapping decoded from JSON.
        :returns: The model.
        :raises ConfigError: On unknown keys.
        :raises ValidationError: On inconsistent shapes or non-finite weights.
        """
        _types.check_keys(data, ("weights", "mean", "std", "hyper"), "logreg model")
        weights = np.asarray(data["weights"], dtype=np.float64)
        mean = np.asarray(data["mean"], dtype=np.float64)
        std = np.asarray(data["std"], dtype=np.float64)
        if weights.ndim != 2 or weights.shape[1] != mean.size + 1:  # noqa: PLR2004
            raise ValidationError("model weights do not match its standardization")
        if mean.shape != std.shape or not np.all(np.isfinite(weights)):
            raise ValidationError("model contains invalid values")
        return cls(weights, mean, std, LogRegHyper.from_dict(data.get("hyper", {})))


def _design(x: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.hstack([np.ones((x.shape[0], 1)), x])


def _objective(
    w: NDArray[np.float64],
    xd: NDArray[np.float64],
    onehot: NDArray[np.float64],
    l2: float,
) -> tuple[float, NDArray[np.float64]]:
    logits = xd @ w.T
    lse = logsumexp(logits, axis=1)
    n = xd.shape[0]
    loss = float(np.sum(lse - np.sum(onehot * logits, axis=1))) / n
    loss += l2 * float(np.sum(w[:, 1:] ** 2))
    probs = np.exp(logits - lse[:, None])
    grad = (probs - onehot).T @ xd / n
    grad[:, 1:] += 2.0 * l2 * w[:, 1:]
    return loss, grad


def fit_logreg(
    x: NDArray[np.float64],
    y: NDArray[np.int64],
    n_classes: int,
    hyper: LogRegHyper | None = None,
) -> LogRegModel:
    """Train on raw arrays.

    :param x: Matrix (cases, features).
    :param y: Class index per case.
    :param n_classes: Number of declared classes.
    :param hyper: Hyperparameters.
    :returns: The trained model.
    :raises ValidationError: If fewer than two classes are present.
    """
    hyper = hyper or LogRegHyper()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if np.unique(y).size < 2:  # noqa: PLR2004
        raise ValidationError("logistic regression needs at least two classes")
    mean, std = fit_standardization(x)
    xd = _design((x - mean) / std)
    onehot = np.eye(n_classes)[y]
    w = np.zeros((n_classes, xd.shape[1]))
    loss, grad = _objective(w, xd, onehot, hyper.l2_weight)
    history = [loss]
    step = 1.0
    it = 0
    for it in range(hyper.max_iters):
        gnorm2 = float(np.sum(grad * grad))
        if np.sqrt(gnorm2) < hyper.tol:
            break
        trial, t_loss, t_grad = w, loss, grad
        for _ in range(_MAX_BACKTRACKS):
            trial = w - step * grad
            t_loss, t_grad = _objective(trial, xd, onehot, hyper.l2_weight)
            if t_loss <= loss - _ARMIJO * step * gnorm2:
                break
            step *= 0.5
        else:
            _LOGGER.debug("line search failed at iteration %d", it)
            break
        w, loss, grad = trial, t_loss, t_grad
        history.append(loss)
        step *= 2.0
    _LOGGER.debug(
        "logistic regression: %d iteration(s), loss %.6g, |grad| %.3g",
        it,
        loss,
        float(np.linalg.norm(grad)),
    )
    return LogRegModel(w, mean, std, hyper, tuple(history))


def train_logreg(
    train: _types.Dataset, hyper: LogRegHyper | None = None
) -> LogRegModel:
    """Train on a dataset.

    :param train: Training dataset.
    :param hyper: Hyperparameters.
    :returns: The trained model.
    :raises ValidationError: If fewer than two classes are present.
    """
    return fit_logreg(train.features, train.y, len(train.class_set), hyper)


def predict(
    model: LogRegModel, x: ArrayLike
) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
    """Predict class indices and probabilities.

    :param model: Trained model.
    :param x: One case (1-D) or a matrix (cases, features).
    :returns: ``(class indices, probabilities)``; ties go to the smaller index.
    :raises ValidationError: If the feature dimension differs.
    """
    arr = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if arr.shape[1] != model.n_features:
        raise ValidationError(
            f"expected {model.n_features} features, got {arr.shape[1]}"
        )
    logits = _design((arr - model.mean) / model.std) @ model.weights.T
    probs = softmax(logits, axis=1)
    return np.argmax(probs, axis=1).astype(np.int64), probs


class LogRegClassifier(_types.Classifier):
    """Classifier backend wrapping :func:`fit_logreg`.

    :param params: Hyperparameters accepted by :class:`LogRegHyper`.
    """

    def __init__(self, params: Mapping[str, float | int] | None = None) -> None:
        """Create an untrained classifier.

        :param params: Hyperparameters.
        :returns: None
        """
        self.hyper = LogRegHyper.from_dict(params or {})
        self.model: LogRegModel | None = None

    def fit(
        self, features: NDArray[np.float64], labels: NDArray[np.int64], n_classes: int
    ) -> None:
        """Train the model.

        :param features: Matrix (cases, features).
        :param labels: Class index per case.
        :param n_classes: Number of declared classes.
        :returns: None
        """
        self.model = fit_logreg(features, labels, n_classes, self.hyper)

    def predict(self, features: NDArray[np.float64]) -> NDArray[np.int64]:
        """Predict class indices.

        :param features: Matrix (cases, features).
        :returns: Class index per case.
        :raises ValidationError: If the classifier is untrained.
        """
        if self.model is None:
            raise ValidationError("classifier has not been trained")
        return predict(self.model, features)[0]

    def to_dict(self) -> dict[str, Any]:
        """Serialize the trained model.

        :raises ValidationError: If the classifier is untrained.
        """
        if self.model is None:
            raise ValidationError("classifier has not been trained")
        return {"name": "logreg", "model": self.model.to_dict()}


__all__ = [
    "LogRegClassifier",
    "LogRegHyper",
    "LogRegModel",
    "fit_logreg",
    "fit_standardization",
    "predict",
    "train_logreg",
]
