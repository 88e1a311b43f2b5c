"""From-scratch binary linear classifiers and the coalition utility function.

Both trainers run full-batch (sub)gradient descent from the zero weight
vector for a fixed epoch count, so a trained model is a pure function of
(spec, training data). That determinism is what turns test-set accuracy into
a well-defined set function over coalitions of training tuples.

The inner descent loops are compiled with numba; the arithmetic is plain
IEEE double operations in a fixed order, so results are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Mapping

import numpy as np
from numba import njit

from .datasets import Dataset, subset


class ModelKind(Enum):
    LOGISTIC = "logistic"
    LINEAR_SVM = "svm"


#: Fallback "class" marking the empty-coalition baseline. Its accuracy is
#: scored as the random-guess expectation (1/2 for this binary engine)
#: rather than an empirical match rate; see :func:`accuracy`.
UNIFORM_FALLBACK = -1

#: Margin slack within which a training tuple counts as a support vector.
DEFAULT_SV_TOL = 1e-3


@dataclass(frozen=True)
class ModelSpec:
    """Training configuration; together with the data it fixes the model."""

    kind: ModelKind
    learning_rate: float
    l2_strength: float
    epochs: int
    train_seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.l2_strength < 0:
            raise ValueError("l2_strength must be nonnegative")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")

    def to_config(self) -> dict[str, Any]:
        """Flat key-value form used by CLI flags and run manifests."""
        return {
            "kind": self.kind.value,
            "learning_rate": self.learning_rate,
            "l2_strength": self.l2_strength,
            "epochs": self.epochs,
            "train_seed": self.train_seed,
        }

    @classmethod
    def from_config(cls, config: Mapping[str, Any]) -> "ModelSpec":
        return cls(
            kind=ModelKind(config["kind"]),
            learning_rate=float(config["learning_rate"]),
            l2_strength=float(config["l2_strength"]),
            epochs=int(config["epochs"]),
            train_seed=int(config.get("train_seed", 0)),
        )


def default_spec(kind: ModelKind, train_seed: int = 0) -> ModelSpec:
    """Documented default hyperparameters per model kind."""
    if kind is ModelKind.LOGISTIC:
        return ModelSpec(kind, learning_rate=0.1, l2_strength=1e-4, epochs=500, train_seed=train_seed)
    return ModelSpec(kind, learning_rate=0.1, l2_strength=1e-2, epochs=1000, train_seed=train_seed)


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """A linear decision rule, or a fallback constant for degenerate data.

    Exactly one of (weights, bias) or fallback is active. ``fallback`` holds
    the constant class predicted for single-class coalitions, or
    :data:`UNIFORM_FALLBACK` for the empty-coalition baseline.
    """

    kind: ModelKind
    weights: np.ndarray | None
    bias: float = 0.0
    fallback: int | None = None

    def __post_init__(self) -> None:
        if (self.weights is None) == (self.fallback is None):
            raise ValueError("exactly one of weights or fallback must be active")
        if self.weights is not None:
            w = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float64))
            if w.ndim != 1:
                raise ValueError("weights must be a vector")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)


@njit(cache=True)
def _fit_logistic(X, y, lr, l2, epochs, record_loss):  # pragma: no cover - compiled
    m, d = X.shape
    w = np.zeros(d)
    b = 0.0
    curve = np.zeros(epochs if record_loss else 0)
    for t in range(epochs):
        gw = np.zeros(d)
        gb = 0.0
        for i in range(m):
            z = b
            for j in range(d):
                z += X[i, j] * w[j]
            if z >= 0.0:
                p = 1.0 / (1.0 + math.exp(-z))
            else:
                ez = math.exp(z)
                p = ez / (1.0 + ez)
            r = p - y[i]
            for j in range(d):
                gw[j] += r * X[i, j]
            gb += r
        for j in range(d):
            w[j] -= lr * (gw[j] / m + l2 * w[j])
        b -= lr * (gb / m)
        if record_loss:
            total = 0.0
            for i in range(m):
                z = b
                for j in range(d):
                    z += X[i, j] * w[j]
                yz = (2.0 * y[i] - 1.0) * z
                if yz > 0.0:
                    total += math.log1p(math.exp(-yz))
                else:
                    total += -yz + math.log1p(math.exp(yz))
            reg = 0.0
            for j in range(d):
                reg += w[j] * w[j]
            curve[t] = total / m + 0.5 * l2 * reg
    return w, b, curve


@njit(cache=True)
def _fit_svm(X, y, lr, l2, epochs, record_loss):  # pragma: no cover - compiled
    m, d = X.shape
    w = np.zeros(d)
    b = 0.0
    curve = np.zeros(epochs if record_loss else 0)
    for t in range(epochs):
        gw = np.zeros(d)
        gb = 0.0
        for i in range(m):
            yp = 2.0 * y[i] - 1.0
            z = b
            for j in range(d):
                z += X[i, j] * w[j]
            if yp * z < 1.0:
                for j in range(d):
                    gw[j] -= yp * X[i, j]
                gb -= yp
        for j in range(d):
            w[j] -= lr * (gw[j] / m + l2 * w[j])
        b -= lr * (gb / m)
        if record_loss:
            total = 0.0
            for i in range(m):
                yp = 2.0 * y[i] - 1.0
                z = b
                for j in range(d):
                    z += X[i, j] * w[j]
                hinge = 1.0 - yp * z
                if hinge > 0.0:
                    total += hinge
            reg = 0.0
            for j in range(d):
                reg += w[j] * w[j]
            curve[t] = total / m + 0.5 * l2 * reg
    return w, b, curve


def _check_binary(labels: np.ndarray) -> None:
    present = np.unique(labels)
    if present.size and present.max() > 1:
        raise ValueError(
            f"binary-only engine: labels must lie in {{0, 1}}, got classes {present.tolist()}"
        )


def _descend(spec: ModelSpec, train_set: Dataset, record_loss: bool):
    X = train_set.features
    y = train_set.labels.astype(np.float64)
    fit = _fit_logistic if spec.kind is ModelKind.LOGISTIC else _fit_svm
    return fit(X, y, spec.learning_rate, spec.l2_strength, spec.epochs, record_loss)


def train(spec: ModelSpec, train_set: Dataset) -> TrainedModel:
    """Fit a model on ``train_set``; deterministic given (spec, data).

    Degenerate coalitions short-circuit: an empty set yields the uniform
    baseline, a single-class set yields a constant predictor of that class.
    """
    _check_binary(train_set.labels)
    if len(train_set) == 0:
        return TrainedModel(spec.kind, None, fallback=UNIFORM_FALLBACK)
    present = np.unique(train_set.labels)
    if present.size == 1:
        return TrainedModel(spec.kind, None, fallback=int(present[0]))
    w, b, _ = _descend(spec, train_set, record_loss=False)
    return TrainedModel(spec.kind, w, float(b))


def training_loss_curve(spec: ModelSpec, train_set: Dataset) -> np.ndarray:
    """Per-epoch regularized loss, evaluated after each update."""
    _check_binary(train_set.labels)
    if np.unique(train_set.labels).size != 2:
        raise ValueError("loss curve requires a two-class training set")
    _, _, curve = _descend(spec, train_set, record_loss=True)
    return curve


def predict(model: TrainedModel, x: Iterable[float]) -> int:
    """Class for a single feature vector: 1 if w.x + b > 0, else 0."""
    if model.fallback is not None:
        # The uniform baseline scores every class equally; the tie rule
        # makes it predict class 0.
        return model.fallback if model.fallback >= 0 else 0
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.weights.shape:
        raise ValueError(f"expected {model.weights.shape[0]} features, got {x.shape}")
    return int(float(model.weights @ x) + model.bias > 0.0)


def accuracy(model: TrainedModel, test_set: Dataset) -> float:
    """Expected test-set accuracy, a fraction in [0, 1].

    For linear and constant-class models this is the fraction of rows whose
    prediction matches the label. The uniform baseline (empty-coalition
    model) is scored as the random-guess expectation 1/2, which defines the
    empty-coalition utility.
    """
    if len(test_set) == 0:
        raise ValueError("accuracy requires a nonempty test set")
    if model.fallback is not None:
        if model.fallback == UNIFORM_FALLBACK:
            return 0.5
        return float(np.mean(test_set.labels == model.fallback))
    if test_set.num_features != model.weights.shape[0]:
        raise ValueError(
            f"model expects {model.weights.shape[0]} features, "
            f"test set has {test_set.num_features}"
        )
    scores = test_set.features @ model.weights + model.bias
    predictions = (scores > 0.0).astype(np.int64)
    return float(np.mean(predictions == test_set.labels))


def utility(
    coalition: Iterable[int],
    spec: ModelSpec,
    train_set: Dataset,
    test_set: Dataset,
) -> float:
    """Test accuracy of the model trained on the given coalition.

    The coalition is canonicalized to ascending row order before training,
    so the result depends only on the coalition as a set.
    """
    positions = sorted(int(i) for i in coalition)
    model = train(spec, subset(train_set, positions))
    return accuracy(model, test_set)


@dataclass(frozen=True)
class CoalitionUtility:
    """Picklable set function mapping coalitions to test accuracy."""

    spec: ModelSpec
    train_set: Dataset
    test_set: Dataset

    def __call__(self, coalition: tuple[int, ...]) -> float:
        return utility(coalition, self.spec, self.train_set, self.test_set)


def support_vectors(
    model: TrainedModel, train_set: Dataset, tol: float = DEFAULT_SV_TOL
) -> set[int]:
    """Ids of training tuples within the margin band of a linear SVM.

    A tuple with signed margin y'(w.x + b) <= 1 + tol counts, where
    y' = 2*label - 1.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    if model.kind is not ModelKind.LINEAR_SVM:
        raise ValueError("support vectors are defined only for linear SVM models")
    if model.weights is None:
        raise ValueError("fallback models have no margin; train on a two-class set")
    _check_binary(train_set.labels)
    signed = 2.0 * train_set.labels - 1.0
    margins = signed * (train_set.features @ model.weights + model.bias)
    return {int(i) for i in train_set.ids[margins <= 1.0 + tol]}
