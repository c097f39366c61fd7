"""Supervised heads and evaluation metrics.

A head is a small linear model fitted on either raw features or learned
embeddings: multinomial logistic regression (gradient descent, L2 penalty)
for classification, closed-form ridge regression for real targets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .exceptions import FormatError, NumericError, TrainingError

LOGISTIC = "logistic"
LINEAR = "linear"

HEAD_FORMAT = "tcl-head"
HEAD_VERSION = 1


@dataclass
class HeadConfig:
    learning_rate: float = 0.1
    epochs: int = 200
    l2: float = 1e-4
    seed: int = 0


@dataclass
class Head:
    """Fitted prediction head.  ``classes`` is None for regression."""

    kind: str
    weights: np.ndarray
    bias: np.ndarray
    classes: int | None = None

    @property
    def input_dim(self) -> int:
        return self.weights.shape[0]


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_features(X, head: Head | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    if head is not None and X.shape[1] != head.input_dim:
        raise ValueError(f"head expects {head.input_dim} features, got {X.shape[1]}")
    return X


def fit_softmax_regression(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    learning_rate: float,
    epochs: int,
    l2: float,
    require_monotone: bool = False,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Full-batch gradient descent on the multinomial logistic objective.

    Weights start at zero, so the fit is deterministic.  Returns weights,
    bias, and the per-epoch NLL trace.  When ``require_monotone`` is set an
    epoch that increases the regularized objective raises TrainingError.
    """
    n, d = X.shape
    W = np.zeros((d, n_classes))
    b = np.zeros(n_classes)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0

    def objective() -> tuple[float, float]:
        p = _softmax_rows(X @ W + b)
        nll = -float(np.mean(np.log(p[np.arange(n), y] + 1e-300)))
        return nll + 0.5 * l2 * float(np.sum(W * W)), nll

    nll_trace: list[float] = []
    prev_obj, nll = objective()
    for epoch in range(epochs):
        p = _softmax_rows(X @ W + b)
        gW = X.T @ (p - onehot) / n + l2 * W
        gb = (p - onehot).sum(axis=0) / n
        W -= learning_rate * gW
        b -= learning_rate * gb
        obj, nll = objective()
        if not np.isfinite(obj):
            raise NumericError("non-finite training objective")
        if require_monotone and obj > prev_obj + 1e-12:
            raise TrainingError(
                f"objective rose at epoch {epoch} ({prev_obj:.6g} -> {obj:.6g}); "
                "use a smaller learning rate"
            )
        prev_obj = obj
        nll_trace.append(nll)
    return W, b, nll_trace


def fit_logistic(X, y, config: HeadConfig | None = None) -> Head:
    """Multinomial logistic regression head; requires >= 2 classes present."""
    config = config or HeadConfig()
    X = _check_features(X)
    y = np.asarray(y)
    if y.shape != (X.shape[0],):
        raise ValueError("labels must be one per row")
    y = y.astype(np.int64)
    classes = int(y.max()) + 1 if y.size else 0
    if np.unique(y).size < 2:
        raise ValueError("logistic head needs at least 2 classes present")
    W, b, _ = fit_softmax_regression(
        X, y, classes, config.learning_rate, config.epochs, config.l2
    )
    return Head(LOGISTIC, W, b, classes)


def fit_linear(X, y, ridge: float = 1e-6) -> Head:
    """Closed-form ridge regression (normal equations, intercept unpenalized).

    ``ridge=0`` solves plain least squares and raises NumericError when the
    system is singular.
    """
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    X = _check_features(X)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (X.shape[0],):
        raise ValueError("targets must be one per row")
    n, d = X.shape
    if ridge == 0 and n <= d:
        raise ValueError("need n > d rows for an unregularized fit")
    Xa = np.hstack([X, np.ones((n, 1))])
    gram = Xa.T @ Xa
    penalty = ridge * np.eye(d + 1)
    penalty[d, d] = 0.0
    try:
        coef = np.linalg.solve(gram + penalty, Xa.T @ y)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular normal equations: {exc}") from exc
    return Head(LINEAR, coef[:d], np.array([coef[d]]), None)


def predict(head: Head, X) -> np.ndarray:
    """Class indices for logistic heads, real predictions for linear heads."""
    X = _check_features(X, head)
    if head.kind == LOGISTIC:
        return np.argmax(X @ head.weights + head.bias, axis=1)
    return X @ head.weights + head.bias[0]


def predict_proba(head: Head, X) -> np.ndarray:
    if head.kind != LOGISTIC:
        raise ValueError("probabilities are only defined for logistic heads")
    X = _check_features(X, head)
    return _softmax_rows(X @ head.weights + head.bias)


def save_head(head: Head, path) -> None:
    payload = {
        "format": HEAD_FORMAT,
        "version": HEAD_VERSION,
        "kind": head.kind,
        "weights": head.weights.tolist(),
        "bias": head.bias.tolist(),
        "classes": head.classes,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_head(path) -> Head:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: corrupt head file: {exc}") from exc
    if payload.get("format") != HEAD_FORMAT or payload.get("version") != HEAD_VERSION:
        raise FormatError(f"{path}: not a version-{HEAD_VERSION} head file")
    kind = payload["kind"]
    weights = np.asarray(payload["weights"], dtype=np.float64)
    bias = np.asarray(payload["bias"], dtype=np.float64)
    if kind == LOGISTIC and weights.ndim != 2:
        raise FormatError(f"{path}: logistic head weights must be 2-D")
    return Head(kind, weights, bias, payload.get("classes"))


def _check_pair(y_true, y_pred) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(y_true)
    p = np.asarray(y_pred)
    if t.size == 0 or p.size == 0:
        raise ValueError("metric inputs must be non-empty")
    if t.shape != p.shape:
        raise ValueError("truth and prediction lengths differ")
    return t, p


def metric_accuracy(y_true, y_pred) -> float:
    t, p = _check_pair(y_true, y_pred)
    return float(np.mean(t == p))


def metric_f1_macro(y_true, y_pred) -> float:
    """Unweighted mean of per-class F1; classes absent from both truth and
    prediction are skipped."""
    t, p = _check_pair(y_true, y_pred)
    scores = []
    for cls in np.unique(np.concatenate([t, p])):
        tp = float(np.sum((t == cls) & (p == cls)))
        fp = float(np.sum((t != cls) & (p == cls)))
        fn = float(np.sum((t == cls) & (p != cls)))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom > 0 else 0.0)
    return float(np.mean(scores))


def metric_rmse(y_true, y_pred) -> float:
    t, p = _check_pair(y_true, y_pred)
    d = t.astype(np.float64) - p.astype(np.float64)
    return float(np.sqrt(np.mean(d * d)))


def metric_r2(y_true, y_pred) -> float:
    """Coefficient of determination; can go negative on shifted data."""
    t, p = _check_pair(y_true, y_pred)
    t = t.astype(np.float64)
    p = p.astype(np.float64)
    ss_res = float(np.sum((t - p) ** 2))
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0.0:
        return 0.0  # constant truth: r2 is undefined, report 0
    return 1.0 - ss_res / ss_tot
