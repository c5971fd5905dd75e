"""Linear one-vs-rest SVM over improved Fisher vectors (or any features).

Each class c gets an independent binary model minimizing

    lambda * ||w||^2 / 2 + (1/n) * sum_i max(0, 1 - y_i (w . x_i + b))

with lambda = 1/C. The solver is a deterministic full-batch subgradient
descent over averaged iterates: because every step sees the exact mean
subgradient, duplicating the training set leaves the trajectory
unchanged (up to summation rounding), which is the invariance the tests
rely on. The model kept is the averaged iterate with the lowest
objective seen, so the recorded objective trace is non-increasing by
construction.

The solver also tracks per-example coefficients a_i alongside w, so that
w = sum_i a_i y_i x_i holds at all times. Storing this dual view lets
relevance code evaluate the support-vector form of the score
decomposition against the primal form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimError, TrainError, ValidationError
from .fisher import ImprovedFisherVector


def _as_feature(x) -> np.ndarray:
    if isinstance(x, ImprovedFisherVector):
        return x.values
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimError(f"expected a 1-d feature vector, got shape {arr.shape}")
    return arr


def _as_feature_matrix(features) -> np.ndarray:
    if isinstance(features, np.ndarray) and features.ndim == 2:
        return np.asarray(features, dtype=np.float64)
    return np.stack([_as_feature(f) for f in features])


@dataclass(frozen=True)
class DualView:
    """Per-example coefficients tying the primal weights to the data."""

    alphas: np.ndarray      # (n_train,) nonnegative coefficients a_i
    labels: np.ndarray      # (n_train,) +/-1
    features: np.ndarray    # (n_train, dim)

    def reconstruct_weights(self) -> np.ndarray:
        return (self.alphas * self.labels) @ self.features


@dataclass(frozen=True)
class SvmModel:
    """One binary linear scorer per class, plus decision thresholds."""

    classes: tuple[str, ...]
    weights: np.ndarray          # (n_classes, dim)
    biases: np.ndarray           # (n_classes,)
    c: float = 1.0
    epochs: int = 200
    seed: int = 0
    thresholds: np.ndarray | None = None
    duals: tuple[DualView | None, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.biases, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != len(self.classes) or b.shape != (len(self.classes),):
            raise DimError("weights/biases do not match the class list")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValidationError("non-finite SVM parameters")
        tau = self.thresholds
        tau = np.zeros(len(self.classes)) if tau is None else np.asarray(tau, dtype=np.float64)
        if tau.shape != (len(self.classes),):
            raise DimError("thresholds do not match the class list")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)
        object.__setattr__(self, "thresholds", tau)
        if self.duals is not None:
            for k, dual in enumerate(self.duals):
                if dual is None:
                    continue
                rebuilt = dual.reconstruct_weights()
                scale = max(1.0, float(np.max(np.abs(w[k]))))
                if np.max(np.abs(rebuilt - w[k])) > 1e-8 * scale:
                    raise ValidationError(
                        f"dual view inconsistent with primal weights for {self.classes[k]!r}")

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def class_index(self, name: str) -> int:
        try:
            return self.classes.index(name)
        except ValueError:
            raise KeyError(f"unknown class {name!r}") from None


def _objective(w: np.ndarray, b: float, lam: float,
               feats: np.ndarray, y: np.ndarray) -> float:
    margins = y * (feats @ w + b)
    hinge = np.maximum(0.0, 1.0 - margins)
    return float(0.5 * lam * np.dot(w, w) + hinge.mean())


def _train_binary(feats: np.ndarray, y: np.ndarray, c: float, epochs: int
                  ) -> tuple[np.ndarray, float, np.ndarray, list[float]]:
    """Best averaged iterate of full-batch subgradient descent.

    Returns (w, b, per-example coefficients a with w = sum a_i y_i x_i,
    non-increasing objective trace).
    """
    n, dim = feats.shape
    lam = 1.0 / c
    w = np.zeros(dim)
    b = 0.0
    a = np.zeros(n)
    # Running averages over iterates (including the zero start).
    avg_w, avg_b, avg_a = w.copy(), b, a.copy()
    best = (_objective(avg_w, avg_b, lam, feats, y), avg_w.copy(), avg_b, avg_a.copy())
    trace = [best[0]]
    for t in range(1, epochs + 1):
        margins = y * (feats @ w + b)
        active = margins < 1.0
        ay = np.where(active, y, 0.0)
        grad_w = lam * w - (ay @ feats) / n
        grad_b = -ay.sum() / n
        eta = 1.0 / (lam * (t + 1.0))
        w = w - eta * grad_w
        b = b - eta * grad_b
        a = (1.0 - eta * lam) * a + np.where(active, eta / n, 0.0)
        avg_w = avg_w + (w - avg_w) / (t + 1.0)
        avg_b = avg_b + (b - avg_b) / (t + 1.0)
        avg_a = avg_a + (a - avg_a) / (t + 1.0)
        obj = _objective(avg_w, avg_b, lam, feats, y)
        if obj < best[0]:
            best = (obj, avg_w.copy(), avg_b, avg_a.copy())
        trace.append(best[0])
    return best[1], best[2], best[3], trace


def train(features, labels: dict, c: float = 1.0, epochs: int = 200,
          seed: int = 0, store_dual: bool = False) -> SvmModel:
    """Fit one-vs-rest binary models.

    `labels` maps class name -> array of +/-1, one per feature row, in
    the class order the model should expose. Every class needs at least
    one positive and one negative example.
    """
    feats = _as_feature_matrix(features)
    classes = tuple(labels)
    if not classes:
        raise TrainError("no classes to train")
    n = feats.shape[0]
    weights = np.zeros((len(classes), feats.shape[1]))
    biases = np.zeros(len(classes))
    duals: list[DualView | None] = []
    for k, name in enumerate(classes):
        y = np.asarray(labels[name], dtype=np.float64)
        if y.shape != (n,):
            raise DimError(f"labels for {name!r} have shape {y.shape}, expected ({n},)")
        if not np.all(np.abs(y) == 1.0):
            raise ValidationError(f"labels for {name!r} must be +/-1")
        if not (np.any(y > 0) and np.any(y < 0)):
            raise TrainError(f"class {name!r} needs both positive and negative examples")
        w, b, alphas, _ = _train_binary(feats, y, c, epochs)
        weights[k] = w
        biases[k] = b
        duals.append(DualView(alphas, y, feats) if store_dual else None)
    return SvmModel(classes, weights, biases, c=c, epochs=epochs, seed=seed,
                    duals=tuple(duals) if store_dual else None)


def objective_trace(features, y, c: float = 1.0, epochs: int = 200) -> list[float]:
    """Objective values of the kept iterate per epoch (non-increasing)."""
    feats = _as_feature_matrix(features)
    return _train_binary(feats, np.asarray(y, dtype=np.float64), c, epochs)[3]


def score(model: SvmModel, phi_x, class_name: str) -> float:
    """f(x) = w . phi(x) + b for one class."""
    x = _as_feature(phi_x)
    if x.shape[0] != model.dim:
        raise DimError(f"feature length {x.shape[0]} vs model dim {model.dim}")
    k = model.class_index(class_name)
    return float(np.dot(model.weights[k], x) + model.biases[k])


def score_dual(model: SvmModel, phi_x, class_name: str) -> float:
    """Support-vector form of the score: b + sum_i a_i y_i (x_i . x)."""
    x = _as_feature(phi_x)
    k = model.class_index(class_name)
    if model.duals is None or model.duals[k] is None:
        raise ValidationError(f"no dual view stored for class {class_name!r}")
    dual = model.duals[k]
    return float(np.dot(dual.alphas * dual.labels, dual.features @ x) + model.biases[k])


@dataclass(frozen=True)
class Prediction:
    classes: tuple[str, ...]
    scores: np.ndarray
    labels: np.ndarray       # booleans, scores > thresholds
    thresholds: np.ndarray

    def as_dict(self) -> dict[str, tuple[float, bool]]:
        return {c: (float(self.scores[i]), bool(self.labels[i]))
                for i, c in enumerate(self.classes)}


def predict_multilabel(model: SvmModel, phi_x, classes=None) -> Prediction:
    """Scores and thresholded yes/no labels, one per class."""
    x = _as_feature(phi_x)
    if x.shape[0] != model.dim:
        raise DimError(f"feature length {x.shape[0]} vs model dim {model.dim}")
    names = tuple(classes) if classes is not None else model.classes
    idx = [model.class_index(c) for c in names]
    scores = model.weights[idx] @ x + model.biases[idx]
    tau = model.thresholds[idx]
    return Prediction(names, scores, scores > tau, tau)


def eer_threshold(scores, labels) -> float:
    """Threshold equalizing false-positive and false-negative rates.

    Brute-force sweep over midpoints of sorted scores (plus extremes);
    ties resolved toward the lowest threshold.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.shape != y.shape or s.ndim != 1 or s.size == 0:
        raise ValidationError("scores and +/-1 labels must be matching non-empty vectors")
    npos = float(np.sum(y > 0))
    nneg = float(np.sum(y < 0))
    if npos == 0 or nneg == 0:
        raise ValidationError("EER needs both positive and negative examples")
    uniq = np.unique(s)
    candidates = np.concatenate(([uniq[0] - 1.0], (uniq[:-1] + uniq[1:]) / 2.0, [uniq[-1] + 1.0]))
    best_tau, best_gap = candidates[0], np.inf
    for tau in candidates:
        pred = s > tau
        fpr = float(np.sum(pred & (y < 0))) / nneg
        fnr = float(np.sum(~pred & (y > 0))) / npos
        gap = abs(fpr - fnr)
        if gap < best_gap - 1e-15:
            best_tau, best_gap = float(tau), gap
    return best_tau


def with_thresholds(model: SvmModel, features, labels: dict) -> SvmModel:
    """Copy of the model with per-class EER thresholds fit on `features`."""
    feats = _as_feature_matrix(features)
    taus = np.array([eer_threshold(feats @ model.weights[k] + model.biases[k],
                                   labels[name])
                     for k, name in enumerate(model.classes)])
    return SvmModel(model.classes, model.weights, model.biases, model.c,
                    model.epochs, model.seed, taus, model.duals)
