"""Multiclass linear SVM trained by seeded stochastic subgradient descent,
with stratified k-fold cross-validation.

Features are standardized and augmented with a constant 1 column, so each
class bias is regularized along with its weights.  Two schemes:

``joint`` (default)
    One problem over all classes with the multiclass hinge
    ``max(0, 1 + max_{j != y} s_j - s_y)``.
``ovr``
    One binary hinge problem per class against the rest.

Both minimize ``lam/2 * |W|^2 + mean(loss)`` with step ``1 / (lam * t)``
and return the average of the iterates over the second half of training.
The joint loss matters when a class sits between two others in feature
space (plain touches between opposite polarities), which no one-vs-rest
linear scorer can isolate.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numba
import numpy as np

from .features import FeatureVector, Scaler

DEFAULT_LAMBDA = 1e-4
DEFAULT_EPOCHS = 200
SCHEMES = ("joint", "ovr")


class DegenerateDatasetError(ValueError):
    pass


class StratificationError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


@dataclass
class Dataset:
    rows: List[FeatureVector]
    classes: List[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.classes:
            self.classes = sorted({r.label for r in self.rows})
        dims = {r.dim for r in self.rows}
        if len(dims) > 1:
            raise ValueError(f"rows disagree on dimensionality: {sorted(dims)}")
        unknown = {r.label for r in self.rows} - set(self.classes)
        if unknown:
            raise ValueError(f"row labels {sorted(unknown)} not among classes {self.classes}")

    def __len__(self):
        return len(self.rows)

    @property
    def dim(self) -> int:
        return self.rows[0].dim if self.rows else 0

    @property
    def X(self) -> np.ndarray:
        return np.array([r.values for r in self.rows])

    @property
    def y(self) -> np.ndarray:
        index = {c: i for i, c in enumerate(self.classes)}
        return np.array([index[r.label] for r in self.rows], dtype=np.int64)

    def subset(self, idx) -> "Dataset":
        return Dataset([self.rows[i] for i in idx], list(self.classes), dict(self.meta))

    def counts(self) -> Dict[str, int]:
        out = {c: 0 for c in self.classes}
        for r in self.rows:
            out[r.label] += 1
        return out


@numba.njit(cache=True)
def _objective(w, X, y, lam):
    loss = 0.0
    for i in range(X.shape[0]):
        m = y[i] * np.dot(w, X[i])
        if m < 1.0:
            loss += 1.0 - m
    return 0.5 * lam * np.dot(w, w) + loss / X.shape[0]


@numba.njit(cache=True)
def _sgd(X, y, lam, orders, history):
    n, d = X.shape
    epochs = orders.shape[0]
    start = epochs // 2
    w = np.zeros(d)
    avg = np.zeros(d)
    count = 0
    t = 0
    for e in range(epochs):
        for k in range(n):
            i = orders[e, k]
            t += 1
            eta = 1.0 / (lam * t)
            viol = y[i] * np.dot(w, X[i]) < 1.0
            shrink = 1.0 - 1.0 / t
            for j in range(d):
                w[j] *= shrink
            if viol:
                for j in range(d):
                    w[j] += eta * y[i] * X[i, j]
            if e >= start:
                count += 1
                for j in range(d):
                    avg[j] += (w[j] - avg[j]) / count
        history[e] = _objective(avg if e >= start else w, X, y, lam)
    return avg


@numba.njit(cache=True)
def _objective_joint(W, X, y, lam):
    loss = 0.0
    K = W.shape[0]
    for i in range(X.shape[0]):
        s = W @ X[i]
        worst = -1e300
        for j in range(K):
            if j != y[i] and s[j] > worst:
                worst = s[j]
        m = s[y[i]] - worst
        if m < 1.0:
            loss += 1.0 - m
    return 0.5 * lam * np.sum(W * W) + loss / X.shape[0]


@numba.njit(cache=True)
def _sgd_joint(X, y, K, lam, orders, history, keys):
    n, d = X.shape
    epochs = orders.shape[0]
    start = epochs // 2
    W = np.zeros((K, d))
    avg = np.zeros((K, d))
    count = 0
    t = 0
    for e in range(epochs):
        for k in range(n):
            i = orders[e, k]
            t += 1
            eta = 1.0 / (lam * t)
            s = W @ X[i]
            r = -1
            worst = -1e300
            for j in range(K):
                # equal scores (all of them at t = 1) go to the smaller label key,
                # so the result does not depend on class order
                if j != y[i] and (s[j] > worst or (s[j] == worst and keys[j] < keys[r])):
                    worst = s[j]
                    r = j
            viol = s[y[i]] - worst < 1.0
            W *= 1.0 - 1.0 / t
            if viol:
                for j in range(d):
                    W[y[i], j] += eta * X[i, j]
                    W[r, j] -= eta * X[i, j]
            if e >= start:
                count += 1
                avg += (W - avg) / count
        history[e] = _objective_joint(avg if e >= start else W, X, y, lam)
    return avg


def label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def _epoch_orders(n: int, epochs: int, seed_key) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(list(seed_key)))
    orders = np.empty((epochs, n), dtype=np.int64)
    for e in range(epochs):
        orders[e] = rng.permutation(n)
    return orders


def _augment(Z: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.hstack([Z, np.ones((len(Z), 1))]))


def train_binary(Z: np.ndarray, y: np.ndarray, lam: float, epochs: int, seed_key) -> tuple:
    """Train one binary problem on standardized rows ``Z`` with labels +-1.

    Returns (weights incl. bias as last entry, per-epoch objective).
    """
    history = np.empty(epochs)
    orders = _epoch_orders(len(Z), epochs, seed_key)
    w = _sgd(_augment(Z), y.astype(float), float(lam), orders, history)
    return w, history


def train_joint(Z: np.ndarray, y: np.ndarray, n_classes: int, lam: float, epochs: int, seed_key, keys=None) -> tuple:
    """Train the multiclass hinge problem; ``y`` holds class indices.

    Returns ((n_classes, dim + 1) weights with biases last, per-epoch objective).
    """
    history = np.empty(epochs)
    orders = _epoch_orders(len(Z), epochs, seed_key)
    keys = np.arange(n_classes, dtype=np.int64) if keys is None else np.asarray(keys, dtype=np.int64)
    W = _sgd_joint(_augment(Z), y.astype(np.int64), n_classes, float(lam), orders, history, keys)
    return W, history


@dataclass
class ClassifierModel:
    classes: List[str]
    weights: np.ndarray  # (n_classes, dim)
    biases: np.ndarray  # (n_classes,)
    scaler: Scaler
    lam: float = DEFAULT_LAMBDA
    epochs: int = DEFAULT_EPOCHS
    seed: int = 0
    scheme: str = "joint"
    # per-epoch training objective: (epochs,) joint, (n_classes, epochs) ovr
    history: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def scores(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise DimensionMismatchError(f"row has {X.shape[1]} features, model expects {self.dim}")
        return self.scaler.transform(X) @ self.weights.T + self.biases

    def predict_many(self, X) -> List[str]:
        # np.argmax returns the first maximum: ties go to the earlier class
        return [self.classes[i] for i in np.argmax(self.scores(X), axis=1)]


def train(data: Dataset, lam: float = DEFAULT_LAMBDA, epochs: int = DEFAULT_EPOCHS, seed: int = 0,
          fold: int = 0, scheme: str = "joint") -> ClassifierModel:
    """Fit scaler and weights on ``data``.

    Sample order is drawn from ``(seed, fold)`` for the joint scheme and from
    ``(seed, fold, crc32(label))`` per class for one-vs-rest, so reordering
    the class list never changes what a class learns.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    counts = data.counts()
    present = [c for c in data.classes if counts[c] > 0]
    if len(present) < 2:
        raise DegenerateDatasetError(f"training needs at least two populated classes, got {present}")
    if lam <= 0 or epochs < 1:
        raise ValueError("lam must be positive and epochs >= 1")
    scaler = Scaler.fit(data.X)
    Z = scaler.transform(data.X)
    if scheme == "joint":
        Wa, history = train_joint(Z, data.y, len(data.classes), lam, epochs, (seed, fold),
                                  [label_key(c) for c in data.classes])
        W, b = Wa[:, :-1].copy(), Wa[:, -1].copy()
    else:
        labels = [r.label for r in data.rows]
        W = np.zeros((len(data.classes), data.dim))
        b = np.zeros(len(data.classes))
        history = np.zeros((len(data.classes), epochs))
        for k, cls in enumerate(data.classes):
            y = np.array([1.0 if lab == cls else -1.0 for lab in labels])
            w, hist = train_binary(Z, y, lam, epochs, (seed, fold, label_key(cls)))
            W[k], b[k], history[k] = w[:-1], w[-1], hist
    return ClassifierModel(list(data.classes), W, b, scaler, lam, epochs, seed, scheme, history)


def predict(model: ClassifierModel, row) -> str:
    values = row.values if isinstance(row, FeatureVector) else row
    return model.predict_many([values])[0]


def stratified_folds(labels: Sequence[str], k: int, seed: int) -> List[np.ndarray]:
    """Shuffle each class and deal it round-robin over ``k`` folds.

    Each class starts dealing where the previous one stopped, so overall
    fold sizes also differ by at most one.
    """
    if k < 2:
        raise StratificationError("need at least two folds")
    labels = list(labels)
    classes = sorted(set(labels))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5F01D]))
    folds: List[List[int]] = [[] for _ in range(k)]
    offset = 0
    for cls in classes:
        idx = np.array([i for i, lab in enumerate(labels) if lab == cls])
        if len(idx) < k:
            raise StratificationError(f"class {cls!r} has {len(idx)} rows, fewer than {k} folds")
        idx = idx[rng.permutation(len(idx))]
        for j, i in enumerate(idx):
            folds[(offset + j) % k].append(int(i))
        offset = (offset + len(idx)) % k
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


@dataclass
class CvReport:
    classes: List[str]
    fold_accuracies: List[float]
    confusion: np.ndarray  # rows = true class, cols = predicted
    per_cell: Dict[str, float] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_accuracies))

    @property
    def sd(self) -> float:
        return float(np.std(self.fold_accuracies, ddof=1)) if len(self.fold_accuracies) > 1 else 0.0

    @property
    def pooled_accuracy(self) -> float:
        return 100.0 * float(np.trace(self.confusion)) / float(self.confusion.sum())

    def summary(self) -> str:
        return f"{self.mean:.2f} ({self.sd:.2f})"


def cross_validate(data: Dataset, k: int = 10, lam: float = DEFAULT_LAMBDA, epochs: int = DEFAULT_EPOCHS,
                   seed: int = 0, scheme: str = "joint") -> CvReport:
    folds = stratified_folds([r.label for r in data.rows], k, seed)
    index = {c: i for i, c in enumerate(data.classes)}
    confusion = np.zeros((len(data.classes), len(data.classes)), dtype=np.int64)
    accs = []
    cell_hits: Dict[str, List[int]] = {}
    all_idx = np.arange(len(data))
    for f, test in enumerate(folds):
        train_idx = np.setdiff1d(all_idx, test)
        model = train(data.subset(train_idx), lam, epochs, seed, fold=f + 1, scheme=scheme)
        test_rows = [data.rows[i] for i in test]
        preds = model.predict_many([r.values for r in test_rows])
        hits = 0
        for r, p in zip(test_rows, preds):
            confusion[index[r.label], index[p]] += 1
            ok = int(p == r.label)
            hits += ok
            cell = r.meta.get("cell")
            if cell is not None:
                cell_hits.setdefault(cell_key(cell), []).append(ok)
        accs.append(100.0 * hits / len(test_rows))
    per_cell = {c: 100.0 * sum(v) / len(v) for c, v in sorted(cell_hits.items())}
    config = {"folds": k, "lam": lam, "epochs": epochs, "seed": seed, "scheme": scheme}
    return CvReport(list(data.classes), accs, confusion, per_cell, config)


def cell_key(cell) -> str:
    if isinstance(cell, str):
        return cell
    return ",".join(str(int(c)) for c in np.ravel(cell))
