"""L2 logistic regression head, stratified splitting and P/R/F metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import log_sigmoid, sigmoid


@dataclass(frozen=True)
class LrConfig:
    C: float = 1.0
    tol: float = 1e-4
    max_iter: int = 50
    standardize: bool = True


@dataclass
class LrModel:
    weights: np.ndarray
    bias: float
    config: LrConfig = field(default_factory=LrConfig)
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None
    objective_trace: list[float] = field(default_factory=list)
    n_iter: int = 0

    def _transform(self, X):
        X = np.asarray(X, dtype=float)
        if self.mean is not None:
            X = (X - self.mean) / self.scale
        return X

    def decision_function(self, X):
        return self._transform(X) @ self.weights + self.bias

    def predict_proba(self, X):
        return sigmoid(self.decision_function(X))

    def predict(self, X, threshold: float = 0.5):
        return (self.predict_proba(X) >= threshold).astype(int)


def _objective(w, b, X, ys, C):
    z = X @ w + b
    return 0.5 * w @ w - C * np.sum(log_sigmoid(ys * z))


def lr_fit(X, y, cfg: LrConfig = LrConfig()) -> LrModel:
    """Minimise ``0.5 |w|^2 + C * sum log(1 + exp(-y_i (w.x_i + b)))`` by
    damped Newton steps (the intercept is not penalised).

    Stops once the largest absolute gradient entry is below ``cfg.tol`` or
    after ``cfg.max_iter`` Newton iterations.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (n_samples, n_features) matching y")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    if len(np.unique(y)) < 2:
        raise ValueError("logistic regression needs both classes")
    mean = scale = None
    if cfg.standardize:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        X = (X - mean) / scale
    n, p = X.shape
    ys = np.where(y == 1, 1.0, -1.0)
    w = np.zeros(p)
    b = 0.0
    C = cfg.C
    Xa = np.hstack([X, np.ones((n, 1))])
    reg = np.ones(p + 1)
    reg[-1] = 0.0
    obj = _objective(w, b, X, ys, C)
    trace = [obj]
    it = 0
    for it in range(1, cfg.max_iter + 1):
        z = X @ w + b
        s = sigmoid(-ys * z)                      # 1 - sigmoid(y z)
        theta = np.append(w, b)
        grad = reg * theta - C * Xa.T @ (ys * s)
        if np.max(np.abs(grad)) <= cfg.tol:
            it -= 1
            break
        curv = C * s * (1.0 - s)
        hess = Xa.T @ (Xa * curv[:, None]) + np.diag(reg)
        hess[-1, -1] += 1e-12
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        slope = grad @ step
        while True:
            cand = theta - t * step
            new_obj = _objective(cand[:-1], cand[-1], X, ys, C)
            if new_obj <= obj - 1e-4 * t * slope or t < 1e-10:
                break
            t *= 0.5
        if new_obj > obj:
            break
        w, b = cand[:-1], float(cand[-1])
        obj = new_obj
        trace.append(obj)
    return LrModel(w, float(b), cfg, mean, scale, trace, it)


@dataclass(frozen=True)
class Metrics:
    """Counts with spammers as the positive class; ratios derive from them."""

    tp: int
    fp: int
    fn: int
    tn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f_measure(self) -> float:
        return f_measure(self.precision, self.recall)


def f_measure(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


def confusion(y_true, y_pred) -> Metrics:
    y_true = np.asarray(y_true).astype(int)
    y_pred = np.asarray(y_pred).astype(int)
    return Metrics(
        tp=int(np.sum((y_pred == 1) & (y_true == 1))),
        fp=int(np.sum((y_pred == 1) & (y_true == 0))),
        fn=int(np.sum((y_pred == 0) & (y_true == 1))),
        tn=int(np.sum((y_pred == 0) & (y_true == 0))),
    )


def evaluate(model: LrModel, X, y, threshold: float = 0.5) -> Metrics:
    return confusion(y, model.predict(X, threshold))


def split(users, labels, test_fraction: float, seed: int):
    """Stratified train/test split of ``users`` (parallel to ``labels``).

    Each class contributes ``round(test_fraction * size)`` users to the test
    side, clipped so both sides keep at least one member.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    users = np.asarray(users)
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in np.unique(labels):
        members = np.sort(users[labels == cls])
        if len(members) < 2:
            raise ValueError(f"class {cls} has fewer than two members")
        members = members[rng.permutation(len(members))]
        n_test = min(max(int(math.floor(test_fraction * len(members) + 0.5)), 1),
                     len(members) - 1)
        test.extend(members[:n_test].tolist())
        train.extend(members[n_test:].tolist())
    return sorted(train), sorted(test)


def stratified_folds(labels, n_folds: int = 10, seed: int = 0):
    """Fold index per row, classes spread round-robin after a seeded shuffle."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    fold = np.empty(len(labels), dtype=int)
    for cls in np.unique(labels):
        rows = np.flatnonzero(labels == cls)
        rows = rows[rng.permutation(len(rows))]
        fold[rows] = np.arange(len(rows)) % n_folds
    return fold


def cross_validate(X, y, n_folds: int = 10, seed: int = 0,
                   cfg: LrConfig = LrConfig(), threshold: float = 0.5) -> list[Metrics]:
    """Fixed-hyperparameter stratified k-fold evaluation."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    fold = stratified_folds(y, n_folds, seed)
    out = []
    for f in range(n_folds):
        test = fold == f
        model = lr_fit(X[~test], y[~test], cfg)
        out.append(evaluate(model, X[test], y[test], threshold))
    return out
