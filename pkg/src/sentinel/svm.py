"""Linear SVM trained on the regularised primal hinge-loss objective.

The objective for weights ``w`` and bias ``b`` is::

    J(w, b) = lam/2 * ||w||^2 + mean_i max(0, 1 - y_i * (w . x_i + b))

The bias is not regularised. :func:`train` runs seeded, epoch-based stochastic
subgradient descent with step ``1 / (lam * t)`` and keeps the best iterate seen
(pocket rule), then sharpens it with a deterministic finishing stage.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import DimensionError, SentinelError

log = logging.getLogger(__name__)

DEFAULT_LAMBDA = 1e-2


class TrainingError(SentinelError):
    pass


@dataclass(frozen=True)
class LinearModel:
    w: np.ndarray = field(compare=False)
    b: float
    lam: float

    def __post_init__(self):
        w = np.array(self.w, dtype=float).reshape(-1)
        if not np.all(np.isfinite(w)) or not math.isfinite(self.b):
            raise SentinelError("model parameters must be finite")
        if not self.lam > 0:
            raise SentinelError(f"lambda must be positive, got {self.lam}")
        w.flags.writeable = False
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def dim(self) -> int:
        return self.w.shape[0]

    @property
    def margin(self) -> float:
        """Width ``2 / ||w||`` between the two supporting hyperplanes."""
        norm = float(np.linalg.norm(self.w))
        if norm == 0:
            return math.inf
        return 2.0 / norm

    def to_dict(self) -> dict:
        return {"w": self.w.tolist(), "b": self.b, "lambda": self.lam}

    @classmethod
    def from_dict(cls, obj: dict) -> "LinearModel":
        return cls(np.array(obj["w"], dtype=float), float(obj["b"]), float(obj["lambda"]))

    def __eq__(self, other):
        if not isinstance(other, LinearModel):
            return NotImplemented
        return self.b == other.b and self.lam == other.lam and np.array_equal(self.w, other.w)

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray = field(compare=False)
    std: np.ndarray = field(compare=False)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.mean.shape[0]:
            raise DimensionError(f"scaler fitted on {self.mean.shape[0]} features, got {X.shape[-1]}")
        return (X - self.mean) / self.std

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "Scaler":
        return cls(np.array(obj["mean"], dtype=float), np.array(obj["std"], dtype=float))

    def __eq__(self, other):
        if not isinstance(other, Scaler):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.std, other.std)

    __hash__ = None  # type: ignore[assignment]


def fit_scaler(vectors) -> Scaler:
    """Per-feature mean and population std; zero-variance features keep std 1."""
    X = np.asarray(vectors, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[0] == 0:
        raise SentinelError("cannot fit a scaler on empty input")
    if X.shape[0] < 2:
        raise SentinelError("fitting a scaler needs at least 2 vectors")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    degenerate = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    std = np.where(degenerate, 1.0, std)
    return Scaler(mean, std)


def apply_scaler(scaler: Scaler, vector) -> np.ndarray:
    return scaler.transform(vector)


@dataclass(frozen=True)
class SolverConfig:
    """Settings for :func:`train`.

    ``tolerance`` stops training once the best objective has improved by less
    than ``tolerance * max(1, best)`` over ``patience`` consecutive epochs.
    """

    epochs: int = 30
    seed: int = 0
    tolerance: float = 1e-7
    patience: int = 5
    refine: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise SentinelError("epochs must be >= 1")
        if not self.tolerance > 0:
            raise SentinelError("tolerance must be positive")
        if self.patience < 1:
            raise SentinelError("patience must be >= 1")


@dataclass
class TrainResult:
    model: LinearModel
    objective: float
    history: list[float]  # best objective after each epoch, then after refinement
    epochs_run: int


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2:
        raise DimensionError(f"expected a 2-d feature matrix, got shape {X.shape}")
    if X.shape[0] != y.shape[0]:
        raise DimensionError(f"{X.shape[0]} vectors but {y.shape[0]} labels")
    if X.shape[0] == 0:
        raise SentinelError("empty dataset")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise SentinelError("labels must be +1 or -1")
    return X, y


def hinge_loss(model: LinearModel, x, y: int) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != model.dim:
        raise DimensionError(f"model has dimension {model.dim}, vector has {x.shape[0]}")
    return max(1.0 - y * (float(model.w @ x) + model.b), 0.0)


def hinge_subgradient(model: LinearModel, x, y: int) -> tuple[np.ndarray, float]:
    """Subgradient of the hinge loss w.r.t. ``(w, b)``; zero on the kink."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if hinge_loss(model, x, y) > 0:
        return -y * x, -float(y)
    return np.zeros_like(x), 0.0


def _objective(w, b, X, y, lam) -> float:
    hinge = np.maximum(0.0, 1.0 - y * (X @ w + b))
    return 0.5 * lam * float(w @ w) + float(hinge.mean())


def objective(model: LinearModel, X, y) -> float:
    X, y = _check_xy(X, y)
    if X.shape[1] != model.dim:
        raise DimensionError(f"model has dimension {model.dim}, data has {X.shape[1]}")
    return _objective(model.w, model.b, X, y, model.lam)


def optimal_bias(scores, y) -> float:
    """Exact minimiser over ``b`` of ``mean max(0, 1 - y * (score + b))``.

    The loss is convex and piecewise linear in ``b`` with kinks at
    ``y_i - score_i``; ties between minimising kinks resolve to their midpoint.
    """
    kinks = y - scores
    pos = np.sort(kinks[y > 0])
    neg = np.sort(kinks[y < 0])
    p = np.sort(kinks)
    cum_pos = np.r_[0.0, np.cumsum(pos)]
    cum_neg = np.r_[0.0, np.cumsum(neg)]
    kp = np.searchsorted(pos, p, side="right")
    kn = np.searchsorted(neg, p, side="right")
    # positives contribute max(0, kink - b), negatives max(0, b - kink)
    f = (cum_pos[-1] - cum_pos[kp]) - p * (len(pos) - kp) + p * kn - cum_neg[kn]
    fmin = f.min()
    hit = np.flatnonzero(f <= fmin + 1e-12 * max(1.0, abs(fmin)))
    return float(0.5 * (p[hit[0]] + p[hit[-1]]))


def _huber_objective(v, Z, y, lam, h) -> float:
    z = 1.0 - y * (Z @ v)
    loss = np.where(z <= 0, 0.0, np.where(z < h, z * z / (2 * h), z - 0.5 * h))
    w = v[:-1]
    return 0.5 * lam * float(w @ w) + float(loss.mean())


def _newton_huber(v, Z, y, lam, h, max_iter=100):
    """Damped Newton on the hinge smoothed over a band of width ``h``."""
    n, D = Z.shape
    reg = np.full(D, lam)
    reg[-1] = 0.0
    f = _huber_objective(v, Z, y, lam, h)
    for _ in range(max_iter):
        z = 1.0 - y * (Z @ v)
        slope = np.clip(z / h, 0.0, 1.0)
        band = (z > 0) & (z < h)
        grad = reg * v - (slope * y) @ Z / n
        hess = np.diag(reg) + Z[band].T @ Z[band] / (n * h) + 1e-12 * np.eye(D)
        step = -np.linalg.solve(hess, grad)
        decrease = float(grad @ step)
        if -decrease < 1e-20:
            break
        s = 1.0
        while True:
            f_new = _huber_objective(v + s * step, Z, y, lam, h)
            if f_new <= f + 1e-4 * s * decrease or s < 1e-20:
                break
            s *= 0.5
        if f_new >= f:
            break
        v = v + s * step
        f = f_new
    return v


def _kkt_candidates(X, y, lam, w, b):
    """Solve the optimality conditions for guessed support sets.

    Points nearest the margin are taken as the on-margin set ``E`` (sizes
    1..d+1), violators outside ``E`` get full dual weight, and the linear
    system for ``(alpha_E, b)`` is solved in the least-squares sense.
    """
    n, d = X.shape
    m = y * (X @ w + b)
    order = np.argsort(np.abs(m - 1.0), kind="stable")
    for k in range(1, min(n, d + 1) + 1):
        E = order[:k]
        in_e = np.zeros(n, dtype=bool)
        in_e[E] = True
        L = (~in_e) & (m < 1.0)
        base = y[L] @ X[L]
        XE, yE = X[E], y[E]
        A = np.zeros((k + 1, k + 1))
        rhs = np.zeros(k + 1)
        A[:k, :k] = (yE[:, None] * (XE @ XE.T) * yE[None, :]) / (lam * n)
        A[:k, k] = yE
        rhs[:k] = 1.0 - yE * (XE @ base) / (lam * n)
        A[k, :k] = yE
        rhs[k] = -y[L].sum()
        sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
        w_new = (base + (sol[:k] * yE) @ XE) / (lam * n)
        if np.all(np.isfinite(w_new)) and math.isfinite(sol[k]):
            yield w_new, float(sol[k])


def _refine(X, y, lam, w, b):
    """Smoothing homotopy followed by support-set solves; yields candidates."""
    Z = np.hstack([X, np.ones((X.shape[0], 1))])
    v = np.append(w, b)
    best = (_objective(w, b, X, y, lam), w, b)
    for h in 10.0 ** -np.arange(0, 13):
        v = _newton_huber(v, Z, y, lam, h)
        cand = _objective(v[:-1], v[-1], X, y, lam)
        if cand < best[0]:
            best = (cand, v[:-1].copy(), float(v[-1]))
    for _ in range(20):
        improved = False
        for w_new, b_new in _kkt_candidates(X, y, lam, best[1], best[2]):
            cand = _objective(w_new, b_new, X, y, lam)
            if cand < best[0]:
                best = (cand, w_new, b_new)
                improved = True
        if not improved:
            break
    return best


def solve(X, y, lam: float = DEFAULT_LAMBDA, config: SolverConfig | None = None) -> TrainResult:
    """Minimise the primal objective; see the module docstring."""
    config = config or SolverConfig()
    X, y = _check_xy(X, y)
    if not lam > 0:
        raise TrainingError(f"lambda must be positive, got {lam}")
    if np.all(y > 0) or np.all(y < 0):
        raise TrainingError("single-class dataset: both +1 and -1 labels are required")
    if not np.all(np.isfinite(X)):
        raise TrainingError("feature matrix contains non-finite values")
    n, d = X.shape
    rng = np.random.default_rng(config.seed)

    # w = scale * v keeps the per-step shrink O(1)
    v = np.zeros(d)
    scale = 1.0
    b = 0.0
    t = 0
    best_obj = _objective(v, b, X, y, lam)
    best_w, best_b = v.copy(), b
    history: list[float] = []
    stall = 0
    epochs_run = 0
    for epoch in range(config.epochs):
        epochs_run += 1
        prev_best = best_obj
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            xi = X[i]
            yi = y[i]
            margin = yi * (scale * float(xi @ v) + b)
            shrink = 1.0 - eta * lam
            if shrink == 0.0:
                v[:] = 0.0
                scale = 1.0
            else:
                scale *= shrink
            if margin < 1.0:
                v += (eta * yi / scale) * xi
                b += eta * yi
            if scale < 1e-150:
                v *= scale
                scale = 1.0
        w = scale * v
        for cand_b in (b, optimal_bias(X @ w, y)):
            obj = _objective(w, cand_b, X, y, lam)
            if obj < best_obj:
                best_obj, best_w, best_b = obj, w.copy(), cand_b
        history.append(best_obj)
        if prev_best - best_obj < config.tolerance * max(1.0, best_obj):
            stall += 1
            if stall >= config.patience:
                break
        else:
            stall = 0

    if config.refine:
        obj, w_ref, b_ref = _refine(X, y, lam, best_w, best_b)
        if obj < best_obj:
            best_obj, best_w, best_b = obj, w_ref, b_ref
        history.append(best_obj)

    log.debug("trained n=%d d=%d lam=%g epochs=%d objective=%.6g", n, d, lam, epochs_run, best_obj)
    return TrainResult(LinearModel(best_w, best_b, lam), best_obj, history, epochs_run)


def train(X, y, lam: float = DEFAULT_LAMBDA, config: SolverConfig | None = None) -> LinearModel:
    return solve(X, y, lam, config).model


def decision_function(model: LinearModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != model.dim:
        raise DimensionError(f"model has dimension {model.dim}, data has {X.shape[-1]}")
    return X @ model.w + model.b


def predict(model: LinearModel, x) -> tuple[int, float]:
    """``(label, score)``; a score of exactly 0 is rejected (-1)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    score = float(decision_function(model, x))
    return (1 if score > 0 else -1), score


def predict_labels(model: LinearModel, X) -> np.ndarray:
    return np.where(decision_function(model, X) > 0, 1, -1)
