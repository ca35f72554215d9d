"""Per-trait linear/logistic regression on SVD scores with k-fold cross-validation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dimred import project_users, rotate, truncated_svd
from .errors import DataError, OptimizationError, ParameterError, SingularSystemError
from .ingest import TRAITS, TraitTable, UserLikeMatrix
from .metrics import AUC, AccuracyScore, auc, metric_for, pearson

LINEAR_RIDGE = 1e-8
LOGISTIC_PENALTY = 1e-4
LOGISTIC_MAX_ITER = 100
LOGISTIC_TOL = 1e-8


@dataclass(frozen=True)
class LinearModel:
    theta: np.ndarray  # intercept first


@dataclass(frozen=True)
class LogisticModel:
    theta: np.ndarray  # intercept first
    converged: bool
    iterations: int


@dataclass(frozen=True)
class CvConfig:
    k: int = 10
    seed: int = 0
    pooling: str = "pooled"  # or "mean": average of per-fold metrics

    def __post_init__(self):
        if self.k < 2:
            raise ParameterError(f"fold count must be >= 2, got {self.k}")
        if self.pooling not in ("pooled", "mean"):
            raise ParameterError(f"pooling must be 'pooled' or 'mean', got {self.pooling!r}")


def sigmoid(z):
    # tanh form stays finite for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def _design(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return np.column_stack([np.ones(len(X)), X])


def fit_linear(X, y, ridge: float = LINEAR_RIDGE) -> LinearModel:
    """Least squares with intercept; ``ridge`` is added to the non-intercept Gram diagonal."""
    D = _design(X)
    y = np.asarray(y, dtype=np.float64)
    n, p = D.shape
    if n <= p:
        raise ParameterError(f"need more rows than coefficients ({n} <= {p})")
    gram = D.T @ D
    gram[np.arange(1, p), np.arange(1, p)] += ridge
    eig = np.linalg.eigvalsh(gram)
    if eig[0] <= eig[-1] * 1e-14:
        raise SingularSystemError("normal equations are rank deficient")
    theta = np.linalg.solve(gram, D.T @ y)
    if not np.all(np.isfinite(theta)):
        raise SingularSystemError("non-finite least-squares solution")
    return LinearModel(theta)


def _penalized_nll(D, y, theta, penalty):
    z = D @ theta
    # log(1 + e^z) - y z, computed stably
    nll = np.sum(np.logaddexp(0.0, z) - y * z)
    return nll + 0.5 * penalty * theta[1:] @ theta[1:]


def fit_logistic(
    X, y, penalty: float = LOGISTIC_PENALTY, max_iter: int = LOGISTIC_MAX_ITER, tol: float = LOGISTIC_TOL
) -> LogisticModel:
    """L2-penalized logistic regression by IRLS (Newton) with step halving.

    The intercept is not penalized. Converged once the largest coefficient
    change drops below ``tol``.
    """
    D = _design(X)
    y = np.asarray(y, dtype=np.float64)
    n, p = D.shape
    if n <= p:
        raise ParameterError(f"need more rows than coefficients ({n} <= {p})")
    if not (np.any(y == 1) and np.any(y == 0)):
        raise DataError("logistic regression needs both classes")
    pen = np.full(p, penalty)
    pen[0] = 0.0
    theta = np.zeros(p)
    obj = _penalized_nll(D, y, theta, penalty)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = sigmoid(D @ theta)
        w = mu * (1.0 - mu)
        grad = D.T @ (mu - y) + pen * theta
        hess = (D * w[:, None]).T @ D + np.diag(pen)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            raise OptimizationError(f"non-finite IRLS update at iteration {it}")
        t = 1.0
        while True:
            cand = theta - t * step
            cand_obj = _penalized_nll(D, y, cand, penalty)
            if cand_obj <= obj or t < 1e-10:
                break
            t *= 0.5
        if not np.isfinite(cand_obj):
            raise OptimizationError(f"non-finite objective at iteration {it}")
        delta = np.max(np.abs(cand - theta))
        theta, obj = cand, cand_obj
        if delta < tol:
            converged = True
            break
    return LogisticModel(theta, converged, it)


def predict(model: LinearModel | LogisticModel, X) -> np.ndarray:
    D = _design(X)
    if D.shape[1] != len(model.theta):
        raise ParameterError(f"model expects {len(model.theta) - 1} features, got {D.shape[1] - 1}")
    z = D @ model.theta
    if isinstance(model, LogisticModel):
        return sigmoid(z)
    return z


def kfold_split(n: int, cfg: CvConfig = CvConfig(), labels=None) -> list[np.ndarray]:
    """Seeded split of ``range(n)`` into ``cfg.k`` disjoint folds.

    Fold sizes differ by at most one. With ``labels`` the assignment is
    stratified: indices are permuted within each class, concatenated and
    dealt round-robin, so every class is spread evenly over the folds.
    """
    k = cfg.k
    if k > n:
        raise ParameterError(f"cannot split {n} items into {k} folds")
    rng = np.random.default_rng(cfg.seed)
    if labels is None:
        perm = rng.permutation(n)
        return [np.sort(f) for f in np.array_split(perm, k)]
    labels = np.asarray(labels)
    if len(labels) != n:
        raise ParameterError("labels must have length n")
    order = np.concatenate([rng.permutation(np.flatnonzero(labels == c)) for c in np.unique(labels)])
    assign = np.empty(n, dtype=np.int64)
    assign[order] = np.arange(n) % k
    return [np.flatnonzero(assign == f) for f in range(k)]


def _fit_predict(kind: str, X_train, y_train, X_test) -> np.ndarray:
    if kind == AUC:
        return predict(fit_logistic(X_train, y_train), X_test)
    return predict(fit_linear(X_train, y_train), X_test)


FoldFeatures = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


def cross_validate_arrays(
    X: np.ndarray | FoldFeatures, y, kind: str, cfg: CvConfig = CvConfig(), trait: str = ""
) -> tuple[AccuracyScore, np.ndarray]:
    """Out-of-fold evaluation; returns the score and the pooled prediction vector.

    ``X`` is either a fixed feature matrix or a callable mapping
    ``(train_idx, test_idx)`` to ``(X_train, X_test)`` for per-fold features.
    """
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if np.isnan(y).any():
        raise DataError(f"trait {trait or '?'} has missing values; impute first")
    folds = kfold_split(n, cfg, labels=y if kind == AUC else None)
    oof = np.empty(n)
    per_fold = []
    metric = auc if kind == AUC else pearson
    for test_idx in folds:
        train_mask = np.ones(n, dtype=bool)
        train_mask[test_idx] = False
        train_idx = np.flatnonzero(train_mask)
        if callable(X):
            X_train, X_test = X(train_idx, test_idx)
        else:
            X_train, X_test = X[train_idx], X[test_idx]
        oof[test_idx] = _fit_predict(kind, X_train, y[train_idx], X_test)
        if cfg.pooling == "mean":
            per_fold.append(metric(oof[test_idx], y[test_idx]))
    value = float(np.mean(per_fold)) if cfg.pooling == "mean" else metric(oof, y)
    return AccuracyScore(trait, kind, value), oof


def cross_validate(scores: np.ndarray, traits: TraitTable, trait: str, cfg: CvConfig = CvConfig()) -> AccuracyScore:
    """k-fold CV accuracy of one trait's regression model on user scores.

    ``scores`` rows must align with ``traits`` rows.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape[0] != len(traits):
        raise ParameterError("scores and traits are not aligned")
    result, _ = cross_validate_arrays(scores, traits.column(trait), metric_for(trait), cfg, trait)
    return result


def regress_all(scores: np.ndarray, traits: TraitTable, cfg: CvConfig = CvConfig(), trait_names: Sequence[str] = TRAITS) -> list[AccuracyScore]:
    return [cross_validate(scores, traits, t, cfg) for t in trait_names]


def _per_fold_svd_features(matrix: UserLikeMatrix, K: int, apply_varimax: bool, seed: int) -> FoldFeatures:
    A = matrix.to_float()

    def features(train_idx, test_idx):
        f = truncated_svd(A[train_idx], K, seed=seed)
        rot = rotate(f, apply_varimax)
        # held-out users projected through the training loadings: M V R = U S R
        test = np.asarray(A[test_idx] @ f.V) @ rot.R
        return project_users(f, rot.R), test

    return features


def k_sweep(
    matrix: UserLikeMatrix,
    traits: TraitTable,
    K_values: Sequence[int],
    cfg: CvConfig = CvConfig(),
    apply_varimax: bool = True,
    seed: int = 0,
    per_fold_svd: bool = False,
    trait_names: Sequence[str] = TRAITS,
) -> dict[tuple[str, int], AccuracyScore]:
    """Accuracy of every trait's regression model for each number of SVD dimensions.

    By default the SVD is computed once on the whole matrix; ``per_fold_svd``
    refits it on each training fold instead.
    """
    traits = traits.subset(matrix.row_ids)
    table: dict[tuple[str, int], AccuracyScore] = {}
    for K in K_values:
        if per_fold_svd:
            feats: np.ndarray | FoldFeatures = _per_fold_svd_features(matrix, K, apply_varimax, seed)
        else:
            feats = rotate(truncated_svd(matrix, K, seed=seed), apply_varimax).scores
        for t in trait_names:
            table[(t, K)], _ = cross_validate_arrays(feats, traits.column(t), metric_for(t), cfg, t)
    return table

