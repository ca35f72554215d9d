"""Multiple imputation of a missing binary trait and Rubin's-rules pooling.

Each imputation bootstraps the complete cases, fits a two-class linear
discriminant on the remaining seven traits and draws every missing value
from the resulting Bernoulli posterior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sstats

from .errors import DataError, ParameterError, SingularSystemError, ValidationError
from .ingest import BINARY_TRAITS, TRAITS, TraitTable

MIN_COMPLETE_CASES = 20
MAX_RESAMPLE_RETRIES = 100
RIDGE_SCALE = 1e-8


@dataclass(frozen=True)
class ImputeConfig:
    m: int = 5
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self):
        if self.m < 2:
            raise ParameterError(f"number of imputations must be >= 2, got {self.m}")


@dataclass(frozen=True)
class PooledRow:
    term: str
    est: float
    se: float
    t: float
    df: float
    p_value: float
    lo95: float
    hi95: float
    nmis: int | None
    fmi: float
    lam: float
    # pooling internals
    qbar: float
    within: float
    between: float
    total: float


def lda_posterior(x_train: np.ndarray, y_train: np.ndarray, x_new: np.ndarray) -> np.ndarray:
    """P(y=1 | x) under class-conditional Gaussians with a shared covariance."""
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train)
    x0 = x_train[y_train == 0]
    x1 = x_train[y_train == 1]
    n0, n1 = len(x0), len(x1)
    if n0 == 0 or n1 == 0:
        raise DataError("LDA needs both classes in the training sample")
    mu0 = x0.mean(axis=0)
    mu1 = x1.mean(axis=0)
    resid = np.vstack([x0 - mu0, x1 - mu1])
    dof = max(n0 + n1 - 2, 1)
    cov = resid.T @ resid / dof
    p = cov.shape[0]
    ridge = RIDGE_SCALE * np.trace(cov) / p
    if ridge == 0.0:
        ridge = RIDGE_SCALE
    cov = cov + ridge * np.eye(p)
    try:
        w = np.linalg.solve(cov, mu1 - mu0)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"shared covariance not invertible: {exc}") from exc
    b = -0.5 * (mu1 + mu0) @ w + math.log(n1 / n0)
    logit = np.asarray(x_new, dtype=np.float64) @ w + b
    return 0.5 * (1.0 + np.tanh(0.5 * logit))


def _predictors(traits: TraitTable, target: str) -> list[int]:
    return [i for i, t in enumerate(TRAITS) if t != target]


def impute_binary(traits: TraitTable, target: str = "political", cfg: ImputeConfig = ImputeConfig()) -> list[TraitTable]:
    """Return ``cfg.m`` completed copies of ``traits``.

    Observed cells are identical across all copies; only the missing
    ``target`` cells differ. Each imputation uses its own child seed split
    from ``cfg.seed``, so results do not depend on execution order.
    """
    if target not in BINARY_TRAITS:
        raise ParameterError(f"{target} is not a binary trait")
    ti = TRAITS.index(target)
    y = traits.values[:, ti]
    missing = np.isnan(y)
    if not missing.any():
        return [traits for _ in range(cfg.m)]
    pred_cols = _predictors(traits, target)
    x = traits.values[:, pred_cols]
    if np.isnan(x).any():
        raise ValidationError("predictor traits must be complete to impute " + target)
    complete = np.flatnonzero(~missing)
    if len(complete) < MIN_COMPLETE_CASES:
        raise ValidationError(
            f"need at least {MIN_COMPLETE_CASES} complete cases to impute {target}, got {len(complete)}"
        )
    x_obs, y_obs = x[complete], y[complete]
    if len(np.unique(y_obs)) < 2:
        raise ValidationError(f"observed {target} has a single class")
    x_mis = x[missing]

    out = []
    for child in np.random.SeedSequence(cfg.seed).spawn(cfg.m):
        rng = np.random.default_rng(child)
        if cfg.bootstrap:
            for _ in range(MAX_RESAMPLE_RETRIES):
                idx = rng.integers(0, len(complete), size=len(complete))
                if len(np.unique(y_obs[idx])) == 2:
                    break
            else:
                raise DataError(f"bootstrap resamples kept producing a single {target} class")
            xb, yb = x_obs[idx], y_obs[idx]
        else:
            xb, yb = x_obs, y_obs
        post = lda_posterior(xb, yb, x_mis)
        draws = (rng.random(len(post)) < post).astype(np.float64)
        col = y.copy()
        col[missing] = draws
        out.append(traits.with_column(target, col))
    return out


def pool_rubin(estimates, within_vars, m: int | None = None, term: str = "", nmis: int | None = None) -> PooledRow:
    """Combine per-imputation estimates and variances with Rubin's rules."""
    q = np.asarray(estimates, dtype=np.float64)
    u = np.asarray(within_vars, dtype=np.float64)
    if m is None:
        m = len(q)
    if len(q) != m or len(u) != m:
        raise ParameterError(f"expected {m} estimates and variances, got {len(q)} and {len(u)}")
    if m < 2:
        raise ParameterError("pooling needs m >= 2")
    if np.any(u <= 0):
        raise ParameterError("within-imputation variances must be positive")
    qbar = float(np.mean(q))
    w = float(np.mean(u))
    b = float(np.var(q, ddof=1))
    total = w + (1.0 + 1.0 / m) * b
    se = math.sqrt(total)
    t = qbar / se
    if b == 0.0:
        lam = 0.0
        df = math.inf
        fmi = 0.0
    else:
        lam = (b + b / m) / total
        r = (1.0 + 1.0 / m) * b / w
        # tiny between-variance pushes df past the float range; its limit is inf
        with np.errstate(over="ignore"):
            df = float((m - 1) * np.square(1.0 + 1.0 / np.float64(r)))
        fmi = (r + 2.0 / (df + 3.0)) / (r + 1.0)
    dist = sstats.norm if math.isinf(df) else sstats.t(df)
    p_value = float(2.0 * dist.sf(abs(t)))
    half = float(dist.ppf(0.975)) * se
    return PooledRow(
        term=term, est=qbar, se=se, t=t, df=df, p_value=p_value,
        lo95=qbar - half, hi95=qbar + half, nmis=nmis, fmi=fmi, lam=lam,
        qbar=qbar, within=w, between=b, total=total,
    )


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    design = np.column_stack([np.ones(len(x)), x])
    n, p = design.shape
    if n <= p:
        raise DataError("too few rows for the pooled analysis model")
    gram = design.T @ design
    try:
        coef = np.linalg.solve(gram, design.T @ y)
        gram_inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"analysis model design is singular: {exc}") from exc
    resid = y - design @ coef
    sigma2 = resid @ resid / (n - p)
    return coef, sigma2 * np.diag(gram_inv)


def pooled_analysis(completed: list[TraitTable], target: str = "political", original: TraitTable | None = None) -> list[PooledRow]:
    """Fit ``target ~ 1 + other traits`` per completed table and pool the coefficients."""
    pred_cols = _predictors(completed[0], target)
    ti = TRAITS.index(target)
    fits = [_ols(tbl.values[:, pred_cols], tbl.values[:, ti]) for tbl in completed]
    coefs = np.array([f[0] for f in fits])
    variances = np.array([f[1] for f in fits])
    names = ["(Intercept)"] + [TRAITS[i] for i in pred_cols]
    source = original if original is not None else completed[0]
    rows = []
    for j, name in enumerate(names):
        nmis = None if j == 0 else source.missing_count(name)
        rows.append(pool_rubin(coefs[:, j], variances[:, j], len(completed), term=name, nmis=nmis))
    return rows


def combine(completed: list[TraitTable], target: str = "political", mode: str = "first") -> TraitTable:
    """Reduce the completed tables to one: the first, or a per-cell majority vote.

    Majority ties (even m) resolve to 1.
    """
    if mode == "first":
        return completed[0]
    if mode != "majority":
        raise ParameterError(f"unknown combine mode {mode!r}")
    ti = TRAITS.index(target)
    votes = np.mean([t.values[:, ti] for t in completed], axis=0)
    return completed[0].with_column(target, (votes >= 0.5).astype(np.float64))
