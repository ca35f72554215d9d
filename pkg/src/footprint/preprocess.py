"""Rarity trimming of the users-likes matrix and its descriptive statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMatrixError, ParameterError, TrimmedToEmptyError
from .ingest import UserLikeMatrix

DEFAULT_MIN_USERS_PER_LIKE = 150
DEFAULT_MIN_LIKES_PER_USER = 50


@dataclass(frozen=True)
class TrimConfig:
    min_users_per_like: int = DEFAULT_MIN_USERS_PER_LIKE
    min_likes_per_user: int = DEFAULT_MIN_LIKES_PER_USER

    def __post_init__(self):
        if self.min_users_per_like < 1 or self.min_likes_per_user < 1:
            raise ParameterError("trim thresholds must be >= 1")


@dataclass(frozen=True)
class DegreeSummary:
    mean: float
    median: float
    min: int
    max: int

    @classmethod
    def of(cls, degrees: np.ndarray) -> "DegreeSummary":
        # np.median averages the two central values for even lengths
        return cls(float(np.mean(degrees)), float(np.median(degrees)), int(degrees.min()), int(degrees.max()))


@dataclass(frozen=True)
class MatrixStats:
    n_users: int
    n_likes: int
    n_pairs: int
    density: float  # percent
    likes_per_user: DegreeSummary
    users_per_like: DegreeSummary

    def rows(self) -> list[tuple[str, float]]:
        """Flat (label, value) rows in the order of the descriptive-statistics table."""
        out: list[tuple[str, float]] = [
            ("n_users", self.n_users),
            ("n_likes", self.n_likes),
            ("n_pairs", self.n_pairs),
            ("density_pct", self.density),
        ]
        for prefix, s in (("likes_per_user", self.likes_per_user), ("users_per_like", self.users_per_like)):
            out += [
                (f"{prefix}_mean", s.mean),
                (f"{prefix}_median", s.median),
                (f"{prefix}_min", s.min),
                (f"{prefix}_max", s.max),
            ]
        return out


def trim(matrix: UserLikeMatrix, cfg: TrimConfig = TrimConfig(), order: str = "columns") -> UserLikeMatrix:
    """Remove rare likes and users until every degree meets its threshold.

    Alternates column and row deletion passes until neither removes
    anything. Deletion of under-threshold rows/columns is confluent, so the
    fixpoint does not depend on ``order`` ("columns" or "rows" first).
    """
    if matrix.n_pairs == 0:
        raise EmptyMatrixError("cannot trim an empty matrix")
    if order not in ("columns", "rows"):
        raise ParameterError(f"order must be 'columns' or 'rows', got {order!r}")
    m = matrix.data
    mt = m.T.tocsr()
    keep_r = np.ones(m.shape[0], dtype=bool)
    keep_c = np.ones(m.shape[1], dtype=bool)

    def column_pass() -> bool:
        deg = mt @ keep_r.astype(np.int64)
        drop = keep_c & (deg < cfg.min_users_per_like)
        keep_c[drop] = False
        return bool(drop.any())

    def row_pass() -> bool:
        deg = m @ keep_c.astype(np.int64)
        drop = keep_r & (deg < cfg.min_likes_per_user)
        keep_r[drop] = False
        return bool(drop.any())

    passes = (column_pass, row_pass) if order == "columns" else (row_pass, column_pass)
    stable = 0
    while stable < 2:
        for p in passes:
            stable = 0 if p() else stable + 1
            if stable == 2:
                break
        if not keep_r.any() or not keep_c.any():
            raise TrimmedToEmptyError(cfg.min_users_per_like, cfg.min_likes_per_user)
    out = matrix.submatrix(keep_r, keep_c)
    if out.n_pairs == 0:
        raise TrimmedToEmptyError(cfg.min_users_per_like, cfg.min_likes_per_user)
    return out


def stats(matrix: UserLikeMatrix) -> MatrixStats:
    if matrix.n_users == 0 or matrix.n_likes == 0:
        raise EmptyMatrixError("statistics of an empty matrix are undefined")
    return MatrixStats(
        n_users=matrix.n_users,
        n_likes=matrix.n_likes,
        n_pairs=matrix.n_pairs,
        density=100.0 * matrix.density,
        likes_per_user=DegreeSummary.of(matrix.row_degrees()),
        users_per_like=DegreeSummary.of(matrix.col_degrees()),
    )
