"""Truncated SVD of the users-likes matrix and varimax rotation."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DataError, ParameterError
from .ingest import TRAITS, TraitTable, UserLikeMatrix

OVERSAMPLES = 10
POWER_ITERATIONS = 2


@dataclass(frozen=True)
class SvdFactors:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    row_ids: tuple[str, ...] = ()
    col_ids: tuple[str, ...] = ()

    @property
    def K(self) -> int:
        return len(self.S)


@dataclass(frozen=True)
class RotatedScores:
    R: np.ndarray
    scores: np.ndarray | None = None
    loadings: np.ndarray | None = None
    criterion_trace: list[float] = field(default_factory=list)


def _fix_signs(U: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # largest-|v| entry of each right singular vector made positive
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


def truncated_svd(matrix: UserLikeMatrix | sp.spmatrix | np.ndarray, K: int, seed: int = 0) -> SvdFactors:
    """Rank-``K`` randomized SVD (Gaussian range finder, power iterations).

    The sketch has ``K + 10`` columns, capped at the smaller matrix
    dimension, in which case the captured range is the whole column space
    and the result is exact up to rounding.
    """
    row_ids: tuple[str, ...] = ()
    col_ids: tuple[str, ...] = ()
    if isinstance(matrix, UserLikeMatrix):
        row_ids, col_ids = matrix.row_ids, matrix.col_ids
        A = matrix.to_float()
    elif sp.issparse(matrix):
        A = sp.csr_matrix(matrix, dtype=np.float64)
    else:
        A = np.asarray(matrix, dtype=np.float64)
    n, d = A.shape
    if not 1 <= K <= min(n, d):
        raise ParameterError(f"K must be in [1, {min(n, d)}], got {K}")
    rng = np.random.default_rng(seed)
    width = min(K + OVERSAMPLES, min(n, d))
    omega = rng.standard_normal((d, width))
    Q, _ = np.linalg.qr(A @ omega)
    for _ in range(POWER_ITERATIONS):
        Z, _ = np.linalg.qr(A.T @ Q)
        Q, _ = np.linalg.qr(A @ Z)
    B = np.asarray((A.T @ Q).T)
    Ub, S, Vt = np.linalg.svd(B, full_matrices=False)
    U = Q @ Ub[:, :K]
    V = Vt[:K].T
    U, V = _fix_signs(U, V)
    return SvdFactors(U=U, S=S[:K].copy(), V=V, row_ids=row_ids, col_ids=col_ids)


def varimax_criterion(loadings: np.ndarray) -> float:
    """Sum over columns of the variance of squared loadings."""
    sq = np.asarray(loadings) ** 2
    return float(np.sum(np.mean(sq**2, axis=0) - np.mean(sq, axis=0) ** 2))


def _round_robin(k: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Schedule all column pairs into k-1 (or k) rounds of disjoint pairs (circle method)."""
    players = list(range(k)) + ([-1] if k % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p), max(p)) for p in pairs if -1 not in p]
        rounds.append((np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def varimax(loadings: np.ndarray, max_sweeps: int = 1000, tol: float = 1e-8, normalize: bool = True) -> RotatedScores:
    """Varimax rotation by sweeps of pairwise plane rotations.

    Each column pair is rotated by the angle that maximizes the pair's
    contribution to the criterion, so the criterion never decreases. With
    ``normalize`` the rows are scaled to unit length first (Kaiser) and the
    criterion trace refers to the normalized loadings.
    """
    L = np.array(loadings, dtype=np.float64)
    if L.ndim != 2:
        raise ParameterError("loadings must be a 2-D array")
    if not np.all(np.isfinite(L)):
        raise DataError("loadings contain non-finite values")
    n, k = L.shape
    if k < 2:
        R = np.eye(k)
        return RotatedScores(R=R, loadings=L, criterion_trace=[varimax_criterion(L)])
    norms = np.ones(n)
    if normalize:
        norms = np.sqrt(np.sum(L**2, axis=1))
        norms[norms == 0] = 1.0
    # rows of Xt are loading columns; contiguous rows keep the sweeps fast
    Xt = np.ascontiguousarray((L / norms[:, None]).T)
    Rt = np.eye(k)
    trace = [varimax_criterion(Xt.T)]
    rounds = _round_robin(k)
    for _ in range(max_sweeps):
        for ii, jj in rounds:
            # pairs within a round are disjoint, so they rotate independently
            x, y = Xt[ii], Xt[jj]
            u = x * x - y * y
            v = 2.0 * x * y
            a, b = u.sum(axis=1), v.sum(axis=1)
            num = 2.0 * (np.einsum("ij,ij->i", u, v) - a * b / n)
            den = (np.einsum("ij,ij->i", u, u) - np.einsum("ij,ij->i", v, v)) - (a * a - b * b) / n
            phi = 0.25 * np.arctan2(num, den)
            c, s = np.cos(phi)[:, None], np.sin(phi)[:, None]
            Xt[ii], Xt[jj] = c * x + s * y, -s * x + c * y
            Ri, Rj = Rt[ii], Rt[jj]
            Rt[ii], Rt[jj] = c * Ri + s * Rj, -s * Ri + c * Rj
        crit = varimax_criterion(Xt.T)
        improvement = crit - trace[-1]
        if improvement < 0:
            # exact ascent; a loss can only be rounding at the optimum
            break
        trace.append(crit)
        if improvement < tol:
            break
    R = Rt.T
    # re-orthonormalize against accumulated rounding
    uu, _, vvt = np.linalg.svd(R)
    R = uu @ vvt
    rotated = L @ R
    idx = np.argmax(np.abs(rotated), axis=0)
    signs = np.sign(rotated[idx, np.arange(k)])
    signs[signs == 0] = 1.0
    R = R * signs
    return RotatedScores(R=R, loadings=L @ R, criterion_trace=trace)


def project_users(f: SvdFactors, rotation: np.ndarray | None = None) -> np.ndarray:
    scores = f.U * f.S
    if rotation is None:
        return scores
    rotation = np.asarray(rotation)
    if rotation.shape != (f.K, f.K):
        raise ParameterError(f"rotation must be {f.K}x{f.K}, got {rotation.shape}")
    return scores @ rotation


def rotate(f: SvdFactors, apply_varimax: bool = True, normalize: bool = True) -> RotatedScores:
    """Varimax-rotate the like loadings ``V`` and carry the rotation to user scores."""
    if not apply_varimax:
        R = np.eye(f.K)
        return RotatedScores(R=R, scores=project_users(f), loadings=f.V.copy(), criterion_trace=[])
    rot = varimax(f.V, normalize=normalize)
    return RotatedScores(
        R=rot.R, scores=project_users(f, rot.R), loadings=rot.loadings, criterion_trace=rot.criterion_trace
    )


@dataclass(frozen=True)
class CorrelationTable:
    values: np.ndarray  # K x 8
    zero_variance: np.ndarray  # K x 8 bool warning flags


def trait_correlations(scores: np.ndarray, traits: TraitTable) -> CorrelationTable:
    """Pearson correlation of every score column with every trait (point-biserial for binary ones)."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape[0] != len(traits):
        raise ParameterError("scores and traits are not aligned")
    if not traits.is_complete():
        raise DataError("trait correlations need complete traits; impute first")
    sc = scores - scores.mean(axis=0)
    tc = traits.values - traits.values.mean(axis=0)
    s_norm = np.sqrt(np.sum(sc**2, axis=0))
    t_norm = np.sqrt(np.sum(tc**2, axis=0))
    denom = np.outer(s_norm, t_norm)
    flags = denom == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (sc.T @ tc) / denom
    r[flags] = 0.0
    return CorrelationTable(values=np.clip(r, -1.0, 1.0), zero_variance=flags)


def save_factors(path: str | os.PathLike, f: SvdFactors, rot: RotatedScores, apply_varimax: bool) -> None:
    """Persist factors, rotation and user scores as an ``.npz`` archive.

    Keys: ``U``, ``S``, ``V``, ``R``, ``scores``, ``loadings``,
    ``criterion_trace``, ``row_ids``, ``col_ids``, ``varimax``.
    """
    with open(path, "wb") as fh:
        np.savez(
            fh, U=f.U, S=f.S, V=f.V, R=rot.R, scores=rot.scores, loadings=rot.loadings,
            criterion_trace=np.asarray(rot.criterion_trace, dtype=np.float64),
            row_ids=np.array(f.row_ids, dtype=str), col_ids=np.array(f.col_ids, dtype=str),
            varimax=np.array(apply_varimax),
        )


def load_factors(path: str | os.PathLike) -> tuple[SvdFactors, RotatedScores, bool]:
    with np.load(path, allow_pickle=False) as z:
        f = SvdFactors(
            U=z["U"], S=z["S"], V=z["V"], row_ids=tuple(z["row_ids"].tolist()), col_ids=tuple(z["col_ids"].tolist())
        )
        rot = RotatedScores(
            R=z["R"], scores=z["scores"], loadings=z["loadings"], criterion_trace=z["criterion_trace"].tolist()
        )
        return f, rot, bool(z["varimax"])


CORRELATION_COLUMNS = TRAITS
