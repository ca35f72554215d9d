"""Planted latent-factor corpus generator.

Users get standard-normal factor vectors and likes scaled standard-normal
affinity vectors. A user likes an item with probability
``sigmoid(bias + factor . affinity)``, where the bias is calibrated so the
expected density equals ``like_base_rate``. Traits are
linear in the user factors plus Gaussian noise; binary traits threshold
that latent score at its median.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .errors import ParameterError
from .ingest import (
    BINARY_TRAITS, LIKES_FILE, PAIRS_FILE, TRAITS, USERS_FILE,
    LikeCatalog, LikeRecord, TraitTable, UserLikeMatrix, write_pairs,
)

FACTORS_FILE = "factors.csv"
AGE_OFFSET = 25.0
AGE_SCALE = 5.0


def _unit(n_factors: int, *weights: tuple[int, float]) -> tuple[float, ...]:
    v = [0.0] * n_factors
    for idx, w in weights:
        if idx < n_factors:
            v[idx] = w
    return tuple(v)


def default_loadings(n_factors: int) -> dict[str, tuple[float, ...]]:
    """Gender and age strongly planted, political and openness moderate,
    three weak traits, neuroticism pure noise."""
    return {
        "gender": _unit(n_factors, (0, 1.0), (1, 0.5)),
        "age": _unit(n_factors, (2, 1.0), (3, 0.5)),
        "political": _unit(n_factors, (4, 0.8)),
        "ope": _unit(n_factors, (5, 0.6)),
        "con": _unit(n_factors, (6, 0.3)),
        "ext": _unit(n_factors, (7, 0.3)),
        "agr": _unit(n_factors, (8, 0.3)),
        "neu": _unit(n_factors, ),
    }


DEFAULT_NOISE = {
    "gender": 0.3, "age": 0.3, "political": 0.6, "ope": 0.8,
    "con": 1.0, "ext": 1.0, "agr": 1.0, "neu": 1.0,
}


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 4000
    n_likes: int = 1200
    n_factors: int = 12
    like_base_rate: float = 0.1
    # affinity vectors are standard normal times this factor; values near 1
    # saturate the link and leak factor interactions into the leading SVD dimensions
    affinity_scale: float = 0.3
    signal: dict[str, tuple[float, ...]] | None = None
    noise_sd: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_NOISE))
    nonlinear_trait: str | None = None
    missing_rate: float = 0.1
    seed: int = 0

    def loadings(self) -> dict[str, np.ndarray]:
        signal = self.signal if self.signal is not None else default_loadings(self.n_factors)
        return {t: np.asarray(signal.get(t, (0.0,) * self.n_factors), dtype=np.float64) for t in TRAITS}

    def validate(self) -> None:
        if self.n_users < 1 or self.n_likes < 1 or self.n_factors < 1:
            raise ParameterError("n_users, n_likes and n_factors must be positive")
        if self.n_factors > min(self.n_users, self.n_likes):
            raise ParameterError("n_factors cannot exceed min(n_users, n_likes)")
        if self.affinity_scale < 0:
            raise ParameterError("affinity_scale must be >= 0")
        if not 0.0 < self.like_base_rate < 1.0:
            raise ParameterError("like_base_rate must be in (0, 1)")
        if not 0.0 <= self.missing_rate <= 1.0:
            raise ParameterError("missing_rate must be in [0, 1]")
        if self.nonlinear_trait is not None and self.nonlinear_trait not in TRAITS:
            raise ParameterError(f"unknown nonlinear trait {self.nonlinear_trait!r}")
        if self.nonlinear_trait is not None and self.n_factors < 2:
            raise ParameterError("a nonlinear trait needs at least 2 factors")
        for t, vec in self.loadings().items():
            if vec.shape != (self.n_factors,):
                raise ParameterError(f"loading for {t} must have {self.n_factors} entries")
            noise = self.noise_sd.get(t, 0.0)
            if noise < 0:
                raise ParameterError(f"noise_sd for {t} must be >= 0")
            if t != self.nonlinear_trait and not np.any(vec) and noise == 0:
                raise ParameterError(f"degenerate config: trait {t} has zero signal and zero noise")


@dataclass
class SynthCorpus:
    matrix: UserLikeMatrix
    traits: TraitTable
    likes: LikeCatalog
    factors: np.ndarray  # n_users x n_factors, rows aligned with traits
    affinities: np.ndarray  # n_likes x n_factors
    bias: float

    def pairs(self) -> list[tuple[str, str]]:
        return self.matrix.pairs()


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def generate(cfg: SynthConfig = SynthConfig()) -> SynthCorpus:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    F = rng.standard_normal((cfg.n_users, cfg.n_factors))
    A = cfg.affinity_scale * rng.standard_normal((cfg.n_likes, cfg.n_factors))
    logits = F @ A.T
    bias = brentq(lambda b: float(np.mean(_sigmoid(b + logits))) - cfg.like_base_rate, -60.0, 60.0, xtol=1e-12)
    liked = rng.random(logits.shape) < _sigmoid(bias + logits)
    noise = rng.standard_normal((cfg.n_users, len(TRAITS)))
    blank = rng.random(cfg.n_users) < cfg.missing_rate

    values = np.empty((cfg.n_users, len(TRAITS)))
    loadings = cfg.loadings()
    for j, t in enumerate(TRAITS):
        sd = cfg.noise_sd.get(t, 0.0)
        if t == cfg.nonlinear_trait:
            latent = F[:, 0] * F[:, 1] + sd * noise[:, j]
        else:
            latent = F @ loadings[t] + sd * noise[:, j]
        if t in BINARY_TRAITS:
            values[:, j] = (latent > np.median(latent)).astype(np.float64)
        elif t == "age":
            values[:, j] = np.maximum(AGE_OFFSET + AGE_SCALE * latent, 0.0)
        else:
            values[:, j] = latent
    values[blank, TRAITS.index("political")] = np.nan

    user_ids = [f"u{i:06d}" for i in range(cfg.n_users)]
    like_ids = [f"l{j:06d}" for j in range(cfg.n_likes)]
    traits = TraitTable(user_ids, values)
    likes = LikeCatalog(LikeRecord(lid, f"like {j}") for j, lid in enumerate(like_ids))
    rows, cols = np.nonzero(liked)
    full = UserLikeMatrix.from_entries(user_ids, like_ids, rows, cols)
    matrix = full.submatrix(full.row_degrees() > 0, full.col_degrees() > 0)
    return SynthCorpus(matrix, traits, likes, F, A, bias)


def write_corpus(corpus: SynthCorpus, out_dir: str | os.PathLike) -> Path:
    """Write users.csv, likes.csv, users-likes.csv and the ground-truth factors."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus.traits.to_csv(out / USERS_FILE)
    corpus.likes.to_csv(out / LIKES_FILE)
    write_pairs(out / PAIRS_FILE, corpus.pairs())
    with open(out / FACTORS_FILE, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["userid"] + [f"f{k + 1}" for k in range(corpus.factors.shape[1])])
        for uid, row in zip(corpus.traits.user_ids, corpus.factors):
            w.writerow([uid] + [repr(float(v)) for v in row])
    return out
