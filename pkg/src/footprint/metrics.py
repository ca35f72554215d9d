"""Prediction accuracy metrics: Pearson correlation and ROC AUC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ParameterError, UndefinedMetricError
from .ingest import BINARY_TRAITS

PEARSON = "pearson"
AUC = "auc"


@dataclass(frozen=True)
class AccuracyScore:
    trait: str
    kind: str
    value: float


def metric_for(trait: str) -> str:
    """AUC for the binary traits (gender, political), Pearson for the rest."""
    return AUC if trait in BINARY_TRAITS else PEARSON


def pearson(pred, actual) -> float:
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(actual, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ParameterError("pearson needs two 1-D arrays of equal length")
    if len(x) < 2:
        raise ParameterError("pearson needs at least 2 observations")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = xc @ xc
    syy = yc @ yc
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedMetricError("correlation undefined for a zero-variance input")
    r = (xc @ yc) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


def auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied scores get midranks, i.e. count one half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ParameterError("auc needs two 1-D arrays of equal length")
    pos = y == 1
    if not np.all(pos | (y == 0)):
        raise ParameterError("auc labels must be 0 or 1")
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC undefined when only one class is present")
    ranks = rankdata(s, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def score(trait: str, pred, actual) -> AccuracyScore:
    kind = metric_for(trait)
    value = auc(pred, actual) if kind == AUC else pearson(pred, actual)
    return AccuracyScore(trait, kind, value)
