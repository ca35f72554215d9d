"""Accuracy reports and tabular artifacts (CSV and fixed-width text)."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError
from .impute import PooledRow
from .ingest import TRAITS
from .metrics import AccuracyScore
from .preprocess import MatrixStats

TRAIT_LABELS = {
    "gender": "Gender",
    "age": "Age",
    "political": "Political view",
    "ope": "Openness",
    "con": "Conscientiousness",
    "ext": "Extroversion",
    "agr": "Agreeableness",
    "neu": "Neuroticism",
}
MODEL_KINDS = ("regression", "snn", "dnn2", "dnn3")


@dataclass(frozen=True)
class ReportRow:
    model: str
    trait: str
    K: int
    hyper: str
    metric: str
    accuracy: float


@dataclass
class EvalReport:
    rows: list[ReportRow]
    stage: str = ""
    config_hash: str = ""
    flags: list[str] = field(default_factory=list)

    @classmethod
    def from_scores(cls, model: str, K: int, hyper: str, scores: Iterable[AccuracyScore], **kw) -> "EvalReport":
        if model not in MODEL_KINDS:
            raise ParameterError(f"model must be one of {MODEL_KINDS}, got {model!r}")
        rows = [ReportRow(model, s.trait, K, hyper, s.kind, s.value) for s in scores]
        return cls(rows, **kw)

    def ordered(self) -> list[ReportRow]:
        rank = {t: i for i, t in enumerate(TRAITS)}
        return sorted(self.rows, key=lambda r: (r.model, r.K, r.hyper, rank.get(r.trait, len(rank))))

    @property
    def mean(self) -> float:
        return math.fsum(r.accuracy for r in self.rows) / len(self.rows)


def pct(x: float) -> str:
    return f"{100.0 * x:.2f}%"


def _render_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def render_report(report: EvalReport, fmt: str = "text") -> str:
    """Render one model run: one row per trait in table order plus the mean."""
    if not report.rows:
        raise ParameterError("cannot render an empty report")
    rows = report.ordered()
    if fmt == "csv":
        body = [
            [r.model, r.trait, r.K, r.hyper, r.metric, repr(r.accuracy), f"{100 * r.accuracy:.2f}",
             report.stage, report.config_hash, ";".join(report.flags)]
            for r in rows
        ]
        first = rows[0]
        body.append([first.model, "mean", first.K, first.hyper, "mixed", repr(report.mean),
                     f"{100 * report.mean:.2f}", report.stage, report.config_hash, ";".join(report.flags)])
        header = ["model", "trait", "K", "hyperparameters", "metric", "accuracy", "accuracy_pct",
                  "stage", "config_hash", "flags"]
        return _render_csv(header, body)
    if fmt != "text":
        raise ParameterError(f"unknown report format {fmt!r}")
    first = rows[0]
    lines = [f"Model: {first.model}  K={first.K}  {first.hyper}".rstrip(), ""]
    lines.append(f"{'Trait':<20}{'Variable':<12}{'Metric':<9}{'Pred. accuracy':>15}")
    for r in rows:
        lines.append(f"{TRAIT_LABELS.get(r.trait, r.trait):<20}{r.trait:<12}{r.metric:<9}{pct(r.accuracy):>15}")
    lines.append(f"{'':<20}{'Mean':<12}{'':<9}{pct(report.mean):>15}")
    for flag in report.flags:
        lines.append(f"WARNING: {flag}")
    return "\n".join(lines) + "\n"


def read_report_csv(text: str) -> EvalReport:
    reader = csv.DictReader(io.StringIO(text))
    rows, stage, chash, flags = [], "", "", []
    for rec in reader:
        stage, chash = rec["stage"], rec["config_hash"]
        flags = [f for f in rec["flags"].split(";") if f]
        if rec["trait"] == "mean":
            continue
        rows.append(ReportRow(rec["model"], rec["trait"], int(rec["K"]), rec["hyperparameters"],
                              rec["metric"], float(rec["accuracy"])))
    return EvalReport(rows, stage=stage, config_hash=chash, flags=flags)


def render_comparison(reports: Sequence[EvalReport], fmt: str = "text") -> str:
    """Side-by-side accuracy of several model runs, one column per run."""
    if not reports:
        raise ParameterError("nothing to compare")
    heads = []
    for rep in reports:
        r0 = rep.ordered()[0]
        heads.append((r0.model, r0.K, r0.hyper))
    acc = [{r.trait: r.accuracy for r in rep.rows} for rep in reports]
    traits = [t for t in TRAITS if any(t in a for a in acc)]
    if fmt == "csv":
        header = ["trait", "variable"] + [f"{m} K={k} {h}".strip() for m, k, h in heads]
        body = [[TRAIT_LABELS[t], t] + [f"{100 * a[t]:.2f}" if t in a else "" for a in acc] for t in traits]
        body.append(["Mean", ""] + [f"{100 * rep.mean:.2f}" for rep in reports])
        # provenance of each column, matching the run manifest
        body.append(["stage", ""] + [rep.stage for rep in reports])
        body.append(["config_hash", ""] + [rep.config_hash for rep in reports])
        return _render_csv(header, body)
    if fmt != "text":
        raise ParameterError(f"unknown report format {fmt!r}")
    width = 14
    lines = [f"{'':<20}{'':<10}" + "".join(f"{m:>{width}}" for m, _, _ in heads),
             f"{'Trait':<20}{'Var.':<10}" + "".join(f"{'K = ' + str(k):>{width}}" for _, k, _ in heads)]
    for t in traits:
        cells = "".join(f"{(pct(a[t]) if t in a else '-'):>{width}}" for a in acc)
        lines.append(f"{TRAIT_LABELS[t]:<20}{t:<10}{cells}")
    lines.append(f"{'Mean':<20}{'':<10}" + "".join(f"{pct(rep.mean):>{width}}" for rep in reports))
    lines.append("")
    for i, ((m, k, h), rep) in enumerate(zip(heads, reports), 1):
        lines.append(f"[{i}] {m} K={k} {h} (stage {rep.stage or '?'}, config {rep.config_hash or '?'})")
    for rep in reports:
        for flag in rep.flags:
            lines.append(f"WARNING ({rep.rows[0].model} K={rep.rows[0].K}): {flag}")
    return "\n".join(lines) + "\n"


def render_stats(raw: MatrixStats, trimmed: MatrixStats, fmt: str = "text") -> str:
    labels = {
        "n_users": "# of users", "n_likes": "# of unique Likes", "n_pairs": "# of User-Like pairs",
        "density_pct": "Matrix density (%)",
    }
    raw_rows, trim_rows = raw.rows(), trimmed.rows()
    if fmt == "csv":
        return _render_csv(["statistic", "raw", "trimmed"],
                           [[k, repr(float(a)), repr(float(b))] for (k, a), (_, b) in zip(raw_rows, trim_rows)])

    def cell(key, v):
        if key == "density_pct":
            return f"{v:.3f}%"
        if key.endswith("_mean"):
            return f"{v:.0f}"
        return f"{v:g}" if isinstance(v, float) and not float(v).is_integer() else f"{int(v)}"

    lines = [f"{'Descriptive statistics':<28}{'Raw Matrix':>14}{'Trimmed Matrix':>16}"]
    for (k, a), (_, b) in zip(raw_rows, trim_rows):
        if k == "likes_per_user_mean":
            lines.append("Likes per User")
        if k == "users_per_like_mean":
            lines.append("Users per Like")
        label = labels.get(k, "  " + k.rsplit("_", 1)[1].capitalize())
        lines.append(f"{label:<28}{cell(k, a):>14}{cell(k, b):>16}")
    return "\n".join(lines) + "\n"


IMPUTATION_COLUMNS = ("term", "est", "se", "t", "df", "Pr(>|t|)", "lo95", "hi95", "nmis", "fmi", "lambda")


def render_imputation(rows: Sequence[PooledRow], fmt: str = "csv") -> str:
    def vals(r: PooledRow):
        return [r.est, r.se, r.t, r.df, r.p_value, r.lo95, r.hi95]

    if fmt == "csv":
        body = [[r.term] + [repr(float(v)) for v in vals(r)] + ["NA" if r.nmis is None else r.nmis, repr(r.fmi), repr(r.lam)]
                for r in rows]
        return _render_csv(IMPUTATION_COLUMNS, body)
    lines = [f"{'':<13}" + "".join(f"{c:>10}" for c in IMPUTATION_COLUMNS[1:])]
    for r in rows:
        nums = "".join(f"{v:>10.2f}" for v in vals(r))
        nmis = "NA" if r.nmis is None else str(r.nmis)
        lines.append(f"{r.term:<13}{nums}{nmis:>10}{r.fmi:>10.2f}{r.lam:>10.2f}")
    return "\n".join(lines) + "\n"


def render_sweep(table: dict, fmt: str = "csv") -> str:
    """K-sweep results as long-format CSV: trait, K, metric, accuracy."""
    rank = {t: i for i, t in enumerate(TRAITS)}
    items = sorted(table.items(), key=lambda kv: (rank[kv[0][0]], kv[0][1]))
    return _render_csv(["trait", "K", "metric", "accuracy"],
                       [[t, k, s.kind, repr(s.value)] for (t, k), s in items])


def render_correlations(values: np.ndarray, flags: np.ndarray) -> str:
    body = []
    for d, (row, frow) in enumerate(zip(values, flags), 1):
        body.append([d] + [repr(float(v)) for v in row] + [";".join(t for t, f in zip(TRAITS, frow) if f)])
    return _render_csv(["dimension", *TRAITS, "zero_variance"], body)


def write_atomic(path, text: str) -> None:
    """Write ``text`` to a sibling temp file, then rename over ``path``."""
    path = os.fspath(path)
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def emit_report(report: EvalReport, path, fmt: str = "text") -> None:
    write_atomic(path, render_report(report, fmt))
