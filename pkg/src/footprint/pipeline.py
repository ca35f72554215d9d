"""Stage orchestration: artifacts on disk, a run manifest and a per-directory lock.

Each stage reads the artifacts of earlier stages from the output directory,
writes its own through a temp file plus rename, and records every artifact
in ``manifest.json`` together with the stage name and a hash of the
parameters that produced it (including the hashes of its inputs).
"""

from __future__ import annotations

import configparser
import contextlib
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np
from filelock import FileLock, Timeout

from . import report as rpt
from .dimred import load_factors, rotate, save_factors, trait_correlations, truncated_svd
from .errors import DataError, ParameterError, PrerequisiteError
from .impute import ImputeConfig, combine, impute_binary, pooled_analysis
from .ingest import TRAITS, TraitTable, UserLikeMatrix, build_matrix, load_corpus, parse_users
from .neural import TrainConfig, evaluate_nn, train
from .preprocess import TrimConfig, stats, trim
from .regression import CvConfig, k_sweep, regress_all
from .synth import SynthConfig, generate, write_corpus

STAGES = ("synth", "preprocess", "impute", "svd", "analyze", "regress", "train-nn", "report")
ENV_DATA_DIR = "FOOTPRINT_INPUT_DATA_DIR"
MANIFEST = "manifest.json"
LOCK_FILE = ".footprint.lock"

MATRIX_FILE = "ul_matrix.npz"
RAW_MATRIX_FILE = "ul_matrix_raw.npz"
TRAITS_FILE = "traits.csv"
IMPUTED_FILE = "traits_imputed.csv"
NN_KINDS = {1: "snn", 2: "dnn2", 3: "dnn3"}


class LockedError(DataError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    input_data_dir: str = "data"
    output_dir: str = "out"
    synth: SynthConfig = field(default_factory=SynthConfig)
    trim: TrimConfig = field(default_factory=TrimConfig)
    impute: ImputeConfig = field(default_factory=ImputeConfig)
    impute_target: str = "political"
    impute_mode: str = "first"
    K: int = 100
    apply_varimax: bool = True
    svd_seed: int = 0
    k_values: tuple[int, ...] = (2, 5, 10, 20, 50, 100)
    per_fold_svd: bool = False
    cv: CvConfig = field(default_factory=CvConfig)
    hidden: tuple[int, ...] = (512,)
    nn: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.K < 1 or any(k < 1 for k in self.k_values):
            raise ParameterError("SVD dimensions must be positive")
        if self.impute_mode not in ("first", "majority"):
            raise ParameterError(f"impute mode must be 'first' or 'majority', got {self.impute_mode!r}")
        if not 1 <= len(self.hidden) <= 3 or any(h < 1 for h in self.hidden):
            raise ParameterError("hidden layers: 1 to 3 positive sizes")

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    @property
    def nn_kind(self) -> str:
        return NN_KINDS[len(self.hidden)]


# ---------------------------------------------------------------- config file

def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ParameterError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in str(text).replace(",", " ").split())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in str(text).replace(",", " ").split())


def _opt_str(text: str) -> str | None:
    return None if str(text).strip().lower() in ("", "none") else str(text).strip()


# key -> (sub-config or None, field name, parser)
CONFIG_KEYS: dict[str, tuple[str | None, str, Callable]] = {
    "input_data_dir": (None, "input_data_dir", str),
    "output_dir": (None, "output_dir", str),
    "synth_n_users": ("synth", "n_users", int),
    "synth_n_likes": ("synth", "n_likes", int),
    "synth_n_factors": ("synth", "n_factors", int),
    "synth_like_base_rate": ("synth", "like_base_rate", float),
    "synth_affinity_scale": ("synth", "affinity_scale", float),
    "synth_nonlinear_trait": ("synth", "nonlinear_trait", _opt_str),
    "synth_missing_rate": ("synth", "missing_rate", float),
    "synth_seed": ("synth", "seed", int),
    "min_users_per_like": ("trim", "min_users_per_like", int),
    "min_likes_per_user": ("trim", "min_likes_per_user", int),
    "imputations": ("impute", "m", int),
    "impute_seed": ("impute", "seed", int),
    "impute_bootstrap": ("impute", "bootstrap", _bool),
    "impute_target": (None, "impute_target", str),
    "impute_mode": (None, "impute_mode", str),
    "svd_dimensions": (None, "K", int),
    "apply_varimax": (None, "apply_varimax", _bool),
    "svd_seed": (None, "svd_seed", int),
    "k_values": (None, "k_values", _ints),
    "per_fold_svd": (None, "per_fold_svd", _bool),
    "folds": ("cv", "k", int),
    "cv_seed": ("cv", "seed", int),
    "cv_pooling": ("cv", "pooling", str),
    "hidden": (None, "hidden", _ints),
    "learning_rate": ("nn", "gamma0", float),
    "decay_steps": ("nn", "decay_steps", int),
    "decay_rate": ("nn", "decay_rate", float),
    "batch_size": ("nn", "batch_size", int),
    "iterations": ("nn", "max_iterations", int),
    "dropout_scheme": ("nn", "dropout_scheme", str),
    "keep_prob": ("nn", "keep_prob", float),
    "nn_seed": ("nn", "seed", int),
    "split": ("nn", "split", _floats),
    "log_every": ("nn", "log_every", int),
    "standardize_inputs": ("nn", "standardize_inputs", _bool),
}


def with_overrides(cfg: PipelineConfig, values: dict[str, object]) -> PipelineConfig:
    """Apply ``key -> value`` overrides; string values are parsed per key."""
    top: dict[str, object] = {}
    subs: dict[str, dict[str, object]] = {}
    for key, raw in values.items():
        if key not in CONFIG_KEYS:
            raise ParameterError(f"unknown config key {key!r}")
        sub, name, parse = CONFIG_KEYS[key]
        try:
            val = parse(raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise ParameterError(f"bad value for {key}: {raw!r}") from exc
        if sub is None:
            top[name] = val
        else:
            subs.setdefault(sub, {})[name] = val
    for sub, kw in subs.items():
        top[sub] = replace(getattr(cfg, sub), **kw)
    return replace(cfg, **top)


def read_config_file(path: str | os.PathLike) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc.strerror}") from exc
    try:
        parser.read_string("[footprint]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ParameterError(f"malformed config file {path}: {exc}") from exc
    return dict(parser["footprint"])


def load_config(path: str | os.PathLike | None = None, overrides: dict[str, object] | None = None,
                environ: dict[str, str] | None = None) -> PipelineConfig:
    """Defaults, then the config file, then the environment, then explicit overrides."""
    environ = os.environ if environ is None else environ
    cfg = PipelineConfig()
    if path is not None:
        cfg = with_overrides(cfg, read_config_file(path))
    if environ.get(ENV_DATA_DIR):
        cfg = replace(cfg, input_data_dir=environ[ENV_DATA_DIR])
    if overrides:
        cfg = with_overrides(cfg, overrides)
    return cfg


# ---------------------------------------------------------------- artifacts

def config_hash(payload: object) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@contextlib.contextmanager
def staged(path: Path) -> Iterator[Path]:
    """Yield a temp path next to ``path``; rename it over ``path`` on success."""
    tmp = path.with_name(f"{path.stem}.tmp-{os.getpid()}{path.suffix}")
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


class Run:
    """Context for one stage: lock held, manifest loaded, outputs recorded."""

    def __init__(self, cfg: PipelineConfig, stage: str, params: dict, inputs: Sequence[str] = ()):
        self.cfg = cfg
        self.stage = stage
        self.out = cfg.out
        self.manifest = self._read_manifest()
        upstream = {name: self.manifest["artifacts"].get(name, {}).get("config_hash", "") for name in inputs}
        self.hash = config_hash({"stage": stage, "params": params, "inputs": upstream})
        self.params = params
        self.written: list[str] = []

    def _read_manifest(self) -> dict:
        path = self.out / MANIFEST
        if not path.exists():
            return {"artifacts": {}, "stages": {}}
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise DataError(f"corrupt manifest {path}") from exc

    def path(self, name: str) -> Path:
        return self.out / name

    @contextlib.contextmanager
    def write(self, name: str) -> Iterator[Path]:
        target = self.path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        with staged(target) as tmp:
            yield tmp
        self.written.append(name)

    def write_text(self, name: str, text: str) -> None:
        with self.write(name) as tmp:
            tmp.write_text(text, encoding="utf-8")

    def commit(self) -> None:
        for name in self.written:
            self.manifest["artifacts"][name] = {"stage": self.stage, "config_hash": self.hash}
        self.manifest["stages"][self.stage] = {"config_hash": self.hash, "params": self.params}
        text = json.dumps(self.manifest, sort_keys=True, indent=2, default=str) + "\n"
        rpt.write_atomic(self.out / MANIFEST, text)


@contextlib.contextmanager
def output_lock(out: Path) -> Iterator[None]:
    out.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(out / LOCK_FILE), timeout=0)
    try:
        lock.acquire()
    except Timeout as exc:
        raise LockedError(f"another footprint command is running on {out} (lock {out / LOCK_FILE})") from exc
    try:
        yield
    finally:
        lock.release()


def require(cfg: PipelineConfig, name: str, command: str) -> Path:
    path = cfg.out / name
    if not path.exists():
        raise PrerequisiteError(str(path), command)
    return path


def svd_file(K: int) -> str:
    return f"svd_K{K}.npz"


def _asdict(obj) -> dict:
    return dataclasses.asdict(obj)


def _load_scores(cfg: PipelineConfig) -> tuple[np.ndarray, TraitTable, tuple[str, ...]]:
    fpath = require(cfg, svd_file(cfg.K), f"svd --svd_dimensions {cfg.K}")
    tpath = require(cfg, IMPUTED_FILE, "impute")
    f, rot, _ = load_factors(fpath)
    traits = parse_users(tpath).subset(f.row_ids)
    return rot.scores, traits, f.row_ids


# ---------------------------------------------------------------- stages

def stage_synth(cfg: PipelineConfig) -> list[str]:
    run = Run(cfg, "synth", _asdict(cfg.synth))
    corpus = generate(cfg.synth)
    write_corpus(corpus, cfg.input_data_dir)
    run.commit()
    return [str(Path(cfg.input_data_dir))]


def stage_preprocess(cfg: PipelineConfig) -> list[str]:
    run = Run(cfg, "preprocess", {"trim": _asdict(cfg.trim), "input_data_dir": cfg.input_data_dir})
    data = Path(cfg.input_data_dir)
    if not data.is_dir():
        raise DataError(f"input data directory {data} does not exist (set input_data_dir or {ENV_DATA_DIR}, "
                        "or generate one with `footprint synth`)")
    users, likes, pairs = load_corpus(data)
    raw = build_matrix(pairs, users, likes)
    trimmed = trim(raw, cfg.trim)
    traits = users.subset(trimmed.row_ids)
    with run.write(MATRIX_FILE) as tmp:
        trimmed.save(tmp)
    with run.write(TRAITS_FILE) as tmp:
        traits.to_csv(tmp)
    raw_stats, trim_stats = stats(raw), stats(trimmed)
    run.write_text("matrix_stats.csv", rpt.render_stats(raw_stats, trim_stats, "csv"))
    run.write_text("matrix_stats.txt", rpt.render_stats(raw_stats, trim_stats, "text"))
    run.commit()
    return run.written


def stage_impute(cfg: PipelineConfig) -> list[str]:
    tpath = require(cfg, TRAITS_FILE, "preprocess")
    params = {"impute": _asdict(cfg.impute), "target": cfg.impute_target, "mode": cfg.impute_mode}
    run = Run(cfg, "impute", params, inputs=[TRAITS_FILE])
    traits = parse_users(tpath)
    completed = impute_binary(traits, cfg.impute_target, cfg.impute)
    for i, tbl in enumerate(completed, 1):
        with run.write(f"imputations/imputed_{i}.csv") as tmp:
            tbl.to_csv(tmp)
    with run.write(IMPUTED_FILE) as tmp:
        combine(completed, cfg.impute_target, cfg.impute_mode).to_csv(tmp)
    if traits.missing_count(cfg.impute_target):
        rows = pooled_analysis(completed, cfg.impute_target, traits)
        run.write_text("imputation_summary.csv", rpt.render_imputation(rows, "csv"))
        run.write_text("imputation_summary.txt", rpt.render_imputation(rows, "text"))
    run.commit()
    return run.written


def stage_svd(cfg: PipelineConfig) -> list[str]:
    mpath = require(cfg, MATRIX_FILE, "preprocess")
    params = {"K": cfg.K, "apply_varimax": cfg.apply_varimax, "seed": cfg.svd_seed}
    run = Run(cfg, "svd", params, inputs=[MATRIX_FILE])
    matrix = UserLikeMatrix.load(mpath)
    f = truncated_svd(matrix, cfg.K, seed=cfg.svd_seed)
    rot = rotate(f, cfg.apply_varimax)
    with run.write(svd_file(cfg.K)) as tmp:
        save_factors(tmp, f, rot, cfg.apply_varimax)
    run.commit()
    return run.written


def stage_analyze(cfg: PipelineConfig) -> list[str]:
    mpath = require(cfg, MATRIX_FILE, "preprocess")
    tpath = require(cfg, IMPUTED_FILE, "impute")
    params = {"k_values": list(cfg.k_values), "apply_varimax": cfg.apply_varimax, "seed": cfg.svd_seed,
              "per_fold_svd": cfg.per_fold_svd, "cv": _asdict(cfg.cv), "K": cfg.K}
    inputs = [MATRIX_FILE, IMPUTED_FILE]
    if (cfg.out / svd_file(cfg.K)).exists():
        inputs.append(svd_file(cfg.K))
    run = Run(cfg, "analyze", params, inputs=inputs)
    matrix = UserLikeMatrix.load(mpath)
    traits = parse_users(tpath)
    ks = [k for k in cfg.k_values if k <= min(matrix.shape)]
    if not ks:
        raise ParameterError(f"no K value fits the {matrix.shape[0]}x{matrix.shape[1]} matrix")
    table = k_sweep(matrix, traits, ks, cfg.cv, cfg.apply_varimax, cfg.svd_seed, cfg.per_fold_svd)
    run.write_text("k_sweep.csv", rpt.render_sweep(table))
    if svd_file(cfg.K) in inputs:
        f, rot, _ = load_factors(cfg.out / svd_file(cfg.K))
        corr = trait_correlations(rot.scores, traits.subset(f.row_ids))
        run.write_text(f"trait_correlations_K{cfg.K}.csv", rpt.render_correlations(corr.values, corr.zero_variance))
    run.commit()
    return run.written


def stage_regress(cfg: PipelineConfig) -> tuple[list[str], rpt.EvalReport]:
    scores, traits, _ = _load_scores(cfg)
    params = {"K": cfg.K, "cv": _asdict(cfg.cv)}
    run = Run(cfg, "regress", params, inputs=[svd_file(cfg.K), IMPUTED_FILE])
    results = regress_all(scores, traits, cfg.cv)
    hyper = f"folds={cfg.cv.k}"
    report = rpt.EvalReport.from_scores("regression", cfg.K, hyper, results, stage="regress", config_hash=run.hash)
    run.write_text("pred_accuracy_regr.txt", rpt.render_report(report, "text"))
    run.write_text("pred_accuracy_regr.csv", rpt.render_report(report, "csv"))
    run.commit()
    return run.written, report


def nn_flags(trace) -> list[str]:
    flags = []
    last = trace.final
    if trace.overfitting:
        flags.append(f"overfitting: final validation_loss {last.validation_loss:.6g} > train_loss {last.train_loss:.6g}")
    dead = [i + 1 for i, d in enumerate(last.dead_relu) if d >= 1.0]
    if dead:
        flags.append("dead ReLU layers " + ",".join(map(str, dead)) + " (all units zero on the final batch)")
    return flags


def stage_train_nn(cfg: PipelineConfig) -> tuple[list[str], rpt.EvalReport]:
    scores, traits, _ = _load_scores(cfg)
    kind = cfg.nn_kind
    params = {"K": cfg.K, "hidden": list(cfg.hidden), "train": _asdict(cfg.nn)}
    run = Run(cfg, "train-nn", params, inputs=[svd_file(cfg.K), IMPUTED_FILE])
    sizes = (scores.shape[1], *cfg.hidden, len(TRAITS))
    result = train(scores, traits.values, sizes, cfg.nn)
    held = result.test_idx if len(result.test_idx) else result.val_idx
    split_name = "test" if len(result.test_idx) else "validation"
    evals = evaluate_nn(result.model, scores[held], traits.values[held])
    c = cfg.nn
    hyper = (f"hidden={'x'.join(map(str, cfg.hidden))} lr={c.gamma0:g} batch={c.batch_size} "
             f"iters={c.max_iterations} dropout={c.dropout_scheme} eval={split_name}")
    report = rpt.EvalReport.from_scores(kind, cfg.K, hyper, evals, stage="train-nn", config_hash=run.hash,
                                        flags=nn_flags(result.trace))
    with run.write(f"nn_{kind}_model.npz") as tmp:
        result.model.save(tmp)
    with run.write(f"nn_{kind}_trace.csv") as tmp:
        result.trace.to_csv(tmp)
    run.write_text(f"nn_{kind}_eval.txt", rpt.render_report(report, "text"))
    run.write_text(f"nn_{kind}_eval.csv", rpt.render_report(report, "csv"))
    run.commit()
    return run.written, report


def _result_files(cfg: PipelineConfig) -> list[str]:
    names = ["pred_accuracy_regr.csv"] + [f"nn_{k}_eval.csv" for k in ("snn", "dnn2", "dnn3")]
    return [n for n in names if (cfg.out / n).exists()]


def stage_report(cfg: PipelineConfig) -> tuple[list[str], str]:
    names = _result_files(cfg)
    if not names:
        raise PrerequisiteError(str(cfg.out / "pred_accuracy_regr.csv"), "regress")
    run = Run(cfg, "report", {"sources": names}, inputs=names)
    reports = [rpt.read_report_csv((cfg.out / n).read_text(encoding="utf-8")) for n in names]
    text = rpt.render_comparison(reports, "text")
    run.write_text("summary_report.txt", text)
    run.write_text("summary_report.csv", rpt.render_comparison(reports, "csv"))
    run.commit()
    return run.written, text


STAGE_FUNCS: dict[str, Callable] = {
    "synth": stage_synth,
    "preprocess": stage_preprocess,
    "impute": stage_impute,
    "svd": stage_svd,
    "analyze": stage_analyze,
    "regress": stage_regress,
    "train-nn": stage_train_nn,
    "report": stage_report,
}


def run_stage(cfg: PipelineConfig, stage: str):
    if stage not in STAGE_FUNCS:
        raise ParameterError(f"unknown stage {stage!r}; choose from {', '.join(STAGES)}")
    with output_lock(cfg.out):
        return STAGE_FUNCS[stage](cfg)


def run_pipeline(cfg: PipelineConfig, stages: Sequence[str] = STAGES[1:]) -> dict[str, object]:
    """Run ``stages`` in pipeline order under one lock; returns each stage's result."""
    unknown = [s for s in stages if s not in STAGE_FUNCS]
    if unknown:
        raise ParameterError(f"unknown stage(s) {unknown}; choose from {', '.join(STAGES)}")
    ordered = [s for s in STAGES if s in stages]
    results = {}
    with output_lock(cfg.out):
        for s in ordered:
            results[s] = STAGE_FUNCS[s](cfg)
    return results
