"""Error metrics, bucketized breakdowns, cross-validated grid search."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DivergenceError, UndefinedMetricError
from .features import (
    TASK_FEATURE_CONFIGS,
    WINDOW_LENGTHS,
    FeatureConfig,
    Sample,
    enumerate_samples,
    fit_preprocessor,
    get_feature_config,
    stack_samples,
)
from .models import (
    ITERATIVE_FAMILIES,
    ModelConfig,
    TrainOptions,
    config_label,
    config_to_dict,
    model_grid,
    parameter_count,
    train_arrays,
)

log = logging.getLogger(__name__)

LOW_CONFIDENCE_COUNT = 20


@dataclass(frozen=True)
class MetricSet:
    """Summary errors on the raw target scale.

    Percent errors skip zero targets (counted in ``n_excluded_from_mape``).
    Undefined values are None.
    """

    mae: float
    medae: float
    mape: float | None
    medape: float | None
    r2: float | None
    n_samples: int
    n_excluded_from_mape: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def compute_metrics(preds, targets, strict: bool = False) -> MetricSet:
    """MAE, MedAE, MAPE, MedAPE (percent) and R^2 of ``preds`` against ``targets``.

    With ``strict`` an undefined MAPE (every target zero) or R^2 (constant
    targets) raises UndefinedMetricError instead of being reported as None.
    """
    p = np.asarray(preds, dtype=float).ravel()
    y = np.asarray(targets, dtype=float).ravel()
    if p.size == 0 or p.shape != y.shape:
        raise ConfigError("predictions and targets must be equal-length and non-empty")
    err = y - p
    abs_err = np.abs(err)
    nz = y != 0
    mape = medape = None
    if nz.any():
        pct = 100.0 * abs_err[nz] / np.abs(y[nz])
        mape, medape = float(np.mean(pct)), float(np.median(pct))
    elif strict:
        raise UndefinedMetricError("MAPE undefined: every target is zero")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = None
    if ss_tot > 0:
        r2 = 1.0 - float(np.sum(err * err)) / ss_tot
    elif strict:
        raise UndefinedMetricError("R^2 undefined: targets are constant")
    return MetricSet(float(np.mean(abs_err)), float(np.median(abs_err)), mape, medape, r2,
                     int(y.size), int((~nz).sum()))


def mean_metrics(runs: Sequence[MetricSet]) -> MetricSet:
    """Field-wise mean over repeated runs; a field is None if any run left it undefined."""
    if not runs:
        raise ConfigError("no runs to average")

    def avg(name):
        vals = [getattr(r, name) for r in runs]
        return None if any(v is None for v in vals) else float(np.mean(vals))

    return MetricSet(avg("mae"), avg("medae"), avg("mape"), avg("medape"), avg("r2"),
                     runs[0].n_samples, runs[0].n_excluded_from_mape)


@dataclass(frozen=True)
class BucketReport:
    edges: tuple[float, ...]
    metrics: tuple[MetricSet | None, ...]
    counts: tuple[int, ...]
    n_below: int
    n_above: int

    @property
    def low_confidence(self) -> tuple[bool, ...]:
        return tuple(c < LOW_CONFIDENCE_COUNT for c in self.counts)

    @property
    def n_excluded(self) -> int:
        return self.n_below + self.n_above

    def rows(self) -> list[dict]:
        out = []
        for i, m in enumerate(self.metrics):
            out.append({
                "bucket_lo": self.edges[i],
                "bucket_hi": self.edges[i + 1],
                "n": self.counts[i],
                "mae": None if m is None else m.mae,
                "mape": None if m is None else m.mape,
                "low_confidence": self.low_confidence[i],
            })
        return out


def bucketize_errors(preds, targets, edges) -> BucketReport:
    """Metrics per ground-truth interval ``[edges[i], edges[i+1])``."""
    e = np.asarray(edges, dtype=float)
    if e.size < 2 or np.any(np.diff(e) <= 0):
        raise ConfigError("bucket edges must be strictly ascending with at least two values")
    p = np.asarray(preds, dtype=float).ravel()
    y = np.asarray(targets, dtype=float).ravel()
    which = np.searchsorted(e, y, side="right") - 1
    metrics, counts = [], []
    for b in range(e.size - 1):
        mask = which == b
        counts.append(int(mask.sum()))
        metrics.append(compute_metrics(p[mask], y[mask]) if mask.any() else None)
    return BucketReport(tuple(float(v) for v in e), tuple(metrics), tuple(counts),
                        int((y < e[0]).sum()), int((y >= e[-1]).sum()))


def mean_bucket_reports(reports: Sequence[BucketReport]) -> BucketReport:
    first = reports[0]
    metrics = []
    for b in range(len(first.counts)):
        per_run = [r.metrics[b] for r in reports]
        metrics.append(None if per_run[0] is None else mean_metrics(per_run))
    return BucketReport(first.edges, tuple(metrics), first.counts, first.n_below, first.n_above)


def error_reduction(model, baseline) -> dict:
    """Percentage reduction of MAE and MAPE relative to a baseline."""
    def get(m, name):
        return m[name] if isinstance(m, Mapping) else getattr(m, name)

    out = {}
    for name in ("mae", "mape"):
        b, v = get(baseline, name), get(model, name)
        if b is None or v is None or b == 0:
            raise UndefinedMetricError(f"{name} reduction undefined for baseline value {b!r}")
        out[f"{name}_reduction_pct"] = 100.0 * (b - v) / b
    return out


# ---------------------------------------------------------------------------
# Cross-validation and grid search
# ---------------------------------------------------------------------------


def kfold_split(samples: Sequence, k: int, seed: int, groups: Sequence | None = None) -> list[np.ndarray]:
    """Random partition of sample indices into ``k`` folds.

    By default samples are assigned individually, giving folds whose sizes
    differ by at most one. With ``groups`` (e.g. journal ids) whole groups
    are kept together.
    """
    n = len(samples)
    if k < 2:
        raise ConfigError("k must be >= 2")
    if n < k:
        raise ConfigError(f"cannot split {n} samples into {k} folds")
    rng = np.random.default_rng(seed)
    if groups is None:
        return [np.sort(f) for f in np.array_split(rng.permutation(n), k)]
    labels = np.asarray(groups)
    uniq = np.unique(labels)
    if len(uniq) < k:
        raise ConfigError(f"cannot split {len(uniq)} groups into {k} folds")
    fold_of = {g: i for i, part in enumerate(np.array_split(rng.permutation(uniq), k)) for g in part}
    assign = np.array([fold_of[g] for g in labels])
    return [np.flatnonzero(assign == i) for i in range(k)]


@dataclass(frozen=True)
class GridTuple:
    feature_config: str
    window_len: int
    model_config: ModelConfig

    @property
    def label(self) -> str:
        return f"{self.feature_config}|{self.window_len}|{config_label(self.model_config)}"


@dataclass
class GridEntry:
    tuple: GridTuple
    cv_mape: float | None
    fold_mapes: list[float]
    mean_epochs: float | None
    n_params: int
    status: str = "ok"
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "feature_config": self.tuple.feature_config,
            "window_len": self.tuple.window_len,
            "model": config_to_dict(self.tuple.model_config),
            "label": self.tuple.label,
            "cv_mape": self.cv_mape,
            "fold_mapes": self.fold_mapes,
            "mean_epochs": self.mean_epochs,
            "n_params": self.n_params,
            "status": self.status,
            "error": self.error,
        }


@dataclass
class GridSearchResult:
    entries: list[GridEntry] = field(default_factory=list)

    @property
    def n_tuples(self) -> int:
        return len(self.entries)

    @property
    def ranked(self) -> list[GridEntry]:
        ok = [e for e in self.entries if e.status == "ok"]
        return sorted(ok, key=lambda e: (e.cv_mape, e.n_params, e.tuple.label))

    @property
    def failed(self) -> list[GridEntry]:
        return [e for e in self.entries if e.status != "ok"]

    def best(self, family: str | None = None) -> GridEntry:
        for e in self.ranked:
            if family is None or e.tuple.model_config.family == family:
                return e
        raise ConfigError(f"no successful grid entry for {family or 'any family'}")

    def to_dict(self) -> dict:
        return {"n_tuples": self.n_tuples, "n_failed": len(self.failed),
                "ranking": [e.tuple.label for e in self.ranked],
                "entries": [e.to_dict() for e in self.entries]}


def enumerate_grid(feature_configs: Iterable[str], window_lens: Iterable[int],
                   model_configs: Iterable[ModelConfig]) -> list[GridTuple]:
    models = list(model_configs)
    return [GridTuple(fc, w, m) for fc in feature_configs for w in window_lens for m in models]


def task_grid(task: str, families: Iterable[str], seed: int = 0) -> list[GridTuple]:
    """The full grid for a task: its feature configurations x window lengths x model grids."""
    if task not in TASK_FEATURE_CONFIGS:
        raise ConfigError(f"unknown task {task!r}")
    models = [m for fam in families for m in model_grid(fam, seed)]
    return enumerate_grid(TASK_FEATURE_CONFIGS[task], WINDOW_LENGTHS, models)


def grid_size(task: str, family: str) -> int:
    """Analytic tuple count: feature configurations x windows x model grid size."""
    from .models import GRIDS

    n_models = 1
    for values in GRIDS[family].values():
        n_models *= len(values)
    return len(TASK_FEATURE_CONFIGS[task]) * len(WINDOW_LENGTHS) * n_models


def fold_mape(preds, targets) -> float:
    m = compute_metrics(preds, targets)
    if m.mape is None:
        raise UndefinedMetricError("fold has no nonzero targets")
    return m.mape


@dataclass
class _FoldData:
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val_raw: np.ndarray
    preprocessor: object


def _prepare_folds(samples: Sequence[Sample], config: FeatureConfig, k: int, seed: int,
                   fold_mode: str) -> list[_FoldData]:
    groups = [s.journal_id for s in samples] if fold_mode == "journal" else None
    folds = kfold_split(samples, k, seed, groups)
    X, y = stack_samples(samples)
    out = []
    for i, val_idx in enumerate(folds):
        tr_idx = np.concatenate([f for j, f in enumerate(folds) if j != i])
        pre = fit_preprocessor([samples[t] for t in tr_idx], config)
        out.append(_FoldData(pre.transform_inputs(X[tr_idx]), pre.transform_target(y[tr_idx]),
                             pre.transform_inputs(X[val_idx]), y[val_idx], pre))
    return out


def _score_tuple(model_config: ModelConfig, folds: list[_FoldData], opts: TrainOptions):
    mapes, epochs = [], []
    for fd in folds:
        model = train_arrays(model_config, fd.X_train, fd.y_train, opts)
        preds = fd.preprocessor.invert_target(model.predict_batch(fd.X_val))
        mapes.append(fold_mape(preds, fd.y_val_raw))
        if model_config.family in ITERATIVE_FAMILIES:
            epochs.append(model.metadata["best_epoch"])
    return mapes, (float(np.mean(epochs)) if epochs else None)


def _score_job(args):
    model_config, folds, opts = args
    try:
        mapes, epochs = _score_tuple(model_config, folds, opts)
        return "ok", mapes, epochs, None
    except (DivergenceError, UndefinedMetricError, FloatingPointError) as exc:
        return "failed", [], None, f"{type(exc).__name__}: {exc}"


def grid_search(train_data, tuples: Sequence[GridTuple], k: int = 10, seed: int = 0,
                opts: TrainOptions | None = None, jobs: int = 1,
                fold_mode: str = "sample") -> GridSearchResult:
    """k-fold cross-validated MAPE for every grid tuple.

    Samples and fold preprocessors are built once per (feature config,
    window) pair and shared by all model configurations of that pair.
    Results are gathered in tuple order regardless of ``jobs``; a tuple
    whose training diverges is marked failed and left out of the ranking.
    """
    if not tuples:
        raise ConfigError("empty grid")
    if fold_mode not in ("sample", "journal"):
        raise ConfigError(f"unknown fold mode {fold_mode!r}")
    opts = opts or TrainOptions()
    prepared: dict[tuple[str, int], list[_FoldData] | str] = {}
    jobs_args = []
    for t in tuples:
        key = (t.feature_config, t.window_len)
        if key not in prepared:
            cfg = get_feature_config(t.feature_config)
            samples = enumerate_samples(train_data, cfg, t.window_len)
            try:
                prepared[key] = _prepare_folds(samples, cfg, k, seed, fold_mode)
            except ConfigError as exc:
                prepared[key] = f"{type(exc).__name__}: {exc}"
        jobs_args.append((t.model_config, prepared[key], opts))

    def run(args):
        if isinstance(args[1], str):
            return "failed", [], None, args[1]
        return _score_job(args)

    if jobs > 1:
        runnable = [a for a in jobs_args if not isinstance(a[1], str)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = iter(pool.map(_score_job, runnable))
        outcomes = [run(a) if isinstance(a[1], str) else next(done) for a in jobs_args]
    else:
        outcomes = [run(a) for a in jobs_args]

    result = GridSearchResult()
    for t, (status, mapes, epochs, err) in zip(tuples, outcomes):
        cfg = get_feature_config(t.feature_config)
        cv = float(np.mean(mapes)) if status == "ok" else None
        if status != "ok":
            log.warning("grid tuple %s failed: %s", t.label, err)
        result.entries.append(GridEntry(t, cv, [float(m) for m in mapes], epochs,
                                        parameter_count(t.model_config, cfg.n_features, t.window_len),
                                        status, err))
    return result


def grid_counts(task: str, families: Iterable[str]) -> dict[str, int]:
    return {f: len(task_grid(task, [f])) for f in families}


def safe_mape(m: MetricSet) -> float:
    return math.nan if m.mape is None else m.mape
