"""Experiment configuration and the end-to-end run.

A run splits the journals, selects one model per requested entry (pinned
or by grid search), trains it ``runs`` times at a fixed epoch count with
seeds ``base_seed + i``, and scores the held-out journals against the
heuristic baselines evaluated on the same samples.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
import re
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .baselines import BASELINES, baseline_predict, min_history
from .citescore import (
    ComponentModel,
    Direct,
    PerYear,
    SumWindow,
    citescore_components,
    component_feature_configs,
)
from .data_model import (
    CITESCORE_WINDOW,
    Dataset,
    JournalHistory,
    SynthConfig,
    compute_citescore,
    generate_synthetic,
    load_ndjson,
)
from .errors import ConfigError, DataError, InsufficientHistoryError, UndefinedCiteScoreError
from .evaluation import (
    MetricSet,
    bucketize_errors,
    compute_metrics,
    enumerate_grid,
    error_reduction,
    grid_search,
    mean_bucket_reports,
    mean_metrics,
)
from .features import (
    TASK_FEATURE_CONFIGS,
    WINDOW_LENGTHS,
    FeatureConfig,
    FeatureId,
    Preprocessor,
    enumerate_samples,
    feature_value,
    fit_preprocessor,
    get_feature_config,
    split_dataset,
    stack_samples,
)
from .models import (
    ITERATIVE_FAMILIES,
    SEEDED_FAMILIES,
    TrainedModel,
    TrainOptions,
    config_from_dict,
    config_label,
    config_to_dict,
    model_grid,
    options_from_dict,
    options_to_dict,
    train_arrays,
)
from .errors import UndefinedMetricError

log = logging.getLogger(__name__)

TASKS = ("citations", "citescore")
STRATEGIES = ("sum", "per_year", "direct")
DEFAULT_EDGES = {"citations": [float(v) for v in range(0, 1001, 100)],
                 "citescore": [float(v) for v in range(0, 11)]}


def _require_seed(section: dict, name: str, fallback: int | None, key: str = "seed") -> int:
    if section.get(key) is not None:
        return int(section[key])
    if fallback is None:
        raise ConfigError(f"{name}.{key} is required (or pass --seed)")
    return int(fallback)


@dataclass
class ModelSpec:
    """One model to evaluate: either pinned or selected from a family's grid."""

    config: object | None
    family: str
    feature_config: str | None = None
    window_len: int | None = None
    epochs: int | None = None
    strategy: str = "sum"
    detail: str = "Full"

    @property
    def pinned(self) -> bool:
        return self.config is not None


@dataclass
class ExperimentConfig:
    task: str
    data: dict
    train_fraction: float
    split_seed: int
    models: list[ModelSpec]
    baselines: tuple[str, ...]
    runs: int
    base_seed: int
    bucket_edges: list[float]
    training: TrainOptions
    grid: dict | None = None
    output_dir: str = "out"
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None, out_dir: str | None = None) -> "ExperimentConfig":
        d = json.loads(json.dumps(d))
        task = d.get("task")
        if task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {task!r}")
        data = dict(d.get("data") or {})
        if ("path" in data) == ("synth" in data):
            raise ConfigError("data must give exactly one of 'path' or 'synth'")
        if "synth" in data:
            data["seed"] = _require_seed(data, "data", seed)
        split = d.get("split") or {}
        ev = d.get("evaluation") or {}
        grid = d.get("grid")
        if grid is not None:
            grid = dict(grid)
            grid["seed"] = _require_seed(grid, "grid", seed)
        specs = []
        for m in d.get("models") or []:
            specs.append(_model_spec(m, task))
        if grid is not None:
            for fam in grid.get("families", []):
                if not any(s.family == fam and not s.pinned for s in specs):
                    specs.append(ModelSpec(None, fam, strategy=grid.get("strategy", "sum"),
                                           detail=grid.get("detail", "Full")))
        if any(not s.pinned for s in specs) and grid is None:
            raise ConfigError("unpinned models need a 'grid' section")
        baselines = tuple(ev.get("baselines", BASELINES))
        for b in baselines:
            if b not in BASELINES:
                raise ConfigError(f"unknown baseline {b!r}")
        if not specs and not baselines:
            raise ConfigError("nothing to evaluate: no models and no baselines")
        runs = int(ev.get("runs", 10))
        if runs < 1:
            raise ConfigError("evaluation.runs must be >= 1")
        edges = [float(v) for v in ev.get("bucket_edges", DEFAULT_EDGES[task])]
        return cls(
            task=task, data=data,
            train_fraction=float(split.get("train_fraction", 0.9)),
            split_seed=_require_seed(split, "split", seed),
            models=specs, baselines=baselines, runs=runs,
            base_seed=_require_seed(ev, "evaluation", seed, key="base_seed"),
            bucket_edges=edges,
            training=options_from_dict(d.get("training")),
            grid=grid,
            output_dir=out_dir or d.get("output_dir", "out"),
            raw=d,
        )

    @classmethod
    def load(cls, path, seed: int | None = None, out_dir: str | None = None) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(d, seed=seed, out_dir=out_dir)

    def resolved(self) -> dict:
        """The configuration with every seed filled in, as recorded in the manifest."""
        d = dict(self.raw)
        d["data"] = self.data
        d["split"] = {"train_fraction": self.train_fraction, "seed": self.split_seed}
        d.setdefault("evaluation", {})
        d["evaluation"] = {**d["evaluation"], "runs": self.runs, "base_seed": self.base_seed,
                           "bucket_edges": self.bucket_edges, "baselines": list(self.baselines)}
        if self.grid is not None:
            d["grid"] = self.grid
        d["training"] = options_to_dict(self.training)
        return d


def _model_spec(m: dict, task: str) -> ModelSpec:
    if "config" not in m:
        raise ConfigError("each model entry needs a 'config' with a 'family'")
    cfg = config_from_dict(m["config"])
    window = m.get("window_len")
    if window is None:
        raise ConfigError(f"model {config_label(cfg)} needs a window_len")
    strategy = m.get("strategy", "sum")
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}")
    fc = m.get("feature_config")
    if task == "citations":
        if fc is None:
            raise ConfigError(f"model {config_label(cfg)} needs a feature_config")
        if fc not in TASK_FEATURE_CONFIGS["citations"]:
            raise ConfigError(f"{fc!r} is not a citations feature configuration")
    epochs = m.get("epochs")
    return ModelSpec(cfg, cfg.family, fc, int(window), None if epochs is None else int(epochs),
                     strategy, m.get("detail", "Full"))


# ---------------------------------------------------------------------------
# Stage helpers
# ---------------------------------------------------------------------------


class StageContext:
    """Tracks the running stage and wall-clock timings."""

    def __init__(self):
        self.stage = "setup"
        self.timings: dict[str, float] = {}
        self._t0 = time.perf_counter()

    def enter(self, name: str):
        now = time.perf_counter()
        self.timings[self.stage] = self.timings.get(self.stage, 0.0) + now - self._t0
        self.stage, self._t0 = name, now
        log.info("stage: %s", name)

    def close(self):
        self.enter("done")


def load_data(config: ExperimentConfig) -> Dataset:
    if "path" in config.data:
        return load_ndjson(config.data["path"])
    return generate_synthetic(SynthConfig.from_dict(config.data["synth"]), config.data["seed"])


def label_for(spec_or_cfg, suffix: str = "") -> str:
    cfg = spec_or_cfg.config if isinstance(spec_or_cfg, ModelSpec) else spec_or_cfg
    base = re.sub(r"[^A-Za-z0-9]+", "_", config_label(cfg)).strip("_")
    return base + suffix


def _with_seed(cfg, seed: int):
    return replace(cfg, seed=seed) if cfg.family in SEEDED_FAMILIES else cfg


def component_targets(task: str, strategy: str) -> list[FeatureId]:
    if task == "citations":
        return [FeatureId.C_Y]
    return [fc.target for fc in component_feature_configs(strategy)]


@dataclass
class Selection:
    """Chosen (feature configuration, window, model, epochs) for one component."""

    feature_config: FeatureConfig
    window_len: int
    config: object
    epochs: int | None
    cv_mape: float | None = None


def select_components(spec: ModelSpec, task: str, train: Dataset, config: ExperimentConfig,
                      grid_results: dict, jobs: int) -> list[Selection]:
    """One selection per strategy component (a single one for the citations task)."""
    if task == "citations":
        fcs = [get_feature_config(spec.feature_config)] if spec.pinned else None
        targets = [FeatureId.C_Y]
    else:
        fcs = component_feature_configs(spec.strategy, spec.detail) if spec.pinned else None
        targets = component_targets(task, spec.strategy)
    out = []
    for n, target in enumerate(targets):
        if spec.pinned:
            out.append(Selection(fcs[n], spec.window_len, spec.config, spec.epochs))
            continue
        candidates = _grid_candidates(task, target, config.grid)
        key = (spec.family, target.value)
        if key not in grid_results:
            tuples = enumerate_grid(candidates, config.grid.get("window_lens", WINDOW_LENGTHS),
                                    model_grid(spec.family, config.grid["seed"]))
            grid_results[key] = grid_search(train, tuples, k=int(config.grid.get("k", 10)),
                                            seed=config.grid["seed"], opts=config.training,
                                            jobs=jobs, fold_mode=config.grid.get("fold_mode", "sample"))
        best = grid_results[key].best()
        epochs = None if best.mean_epochs is None else max(1, int(round(best.mean_epochs)))
        out.append(Selection(get_feature_config(best.tuple.feature_config), best.tuple.window_len,
                             best.tuple.model_config, epochs, best.cv_mape))
    return out


def _grid_candidates(task: str, target: FeatureId, grid: dict) -> list[str]:
    if task == "citations":
        names = list(TASK_FEATURE_CONFIGS["citations"])
    elif target == FeatureId.CS_Y:
        names = ["CiteScore Direct"]
    else:
        names = [n for n in TASK_FEATURE_CONFIGS["citescore"] if get_feature_config(n).target == target]
    allowed = grid.get("feature_configs")
    if allowed:
        names = [n for n in names if n in allowed]
    if not names:
        raise ConfigError(f"no feature configuration in the grid predicts {target.value}")
    return names


def resolve_epochs(sel: Selection, X: np.ndarray, y: np.ndarray, opts: TrainOptions, seed: int) -> int | None:
    """Fixed epoch count for the final runs; found by one early-stopped fit if not given."""
    if sel.config.family not in ITERATIVE_FAMILIES:
        return None
    if sel.epochs is not None:
        return sel.epochs
    model = train_arrays(_with_seed(sel.config, seed), X, y, replace(opts, stopping="patience"))
    return max(1, int(model.metadata["best_epoch"]))


@dataclass
class FittedComponent:
    selection: Selection
    preprocessor: Preprocessor
    X: np.ndarray
    y: np.ndarray
    epochs: int | None


def fit_component_data(sel: Selection, train: Dataset, opts: TrainOptions, seed: int) -> FittedComponent:
    samples = enumerate_samples(train, sel.feature_config, sel.window_len)
    if not samples:
        raise InsufficientHistoryError(
            f"no training samples for {sel.feature_config.name!r} with window {sel.window_len}"
        )
    pre = fit_preprocessor(samples, sel.feature_config)
    X, y = stack_samples(samples)
    Xt, yt = pre.transform_inputs(X), pre.transform_target(y)
    epochs = resolve_epochs(sel, Xt, yt, opts, seed)
    return FittedComponent(sel, pre, Xt, yt, epochs)


def train_component(fc: FittedComponent, opts: TrainOptions, seed: int) -> TrainedModel:
    cfg = _with_seed(fc.selection.config, seed)
    run_opts = opts.fixed(fc.epochs) if fc.epochs is not None else opts
    return train_arrays(cfg, fc.X, fc.y, run_opts)


# ---------------------------------------------------------------------------
# Evaluation sets
# ---------------------------------------------------------------------------


def _target_series(history: JournalHistory, task: str, target_year: int) -> list[float]:
    """Observed values of the task target for every year before ``target_year``."""
    out = []
    for y in range(history.first_year, target_year):
        if task == "citations":
            v = feature_value(history, FeatureId.C_Y, y)
        else:
            try:
                v = compute_citescore(history, y)
            except (KeyError, UndefinedCiteScoreError):
                v = float("nan")
        if np.isfinite(v):
            out.append(float(v))
        elif out:
            out = []  # keep only the contiguous tail
    return out


def baseline_metrics(pairs: Sequence[tuple[JournalHistory, int]], truth: np.ndarray, task: str,
                     names: Sequence[str], edges: Sequence[float]) -> dict:
    """Baseline metrics over exactly the given (history, target year) pairs.

    Pairs whose target series is too short for a baseline are left out of
    that baseline's metrics and counted in ``n_skipped``.
    """
    series = [_target_series(h, task, yr) for h, yr in pairs]
    out = {}
    for name in names:
        keep = [i for i, s in enumerate(series) if len(s) >= min_history(name)]
        preds = np.array([baseline_predict(name, series[i]) for i in keep])
        if not keep:
            out[name] = {"metrics": None, "n_skipped": len(pairs), "buckets": None, "preds": preds}
            continue
        t = truth[keep]
        out[name] = {"metrics": compute_metrics(preds, t), "n_skipped": len(pairs) - len(keep),
                     "buckets": bucketize_errors(preds, t, edges), "preds": preds}
    return out


def citation_eval_set(test: Dataset, sel: Selection):
    samples = enumerate_samples(test, sel.feature_config, sel.window_len)
    if not samples:
        raise InsufficientHistoryError("no test samples for the selected configuration")
    X, y = stack_samples(samples)
    pairs = [(test.get(s.journal_id), s.target_year) for s in samples]
    return X, y, pairs


def citescore_eval_set(test: Dataset, selections: Sequence[Selection]):
    """Truncated histories for every (journal, year) all components can predict."""
    keys = None
    for sel in selections:
        ks = {(s.journal_id, s.target_year)
              for s in enumerate_samples(test, sel.feature_config, sel.window_len)}
        keys = ks if keys is None else keys & ks
    pairs, truncated, truth = [], [], []
    for jid, x in sorted(keys or ()):
        h = test.get(jid)
        try:
            cs = compute_citescore(h, x)
            hist = h.truncate(x - 1)
            if x - CITESCORE_WINDOW not in hist:
                continue
        except (KeyError, UndefinedCiteScoreError):
            continue
        pairs.append((h, x))
        truncated.append(hist)
        truth.append(cs)
    if not pairs:
        raise InsufficientHistoryError("no test journal-years for the CiteScore task")
    return truncated, np.array(truth), pairs


def make_strategy(strategy: str, components: Sequence[ComponentModel]):
    if strategy == "sum":
        return SumWindow(components[0])
    if strategy == "direct":
        return Direct(components[0])
    return PerYear(tuple(components))


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


def _metric_dict(m: MetricSet | None):
    return None if m is None else m.to_dict()


def dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_buckets_csv(report, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["bucket_lo", "bucket_hi", "n", "mae", "mape"])
        w.writeheader()
        for row in report.rows():
            w.writerow({k: ("" if row[k] is None else row[k]) for k in w.fieldnames})


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def model_bundle(task: str, strategy: str | None, components: Sequence[ComponentModel]) -> dict:
    return {
        "format_version": 1,
        "task": task,
        "strategy": strategy,
        "components": [
            {"feature_config": c.feature_config.name, "window_len": c.window_len,
             "preprocessor": c.preprocessor.to_dict(),
             "model": c.model.to_dict(c.preprocessor.digest())}
            for c in components
        ],
    }


def load_bundle(d: dict):
    """``(task, strategy, [ComponentModel])`` from a saved bundle."""
    if d.get("format_version") != 1:
        raise ConfigError(f"unsupported bundle version {d.get('format_version')!r}")
    comps = []
    for c in d["components"]:
        pre = Preprocessor.from_dict(c["preprocessor"])
        model = TrainedModel.from_dict(c["model"])
        digest = c["model"].get("preprocessor_digest")
        if digest is not None and digest != pre.digest():
            raise ConfigError("model was trained with a different preprocessor")
        comps.append(ComponentModel(model, pre, get_feature_config(c["feature_config"]),
                                    int(c["window_len"])))
    return d["task"], d.get("strategy"), comps


# ---------------------------------------------------------------------------
# The run
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    out_dir: Path
    metrics: dict
    files: list[Path]
    grid_tuple_counts: dict


def run_experiment(config: ExperimentConfig, jobs: int = 1, ctx: StageContext | None = None,
                   save_models: bool = True) -> RunResult:
    """Execute every stage and write reports plus a manifest into ``config.output_dir``."""
    ctx = ctx or StageContext()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: list[Path] = []

    ctx.enter("load")
    dataset = load_data(config)
    ctx.enter("split")
    train, test = split_dataset(dataset, config.train_fraction, config.split_seed)
    log.info("%d train / %d test journals", len(train), len(test))

    task = config.task
    grid_results: dict = {}
    summary = {"task": task, "n_train_journals": len(train), "n_test_journals": len(test),
               "models": {}, "baselines_only": None}

    for spec in config.models:
        ctx.enter(f"select:{spec.family}")
        selections = select_components(spec, task, train, config, grid_results, jobs)
        ctx.enter(f"train:{spec.family}")
        fitted = [fit_component_data(s, train, config.training, config.base_seed) for s in selections]
        if task == "citations":
            X, truth, pairs = citation_eval_set(test, selections[0])
        else:
            truncated, truth, pairs = citescore_eval_set(test, selections)

        seeded = spec.family in SEEDED_FAMILIES
        n_runs = config.runs if seeded else 1
        run_metrics, run_buckets, first_components = [], [], None
        for r in range(n_runs):
            seed = config.base_seed + r
            comps = [ComponentModel(train_component(fc, config.training, seed), fc.preprocessor,
                                    fc.selection.feature_config, fc.selection.window_len)
                     for fc in fitted]
            if first_components is None:
                first_components = comps
            if task == "citations":
                pre = comps[0].preprocessor
                preds = np.maximum(pre.invert_target(comps[0].model.predict_batch(pre.transform_inputs(X))), 0.0)
            else:
                rows = citescore_components(truncated, make_strategy(spec.strategy, comps))
                preds = np.array([row["predicted_citescore"] for row in rows])
            run_metrics.append(compute_metrics(preds, truth))
            run_buckets.append(bucketize_errors(preds, truth, config.bucket_edges))

        ctx.enter(f"report:{spec.family}")
        label = label_for(spec.config if spec.pinned else selections[0].config)
        if task == "citescore":
            label = f"{label}_{spec.strategy}"
        mean = mean_metrics(run_metrics)
        bases = baseline_metrics(pairs, truth, task, config.baselines, config.bucket_edges)
        reductions = {}
        for name, b in bases.items():
            try:
                reductions[name] = error_reduction(mean, b["metrics"]) if b["metrics"] else None
            except UndefinedMetricError:
                reductions[name] = None
        entry = {
            "task": task,
            "family": spec.family,
            "strategy": spec.strategy if task == "citescore" else None,
            "components": [
                {"feature_config": fc.selection.feature_config.name,
                 "window_len": fc.selection.window_len,
                 "model": config_to_dict(fc.selection.config),
                 "epochs": fc.epochs, "cv_mape": fc.selection.cv_mape}
                for fc in fitted
            ],
            "runs": n_runs,
            "n_test_samples": int(truth.size),
            "metrics": mean.to_dict(),
            "per_run": [m.to_dict() for m in run_metrics],
            "baselines": {n: {"metrics": _metric_dict(b["metrics"]), "n_skipped": b["n_skipped"]}
                          for n, b in bases.items()},
            "error_reduction": reductions,
        }
        summary["models"][label] = entry
        path = out / f"metrics_{task}_{label}.json"
        dump_json(entry, path)
        files.append(path)
        path = out / f"buckets_{task}_{label}.csv"
        write_buckets_csv(mean_bucket_reports(run_buckets), path)
        files.append(path)
        for name, b in bases.items():
            if b["buckets"] is not None:
                path = out / f"buckets_{task}_{label}_{name}.csv"
                write_buckets_csv(b["buckets"], path)
                files.append(path)
        if save_models:
            path = out / f"model_{task}_{label}.json"
            dump_json(model_bundle(task, spec.strategy if task == "citescore" else None,
                                   first_components), path)
            files.append(path)

    if not config.models:
        ctx.enter("baselines")
        summary["baselines_only"] = baselines_only_report(test, config)

    if grid_results:
        grid_doc = {f"{fam}:{tgt}": res.to_dict() for (fam, tgt), res in grid_results.items()}
        path = out / f"grid_{task}.json"
        dump_json(grid_doc, path)
        files.append(path)

    ctx.enter("write")
    path = out / "metrics.json"
    dump_json(summary, path)
    files.append(path)
    ctx.close()
    counts = {f"{fam}:{tgt}": res.n_tuples for (fam, tgt), res in grid_results.items()}
    write_manifest(out, config, files, ctx.timings, counts)
    return RunResult(out, summary, files, counts)


def baselines_only_report(test: Dataset, config: ExperimentConfig) -> dict:
    """Baselines on every test (journal, year) whose target is observable."""
    pairs, truth = [], []
    for h in test:
        for x in h.years[1:]:
            if config.task == "citations":
                v = feature_value(h, FeatureId.C_Y, x)
            else:
                try:
                    v = compute_citescore(h, x)
                except (KeyError, UndefinedCiteScoreError):
                    continue
            if np.isfinite(v):
                pairs.append((h, x))
                truth.append(v)
    truth = np.array(truth, dtype=float)
    if not pairs:
        raise InsufficientHistoryError("no test journal-years to score")
    bases = baseline_metrics(pairs, truth, config.task, config.baselines, config.bucket_edges)
    return {n: {"metrics": _metric_dict(b["metrics"]), "n_skipped": b["n_skipped"]}
            for n, b in bases.items()}


def write_manifest(out: Path, config: ExperimentConfig, files: Sequence[Path], timings: dict,
                   grid_counts: dict) -> Path:
    manifest = {
        "versions": {"journalcast": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "config": config.resolved(),
        "seeds": {"data": config.data.get("seed"), "split": config.split_seed,
                  "grid": None if config.grid is None else config.grid["seed"],
                  "runs": [config.base_seed + i for i in range(config.runs)]},
        "grid_tuple_counts": grid_counts,
        "timings_seconds": {k: round(v, 3) for k, v in timings.items()},
        "files": {p.name: sha256_file(p) for p in files},
    }
    path = out / "manifest.json"
    dump_json(manifest, path)
    return path
