"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .citescore import citescore_components
from .data_model import Dataset, SynthConfig, dump_ndjson, generate_synthetic, iter_ndjson, load_ndjson, validate_history
from .errors import ConfigError, DataError, DivergenceError, InsufficientHistoryError
from .evaluation import compute_metrics, grid_size, task_grid
from .experiment import (
    ExperimentConfig,
    StageContext,
    citation_eval_set,
    citescore_eval_set,
    dump_json,
    fit_component_data,
    label_for,
    load_bundle,
    load_data,
    make_strategy,
    model_bundle,
    run_experiment,
    select_components,
    train_component,
    write_manifest,
)
from .citescore import ComponentModel
from .features import split_dataset

log = logging.getLogger("journalcast")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGENCE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_jobs() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    histories, violations = [], []
    for _, h in iter_ndjson(args.path):
        histories.append(h)
        violations.extend(validate_history(h))
    bad_ids = sorted({v.journal_id for v in violations})
    summary = {"journals": len(histories), "records": sum(len(h) for h in histories),
               "violations": len(violations), "journals_with_violations": len(bad_ids)}
    if violations and not args.allow_drop:
        for v in violations[:50]:
            print(f"{v.journal_id} {v.year}: {v.kind}: {v.message}", file=sys.stderr)
        _emit(summary)
        raise DataError(f"{len(violations)} schema violations in {len(bad_ids)} journals "
                        "(use --allow-drop to drop them)")
    kept = [h for h in histories if h.journal_id not in set(bad_ids)]
    summary["dropped"] = len(histories) - len(kept)
    summary["journals_kept"] = len(kept)
    if args.out:
        dump_ndjson(Dataset(tuple(kept)), args.out)
    _emit(summary)
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = {}
    if args.config:
        cfg = json.loads(Path(args.config).read_text())
        cfg = cfg.get("data", {}).get("synth", cfg)
    if args.n_journals is not None:
        cfg["n_journals"] = args.n_journals
    if args.seed is None:
        raise ConfigError("synth needs --seed")
    ds = generate_synthetic(SynthConfig.from_dict(cfg), args.seed)
    dump_ndjson(ds, args.out)
    _emit({"journals": len(ds), "records": sum(len(h) for h in ds), "out": str(args.out)})
    return EXIT_OK


def _load_config(args) -> ExperimentConfig:
    return ExperimentConfig.load(args.config, seed=args.seed, out_dir=args.out_dir)


def cmd_grid_search(args) -> int:
    config = _load_config(args)
    if config.grid is None:
        raise ConfigError("config has no 'grid' section")
    families = config.grid.get("families", [])
    if args.count_only:
        _emit({"task": config.task,
               "counts": {f: len(task_grid(config.task, [f])) for f in families},
               "analytic": {f: grid_size(config.task, f) for f in families}})
        return EXIT_OK
    ctx = args.ctx = StageContext()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx.enter("load")
    train, _ = split_dataset(load_data(config), config.train_fraction, config.split_seed)
    results: dict = {}
    best = {}
    for spec in config.models:
        if spec.pinned:
            continue
        ctx.enter(f"grid:{spec.family}")
        sels = select_components(spec, config.task, train, config, results, args.jobs)
        best[spec.family] = [{"feature_config": s.feature_config.name, "window_len": s.window_len,
                              "model": label_for(s.config), "epochs": s.epochs, "cv_mape": s.cv_mape}
                             for s in sels]
    path = out / f"grid_{config.task}.json"
    dump_json({f"{fam}:{tgt}": r.to_dict() for (fam, tgt), r in results.items()}, path)
    ctx.close()
    counts = {f"{fam}:{tgt}": r.n_tuples for (fam, tgt), r in results.items()}
    write_manifest(out, config, [path], ctx.timings, counts)
    _emit({"tuple_counts": counts, "best": best})
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_config(args)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = args.ctx = StageContext()
    ctx.enter("load")
    train, _ = split_dataset(load_data(config), config.train_fraction, config.split_seed)
    results: dict = {}
    files = []
    for spec in config.models:
        ctx.enter(f"train:{spec.family}")
        sels = select_components(spec, config.task, train, config, results, args.jobs)
        fitted = [fit_component_data(s, train, config.training, config.base_seed) for s in sels]
        comps = [ComponentModel(train_component(fc, config.training, config.base_seed), fc.preprocessor,
                                fc.selection.feature_config, fc.selection.window_len) for fc in fitted]
        label = label_for(sels[0].config) + (f"_{spec.strategy}" if config.task == "citescore" else "")
        path = out / f"model_{config.task}_{label}.json"
        dump_json(model_bundle(config.task, spec.strategy if config.task == "citescore" else None, comps), path)
        files.append(path)
        print(path)
    ctx.close()
    write_manifest(out, config, files, ctx.timings, {})
    return EXIT_OK


def _bundle_predictions(bundle_path, dataset):
    task, strategy, comps = load_bundle(json.loads(Path(bundle_path).read_text()))
    if task == "citations":
        X, truth, pairs = citation_eval_set(dataset, comps[0])
        pre = comps[0].preprocessor
        preds = np.maximum(pre.invert_target(comps[0].model.predict_batch(pre.transform_inputs(X))), 0.0)
    else:
        truncated, truth, pairs = citescore_eval_set(dataset, comps)
        rows = citescore_components(truncated, make_strategy(strategy, comps))
        preds = np.array([r["predicted_citescore"] for r in rows])
    return task, preds, truth, pairs


def cmd_evaluate(args) -> int:
    dataset = load_ndjson(args.data)
    task, preds, truth, _ = _bundle_predictions(args.model, dataset)
    result = {"task": task, "model": str(args.model), "n_samples": int(truth.size),
              "metrics": compute_metrics(preds, truth).to_dict()}
    if args.out:
        dump_json(result, Path(args.out))
    _emit(result)
    return EXIT_OK


def cmd_predict(args) -> int:
    task, strategy, comps = load_bundle(json.loads(Path(args.model).read_text()))
    dataset = load_ndjson(args.data)
    rows, skipped = [], []
    for h in dataset:
        try:
            if task == "citations":
                rows.append({"journal_id": h.journal_id, "target_year": h.last_year + 1,
                             "predicted_citations": comps[0](h), "strategy": None,
                             "components": {"p_x": h.record(h.last_year).publications}})
            else:
                rows.extend(citescore_components([h], make_strategy(strategy, comps)))
        except InsufficientHistoryError as exc:
            skipped.append(h.journal_id)
            log.info("skipping %s: %s", h.journal_id, exc)
    if skipped:
        print(f"skipped {len(skipped)} journals with incomplete final windows", file=sys.stderr)
    sink = open(args.out, "w") if args.out else sys.stdout
    try:
        for row in rows:
            sink.write(json.dumps(row, sort_keys=True) + "\n")
    finally:
        if args.out:
            sink.close()
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.out_dir)
    path = out / "metrics.json"
    if not path.exists():
        raise ConfigError(f"no metrics.json in {out}")
    summary = json.loads(path.read_text())
    rows = []
    for label, entry in summary.get("models", {}).items():
        rows.append({"name": label, **{k: entry["metrics"][k] for k in ("mae", "medae", "mape", "medape", "r2")}})
        for name, b in entry["baselines"].items():
            if b["metrics"]:
                rows.append({"name": f"{label}/{name}",
                             **{k: b["metrics"][k] for k in ("mae", "medae", "mape", "medape", "r2")}})
    for name, b in (summary.get("baselines_only") or {}).items():
        if b["metrics"]:
            rows.append({"name": name, **{k: b["metrics"][k] for k in ("mae", "medae", "mape", "medape", "r2")}})
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["name", "mae", "medae", "mape", "medape", "r2"])
        w.writeheader()
        w.writerows(rows)
    fmt = "{:<60} {:>10} {:>10} {:>8} {:>8} {:>7}"
    print(fmt.format("name", "MAE", "MedAE", "MAPE", "MedAPE", "R2"))
    for r in rows:
        cells = ["-" if r[k] is None else f"{r[k]:.3f}" for k in ("mae", "medae", "mape", "medape", "r2")]
        print(fmt.format(r["name"][:60], *cells))
    return EXIT_OK


def cmd_run(args) -> int:
    config = _load_config(args)
    args.ctx = StageContext()
    result = run_experiment(config, jobs=args.jobs, ctx=args.ctx)
    _emit({"out_dir": str(result.out_dir), "files": [p.name for p in result.files],
           "grid_tuple_counts": result.grid_tuple_counts})
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="journalcast", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="load and validate an NDJSON file")
    s.add_argument("path")
    s.add_argument("--allow-drop", action="store_true", help="drop journals with violations")
    s.add_argument("--out", help="write the accepted journals here")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--config", help="JSON generator parameters (or an experiment config)")
    s.add_argument("--seed", type=int)
    s.add_argument("--n-journals", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    def experiment_flags(s):
        s.add_argument("--config", required=True)
        s.add_argument("--seed", type=int, help="fills in any seed missing from the config")
        s.add_argument("--jobs", type=int, default=_default_jobs())
        s.add_argument("--out-dir")

    s = sub.add_parser("grid-search", help="cross-validated grid search")
    experiment_flags(s)
    s.add_argument("--count-only", action="store_true", help="print tuple counts without training")
    s.set_defaults(func=cmd_grid_search)

    s = sub.add_parser("train", help="select and train models, saving bundles")
    experiment_flags(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("run", help="full experiment: select, train, evaluate, report")
    experiment_flags(s)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("evaluate", help="score a saved model bundle on a dataset")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("predict", help="next-year predictions for every journal")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("report", help="tabulate the metrics of a finished run")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except BrokenPipeError:
        # Reader went away (e.g. piped into head); silence the flush at exit.
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    except DivergenceError as exc:
        code, kind = EXIT_DIVERGENCE, "training diverged"
        err = exc
    except (DataError, FileNotFoundError) as exc:
        code, kind = EXIT_DATA, "data"
        err = exc
    except ConfigError as exc:
        code, kind = EXIT_USAGE, "config"
        err = exc
    ctx = getattr(args, "ctx", None)
    where = f" [stage {ctx.stage}]" if ctx is not None else ""
    print(f"error{where}: {kind}: {err}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
