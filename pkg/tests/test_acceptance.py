"""Acceptance criteria 1-8.

Each test records PASS or FAIL under its criterion number; the lines are
printed in the terminal summary by ``conftest.py``.
"""

import functools
import json
import time

import numpy as np
import pytest

from gradcheck import random_instance, relative_errors
from conftest import make_history, random_history
from journalcast.baselines import delta_predict, persistence_predict, weighted_delta_predict
from journalcast.citescore import oracle_publications, oracle_strategy, predict_citescore_many
from journalcast.data_model import SynthConfig, compute_citescore, generate_synthetic
from journalcast.evaluation import compute_metrics, error_reduction, grid_size, kfold_split, task_grid
from journalcast.experiment import ExperimentConfig, run_experiment
from journalcast.features import FEATURE_CONFIGS, PowerTransform, journal_samples, split_dataset

RESULTS: dict[int, list[bool]] = {}


def criterion(number):
    """Record the outcome of a test under an acceptance criterion."""
    def wrap(fn):
        @functools.wraps(fn)
        def inner(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                RESULTS.setdefault(number, []).append(False)
                raise
            RESULTS.setdefault(number, []).append(True)
        return inner
    return wrap


def within(seconds, start):
    elapsed = time.perf_counter() - start
    assert elapsed < seconds, f"took {elapsed:.1f}s, limit {seconds}s"


# 1 -------------------------------------------------------------------------


def double_loop_citescore(h, y):
    numer = 0
    denom = 0
    for i in range(y - 3, y + 1):
        denom += h.record(i).publications
        for j in range(i, y + 1):
            numer += h.record(j).citations_to(i)
    return numer / denom


@criterion(1)
def test_c1_citescore_formula():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    checked = 0
    for n in range(1000):
        h = random_history(rng, f"J{n}", n_years=int(rng.integers(4, 12)))
        for y in h.years[3:]:
            want = double_loop_citescore(h, y)
            assert compute_citescore(h, y) == pytest.approx(want, rel=1e-12, abs=0)
            checked += 1
    assert checked > 3000
    h = make_history("J", 2016, [10, 10, 10, 10], cites=lambda j, i: 20 if j == 2019 else 0)
    assert compute_citescore(h, 2019) == 2.0
    within(5, start)


# 2 -------------------------------------------------------------------------


@criterion(2)
def test_c2_baselines():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    for _ in range(10_000):
        s = rng.lognormal(5, 1, size=int(rng.integers(5, 16)))
        v1, v2, v3, v4, v5 = s[-1], s[-2], s[-3], s[-4], s[-5]
        assert persistence_predict(s) == v1
        assert delta_predict(s) == pytest.approx(v1 + (v1 - v2), rel=1e-12)
        wd = v1 + 0.4 * (v1 - v2) + 0.3 * (v2 - v3) + 0.2 * (v3 - v4) + 0.1 * (v4 - v5)
        assert weighted_delta_predict(s) == pytest.approx(wd, rel=1e-12, abs=1e-9)
    for _ in range(500):
        c = float(rng.integers(-10**6, 10**6))
        n = int(rng.integers(5, 15))
        for fn in (persistence_predict, delta_predict, weighted_delta_predict):
            assert fn([c] * n) == c
        a, b = int(rng.integers(-1000, 1000)), int(rng.integers(-100, 100))
        line = [float(a + b * t) for t in range(n)]
        assert delta_predict(line) == a + b * n
        assert weighted_delta_predict(line) == a + b * n
    within(5, start)


# 3 -------------------------------------------------------------------------


@criterion(3)
def test_c3_gradient_checks():
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = {}
    for family in ("mlp", "rnn", "lstm"):
        errs = []
        for _ in range(50):
            params, X, y = random_instance(family, rng)
            errs.extend(relative_errors(family, params, X, y, step=1e-5).values())
        worst[family] = max(errs)
    assert all(v < 1e-4 for v in worst.values()), worst
    within(60, start)


# 4 -------------------------------------------------------------------------

CITATION_GRID_SIZES = {"linear_regression": 12, "decision_tree": 180, "random_forest": 540, "knn": 48,
          "mlp": 108, "rnn": 72, "lstm": 72}
CITESCORE_GRID_SIZES = {"linear_regression": 54, "decision_tree": 810, "random_forest": 2430, "knn": 216,
          "mlp": 486, "rnn": 324, "lstm": 324}


@criterion(4)
def test_c4_grid_counts():
    for task, table in (("citations", CITATION_GRID_SIZES), ("citescore", CITESCORE_GRID_SIZES)):
        for family, n in table.items():
            tuples = task_grid(task, [family])
            assert len(tuples) == n == grid_size(task, family)
            assert len({t.label for t in tuples}) == n


# 5 -------------------------------------------------------------------------


@criterion(5)
def test_c5_error_reduction():
    # LSTM row against the persistence row of each results table.
    cit = error_reduction({"mae": 246.787, "mape": 9.51}, {"mae": 426.141, "mape": 12.53})
    cs = error_reduction({"mae": 0.215, "mape": 9.04}, {"mae": 0.279, "mape": 11.07})
    assert cit["mae_reduction_pct"] == pytest.approx(42.1, abs=0.05)
    assert cit["mape_reduction_pct"] == pytest.approx(24.1, abs=0.05)
    assert cs["mae_reduction_pct"] == pytest.approx(22.9, abs=0.05)
    assert cs["mape_reduction_pct"] == pytest.approx(18.3, abs=0.05)


# 6 -------------------------------------------------------------------------

E2E_CONFIG = {
    "task": "citations",
    "data": {"synth": {"n_journals": 2000, "year_min": 2000, "year_max": 2020}, "seed": 2024},
    "split": {"train_fraction": 0.9, "seed": 11},
    "models": [
        {"config": {"family": "linear_regression"}, "feature_config": "Citations Full", "window_len": 10},
        {"config": {"family": "lstm", "n_layers": 1, "layer_size": 25},
         "feature_config": "Citations Full", "window_len": 10, "epochs": 50},
    ],
    "evaluation": {"runs": 3, "base_seed": 0},
}


@pytest.fixture(scope="module")
def e2e(tmp_path_factory):
    root = tmp_path_factory.mktemp("e2e")
    start = time.perf_counter()
    runs = [run_experiment(ExperimentConfig.from_dict(E2E_CONFIG, out_dir=str(root / name)), jobs=1)
            for name in ("a", "b")]
    return runs, time.perf_counter() - start


def model_entry(run, family):
    summary = json.loads((run.out_dir / "metrics.json").read_text())
    (entry,) = [v for k, v in summary["models"].items() if k.startswith(family)]
    return entry


@criterion(6)
def test_c6a_lstm_beats_persistence(e2e):
    entry = model_entry(e2e[0][0], "lstm")
    assert entry["metrics"]["mape"] < entry["baselines"]["persistence"]["metrics"]["mape"]


@criterion(6)
def test_c6b_linear_beats_persistence(e2e):
    entry = model_entry(e2e[0][0], "linear_regression")
    assert entry["metrics"]["mape"] < entry["baselines"]["persistence"]["metrics"]["mape"]


@criterion(6)
def test_c6c_plug_in_consistency():
    data = generate_synthetic(SynthConfig(**E2E_CONFIG["data"]["synth"]), E2E_CONFIG["data"]["seed"])
    _, test = split_dataset(data, 0.9, 11)
    cut, completed = [], {}
    for h in test:
        if len(h) >= 5:
            cut.append(h.truncate(h.last_year - 1))
            completed[h.journal_id] = h
    assert len(cut) > 150
    preds = predict_citescore_many(cut, oracle_strategy("sum", completed), oracle_publications(completed))
    exact = np.array([compute_citescore(completed[h.journal_id], h.last_year + 1) for h in cut])
    np.testing.assert_allclose(preds, exact, rtol=1e-9, atol=0)


@criterion(6)
def test_c6d_byte_identical_reports(e2e):
    (a, b), elapsed = e2e
    assert (a.out_dir / "metrics.json").read_bytes() == (b.out_dir / "metrics.json").read_bytes()
    for p in a.out_dir.glob("metrics_*.json"):
        assert p.read_bytes() == (b.out_dir / p.name).read_bytes()
    assert elapsed < 15 * 60


# 7 -------------------------------------------------------------------------


def moment_skew(x):
    d = x - x.mean()
    return float(np.mean(d**3) / np.mean(d**2) ** 1.5)


@criterion(7)
def test_c7_split_disjoint(small_corpus):
    train, test = split_dataset(small_corpus, 0.9, seed=5)
    assert not set(train.journal_ids) & set(test.journal_ids)
    assert len(train) + len(test) == len(small_corpus)
    assert len(test) == 12


@criterion(7)
def test_c7_kfold_sizes():
    rng = np.random.default_rng(7)
    for _ in range(200):
        k = int(rng.integers(2, 11))
        n = int(rng.integers(k, 500))
        sizes = [len(f) for f in kfold_split(range(n), k, seed=int(rng.integers(1000)))]
        assert sum(sizes) == n and max(sizes) - min(sizes) <= 1


@criterion(7)
def test_c7_sample_counts():
    for n_years in range(1, 16):
        h = make_history("J", 2000, [10 + t for t in range(n_years)])
        for cfg in FEATURE_CONFIGS.values():
            for window in (3, 4, 5, 6, 8, 10):
                expected = max(0, n_years - cfg.required_span(window) + 1)
                assert len(journal_samples(h, cfg, window)) == expected


@criterion(7)
def test_c7_power_transform():
    rng = np.random.default_rng(17)
    for _ in range(50):
        x = rng.lognormal(rng.uniform(0, 6), rng.uniform(0.3, 2), 2000)
        t = PowerTransform.fit(x)
        assert np.max(np.abs(t.inverse(t.forward(x)) - x) / np.maximum(np.abs(x), 1.0)) < 1e-9
        assert abs(moment_skew(t.forward(x))) <= 0.5 * abs(moment_skew(x))


# 8 -------------------------------------------------------------------------


@criterion(8)
def test_c8_metrics():
    m = compute_metrics([110, 180], [100, 200])
    assert (m.mae, m.mape, m.r2) == (15.0, 10.0, 0.9)
    y = np.array([3.0, 7.0, 11.0, 20.0])
    perfect = compute_metrics(y, y)
    assert (perfect.mae, perfect.mape, perfect.r2) == (0.0, 0.0, 1.0)
    assert compute_metrics(np.full(4, y.mean()), y).r2 == 0.0
