import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from journalcast.citescore import (
    ComponentModel,
    Direct,
    PerYear,
    SumWindow,
    citescore_components,
    component_feature_configs,
    known_terms,
    oracle_publications,
    oracle_strategy,
    predict_citescore,
    predict_citescore_many,
    predict_publications,
)
from journalcast.data_model import JournalHistory, compute_citescore
from journalcast.errors import ConfigError, DataError, InsufficientHistoryError
from journalcast.features import build_window, enumerate_samples, fit_preprocessor, get_feature_config, stack_samples
from journalcast.models import LinearRegressionConfig, train_arrays

from conftest import make_history, random_history


def const(v):
    return lambda h: v


def brute_known_numerator(history):
    x = history.last_year + 1
    total = 0
    for j in history.years:
        for i in range(x - 3, x + 1):
            if j <= x - 1 and i <= j:
                total += history.record(j).citations_to(i)
    return total


def truncated_corpus(corpus):
    """Histories cut one year short of their end, keyed to the completed originals."""
    cut, completed = [], {}
    for h in corpus:
        if len(h) >= 5:
            cut.append(h.truncate(h.last_year - 1))
            completed[h.journal_id] = h
    return cut, completed


class TestPublications:
    def test_last_year(self):
        h = make_history("J", 2010, [5, 7, 210])
        assert predict_publications(h) == 210
        assert isinstance(predict_publications(h), int)

    def test_single_year(self):
        assert predict_publications(make_history("J", 2010, [9])) == 9

    def test_empty(self):
        with pytest.raises(InsufficientHistoryError):
            predict_publications(JournalHistory("J", ()))


class TestAssembly:
    def test_hand_example(self):
        # Known numerator 100 plus 20 predicted over 10 * 4 publications.
        h = make_history("J", 2016, [10, 10, 10, 10])
        assert known_terms(h) == (100, 30)
        assert predict_citescore(h, SumWindow(const(20.0))) == 3.0

    def test_known_numerator_120(self):
        h = make_history("J", 2016, [10, 10, 10, 10], cites=lambda j, i: 40 if j == i else 0)
        assert known_terms(h)[0] == 120
        assert predict_citescore(h, SumWindow(const(0.0))) == 3.0

    def test_per_year_equals_sum(self, rng):
        for _ in range(100):
            h = random_history(rng, n_years=int(rng.integers(3, 10)))
            parts = rng.uniform(0, 300, 4)
            a = predict_citescore(h, PerYear(tuple(const(v) for v in parts)))
            b = predict_citescore(h, SumWindow(const(float(parts.sum()))))
            assert a == pytest.approx(b, rel=1e-13)

    def test_components_record(self):
        h = make_history("J", 2016, [10, 10, 10, 12])
        (row,) = citescore_components([h], PerYear((const(1.0), const(2.0), const(3.0), const(4.0))))
        assert row["target_year"] == 2020 and row["strategy"] == "per_year"
        assert row["predicted_citations"] == 10.0
        assert row["components"] == {"c_x_x": 1.0, "c_x_x1": 2.0, "c_x_x2": 3.0, "c_x_x3": 4.0,
                                     "p_x": 12, "known_numerator": 100}
        assert row["predicted_citescore"] == pytest.approx(110 / 44)

    def test_direct(self):
        h = make_history("J", 2016, [10, 10, 10, 10])
        assert predict_citescore(h, Direct(const(4.5))) == 4.5
        assert predict_citescore(h, Direct(const(-1.0))) == 0.0

    def test_clamped_at_zero(self):
        h = make_history("J", 2016, [10, 10, 10, 10])
        assert predict_citescore(h, SumWindow(const(-1e6))) == 0.0

    def test_known_numerator_brute_force(self, rng):
        for _ in range(300):
            h = random_history(rng, n_years=int(rng.integers(3, 12)))
            assert known_terms(h)[0] == brute_known_numerator(h)

    @given(st.integers(0, 2**32 - 1), st.integers(0, 3), st.floats(1e-3, 1e3))
    @settings(max_examples=100)
    def test_monotone(self, seed, k, bump):
        rng = np.random.default_rng(seed)
        h = random_history(rng, n_years=int(rng.integers(3, 10)))
        parts = rng.uniform(0, 300, 4)
        up = parts.copy()
        up[k] += bump
        lo = predict_citescore(h, PerYear(tuple(const(v) for v in parts)))
        hi = predict_citescore(h, PerYear(tuple(const(v) for v in up)))
        assert hi > lo

    def test_per_year_arity(self):
        with pytest.raises(ConfigError):
            PerYear((const(1.0),) * 3)

    def test_short_history(self):
        h = make_history("J", 2016, [10, 10])
        with pytest.raises(InsufficientHistoryError):
            predict_citescore(h, SumWindow(const(1.0)))

    def test_empty_input(self):
        assert citescore_components([], SumWindow(const(1.0))) == []


class TestPlugIn:
    @pytest.mark.parametrize("kind", ["sum", "per_year"])
    def test_oracle_reproduces_citescore(self, small_corpus, kind):
        cut, completed = truncated_corpus(small_corpus)
        assert len(cut) > 50
        preds = predict_citescore_many(cut, oracle_strategy(kind, completed), oracle_publications(completed))
        exact = [compute_citescore(completed[h.journal_id], h.last_year + 1) for h in cut]
        np.testing.assert_allclose(preds, exact, rtol=1e-9, atol=0)

    def test_oracle_with_persisted_publications(self, small_corpus):
        cut, completed = truncated_corpus(small_corpus)
        preds = predict_citescore_many(cut, oracle_strategy("sum", completed))
        for h, p in zip(cut, preds):
            full = completed[h.journal_id]
            x = h.last_year + 1
            numer = compute_citescore(full, x) * sum(full.record(y).publications for y in range(x - 3, x + 1))
            denom = sum(full.record(y).publications for y in range(x - 3, x)) + full.record(x - 1).publications
            assert p == pytest.approx(numer / denom, rel=1e-9)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            oracle_strategy("direct", {})


def long_enough(corpus, component):
    """Histories whose final window has every input present."""
    out = []
    for h in corpus:
        try:
            build_window(h, component.feature_config, component.window_len)
        except DataError:
            continue
        out.append(h)
    assert len(out) > 20
    return out


class TestComponentModel:
    @pytest.fixture
    def component(self, small_corpus):
        cfg = get_feature_config("CiteScore Sum Basic")
        samples = enumerate_samples(small_corpus, cfg, 3)
        pre = fit_preprocessor(samples, cfg)
        X, y = stack_samples(samples)
        model = train_arrays(LinearRegressionConfig(), pre.transform_inputs(X), pre.transform_target(y))
        return ComponentModel(model, pre, cfg, 3)

    def test_many_matches_single(self, component, small_corpus):
        hs = long_enough(small_corpus, component)[:10]
        np.testing.assert_allclose(component.predict_many(hs), [component(h) for h in hs], rtol=1e-12)

    def test_nonnegative(self, component, small_corpus):
        hs = long_enough(small_corpus, component)
        assert np.all(component.predict_many(hs) >= 0)

    def test_negative_output_clamped(self, component, small_corpus):
        class Low:
            def predict_batch(self, X):
                return np.full(len(X), -1e3)

        low = ComponentModel(Low(), component.preprocessor, component.feature_config, 3)
        h = long_enough(small_corpus, component)[0]
        assert component.preprocessor.invert_target(np.array([-1e3]))[0] < 0
        assert low(h) == 0.0

    def test_short_history(self, component):
        with pytest.raises(InsufficientHistoryError):
            component(make_history("J", 2016, [10, 10]))


class TestFeatureConfigs:
    def test_per_year_detail(self):
        names = [c.name for c in component_feature_configs("per_year", "Basic")]
        assert names == ["CiteScore Year 4", "CiteScore Year 3", "CiteScore Year 2 Basic",
                         "CiteScore Year 1 Basic"]

    def test_sum_and_direct(self):
        assert component_feature_configs("sum", "Detailed")[0].name == "CiteScore Sum Detailed"
        assert component_feature_configs("direct")[0].name == "CiteScore Direct"

    def test_unknown(self):
        with pytest.raises(ConfigError):
            component_feature_configs("mean")
