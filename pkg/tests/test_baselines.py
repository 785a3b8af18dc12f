import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from journalcast.baselines import (
    BASELINES,
    baseline_predict,
    delta_predict,
    persistence_predict,
    weighted_delta_predict,
)
from journalcast.errors import ConfigError, InsufficientHistoryError

series = st.lists(st.floats(-1e4, 1e4, allow_nan=False), min_size=5, max_size=15)


class TestExamples:
    def test_persistence(self):
        assert persistence_predict([105]) == 105
        assert persistence_predict([1, 2, 3]) == 3

    def test_delta(self):
        assert delta_predict([100, 110]) == 120
        assert delta_predict([50, 50]) == 50
        assert delta_predict([110, 100]) == 90

    def test_weighted_delta(self):
        assert weighted_delta_predict([100] * 5) == 100
        assert weighted_delta_predict([0, 10, 20, 30, 40]) == pytest.approx(50, abs=1e-12)
        assert weighted_delta_predict([0, 0, 0, 0, 100]) == pytest.approx(140, abs=1e-12)

    def test_printed_variants(self):
        assert delta_predict([100, 110], printed=True) == 110 + 105
        v = [1.0, 2.0, 3.0, 4.0, 5.0]
        expected = 5 + 0.4 * (5 + 4) + 0.3 * (4 + 3) + 0.2 * (3 + 2) + 0.1 * (2 + 1)
        assert weighted_delta_predict(v, printed=True) == pytest.approx(expected)

    @pytest.mark.parametrize("fn,n", [(persistence_predict, 0), (delta_predict, 1),
                                      (weighted_delta_predict, 4)])
    def test_too_short(self, fn, n):
        with pytest.raises(InsufficientHistoryError):
            fn([1.0] * n)

    def test_dispatch(self):
        assert baseline_predict("delta", [1, 3]) == 5
        with pytest.raises(ConfigError):
            baseline_predict("ewma", [1, 2])
        assert set(BASELINES) == {"persistence", "delta", "weighted_delta"}


class TestProperties:
    @given(series)
    @settings(max_examples=200)
    def test_persistence_idempotent(self, s):
        p = persistence_predict(s)
        assert persistence_predict(s + [p]) == p

    @given(series, st.floats(-1e3, 1e3, allow_nan=False))
    @settings(max_examples=200)
    def test_translation_equivariance(self, s, c):
        shifted = [v + c for v in s]
        for name in BASELINES:
            assert baseline_predict(name, shifted) == pytest.approx(baseline_predict(name, s) + c,
                                                                     rel=1e-9, abs=1e-6)

    @given(series, st.floats(-50, 50, allow_nan=False))
    @settings(max_examples=200)
    def test_scale_equivariance(self, s, k):
        scaled = [k * v for v in s]
        for name in BASELINES:
            assert baseline_predict(name, scaled) == pytest.approx(k * baseline_predict(name, s),
                                                                    rel=1e-9, abs=1e-6)

    @given(st.floats(-1e6, 1e6, allow_nan=False), st.integers(5, 12))
    def test_constant_series(self, c, n):
        for name in BASELINES:
            assert baseline_predict(name, [c] * n) == c

    @given(st.integers(-1000, 1000), st.integers(-100, 100), st.integers(5, 12))
    def test_linear_series(self, a, b, n):
        s = [float(a + b * t) for t in range(n)]
        assert delta_predict(s) == a + b * n
        assert weighted_delta_predict(s) == pytest.approx(a + b * n, abs=1e-9)

    def test_against_direct_formula(self, rng):
        for _ in range(2000):
            s = rng.normal(100, 30, size=rng.integers(5, 12))
            v = s[::-1]
            wd = v[0] + 0.4 * (v[0] - v[1]) + 0.3 * (v[1] - v[2]) + 0.2 * (v[2] - v[3]) + 0.1 * (v[3] - v[4])
            assert weighted_delta_predict(s) == pytest.approx(wd, rel=1e-12)
            assert delta_predict(s) == pytest.approx(2 * v[0] - v[1], rel=1e-12)
            assert persistence_predict(s) == v[0]
