import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from journalcast.data_model import (
    AnnualRecord,
    Dataset,
    JournalHistory,
    SynthConfig,
    citation_window_sum,
    citescore_numerator,
    compute_citescore,
    dump_ndjson,
    generate_synthetic,
    iter_ndjson,
    load_ndjson,
    total_citations,
    validate_history,
)
from journalcast.errors import ConfigError, DataError, MissingYearError, UndefinedCiteScoreError

from conftest import make_history, random_history


def citescore_oracle(history, year):
    """Double loop written against the raw record dicts."""
    recs = {r.year: r for r in history.records}
    num = 0
    den = 0
    for i in range(year - 3, year + 1):
        den += recs[i].publications
        for j in range(i, year + 1):
            num += recs[j].citations_by_pub_year.get(i, 0)
    return num / den


class TestAnnualRecord:
    def test_total_is_sum_of_entries(self):
        rec = AnnualRecord(2020, 5, {2020: 5, 2019: 7})
        assert rec.total_citations == 12
        assert AnnualRecord(2020, 5, {}).total_citations == 0

    def test_round_trip(self):
        rec = AnnualRecord(2011, 42, {2011: 3, 2009: 8}, 12.5, None, 0.7)
        assert AnnualRecord.from_dict(json.loads(json.dumps(rec.to_dict()))) == rec


class TestHistory:
    def test_missing_year(self):
        h = make_history("A", 2000, [10, 10, 10])
        with pytest.raises(MissingYearError):
            h.record(1999)
        with pytest.raises(KeyError):
            total_citations(h, 2005)

    def test_total_citations_matches_matrix_row(self, small_corpus):
        h = next(j for j in small_corpus if 2015 in j)
        raw = h.to_dict()["records"]
        row = next(r for r in raw if r["year"] == 2015)["citations_by_pub_year"]
        assert total_citations(h, 2015) == sum(row.values())

    def test_truncate(self):
        h = make_history("A", 2000, [1, 2, 3, 4])
        assert h.truncate(2001).years == [2000, 2001]

    def test_dataset_rejects_duplicates(self):
        h = make_history("A", 2000, [1, 2])
        with pytest.raises(DataError):
            Dataset((h, h))


class TestWindowSums:
    def test_window_one_is_same_year(self):
        h = make_history("A", 2000, [5] * 6)
        assert citation_window_sum(h, 2005, 1) == h.record(2005).citations_to(2005)

    def test_hand_example(self):
        c = {2020: 1, 2019: 2, 2018: 3, 2017: 4, 2016: 9}
        h = make_history("A", 2016, [1] * 5, lambda j, i: c[i] if j == 2020 else 0)
        assert citation_window_sum(h, 2020, 4) == 10

    def test_full_span_drops_only_older_years(self, rng):
        h = random_history(rng, n_years=9)
        x = h.last_year
        w = len(h)
        rec = h.record(x)
        older = sum(c for y, c in rec.citations_by_pub_year.items() if y < x - w + 1)
        assert citation_window_sum(h, x, w) == rec.total_citations - older

    def test_insufficient_history(self):
        h = make_history("A", 2000, [5, 5])
        with pytest.raises(MissingYearError):
            citation_window_sum(h, 2001, 4)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 6))
    @settings(max_examples=50, deadline=None)
    def test_total_dominates_window(self, seed, w):
        h = random_history(np.random.default_rng(seed), n_years=8)
        assert total_citations(h, h.last_year) >= citation_window_sum(h, h.last_year, w)


class TestCiteScore:
    def test_eighty_over_forty(self):
        # 80 in-window citations over four years of 10 publications
        h = make_history("A", 2000, [10] * 4, lambda j, i: 20 if j == 2003 else 0)
        assert compute_citescore(h, 2003) == 2.0

    def test_zero_citations(self):
        h = make_history("A", 2000, [10] * 4, lambda j, i: 0)
        assert compute_citescore(h, 2003) == 0.0

    def test_zero_publications(self):
        h = make_history("A", 2000, [0] * 4)
        with pytest.raises(UndefinedCiteScoreError):
            compute_citescore(h, 2003)

    def test_missing_year(self):
        h = make_history("A", 2001, [10] * 3)
        with pytest.raises(MissingYearError):
            compute_citescore(h, 2003)

    def test_matches_double_loop(self, rng):
        for _ in range(200):
            h = random_history(rng)
            for year in range(h.first_year + 3, h.last_year + 1):
                np.testing.assert_allclose(compute_citescore(h, year), citescore_oracle(h, year),
                                           rtol=1e-12)

    def test_scale_equivariance(self, rng):
        h = random_history(rng, n_years=6)
        doubled = JournalHistory("B", tuple(
            AnnualRecord(r.year, r.publications, {k: 2 * v for k, v in r.citations_by_pub_year.items()})
            for r in h.records))
        np.testing.assert_allclose(compute_citescore(doubled, h.last_year),
                                   2 * compute_citescore(h, h.last_year), rtol=1e-12)

    def test_ignores_out_of_window_citations(self, rng):
        h = random_history(rng, n_years=8)
        x = h.last_year
        bumped = JournalHistory("B", tuple(
            AnnualRecord(r.year, r.publications,
                         {**r.citations_by_pub_year, h.first_year: 10_000 + r.citations_to(h.first_year)})
            for r in h.records))
        assert compute_citescore(bumped, x) == compute_citescore(h, x)

    def test_partial_numerator_is_known_part(self, rng):
        h = random_history(rng, n_years=8)
        x = h.last_year
        brute = sum(h.record(j).citations_to(i) for i in range(x - 3, x + 1) for j in range(i, x))
        assert citescore_numerator(h, x, through=x - 1) == brute


class TestValidation:
    def test_well_formed(self):
        assert validate_history(make_history("A", 2000, [3, 4, 5])) == []

    def test_citation_from_the_future(self):
        h = JournalHistory("A", (AnnualRecord(2019, 4, {2020: 3}),))
        (v,) = validate_history(h)
        assert v.kind == "citation_from_before_publication"
        assert "citation from before publication" in v.message

    def test_gap(self):
        h = JournalHistory("A", (AnnualRecord(2016, 1), AnnualRecord(2018, 1)))
        assert [v.kind for v in validate_history(h)] == ["gap"]

    @pytest.mark.parametrize("rec,kind", [
        (AnnualRecord(2000, -1), "negative_publications"),
        (AnnualRecord(2000, 1, {2000: -2}), "negative_citations"),
        (AnnualRecord(2000, 1, {}, 101.0), "pct_out_of_range"),
        (AnnualRecord(2000, 1, {}, 5.0, -0.1), "negative_snip"),
        (AnnualRecord(2000, 0), "inactive_final_year"),
    ])
    def test_violation_kinds(self, rec, kind):
        assert kind in [v.kind for v in validate_history(JournalHistory("A", (rec,)))]


class TestNdjson:
    def test_round_trip(self, tmp_path, small_corpus):
        path = tmp_path / "d.ndjson"
        dump_ndjson(small_corpus, path)
        loaded = load_ndjson(path)
        assert loaded.journal_ids == small_corpus.journal_ids
        assert loaded.get("J0003") == small_corpus.get("J0003")

    def test_empty_file(self, tmp_path):
        path = tmp_path / "e.ndjson"
        path.write_text("")
        assert len(load_ndjson(path)) == 0

    def test_malformed_line_number(self, tmp_path):
        path = tmp_path / "bad.ndjson"
        good = json.dumps(make_history("A", 2000, [1]).to_dict())
        path.write_text(good + "\n{not json\n")
        with pytest.raises(DataError, match="line 2"):
            list(iter_ndjson(path))


class TestSynthetic:
    def test_empty(self):
        assert len(generate_synthetic(SynthConfig(n_journals=0), seed=0)) == 0

    def test_deterministic(self):
        a = generate_synthetic(SynthConfig(n_journals=20), seed=3)
        b = generate_synthetic(SynthConfig(n_journals=20), seed=3)
        assert [h.to_dict() for h in a] == [h.to_dict() for h in b]

    def test_all_valid(self, small_corpus):
        assert all(validate_history(h) == [] for h in small_corpus)

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            SynthConfig(n_journals=-1)
        with pytest.raises(ConfigError):
            SynthConfig.from_dict({"n_journalz": 3})

    @pytest.mark.slow
    def test_calibration(self):
        ds = generate_synthetic(SynthConfig(n_journals=5000), seed=11)
        pubs = [r.publications for h in ds for r in h.records]
        cites = [r.total_citations for h in ds for r in h.records]
        assert abs(np.mean(pubs) / 108 - 1) < 0.3
        assert abs(np.mean(cites) / 2880 - 1) < 0.3

    def test_citations_trend_upward(self, small_corpus):
        by_year = {}
        for h in small_corpus:
            for r in h.records:
                by_year.setdefault(r.year, []).append(r.total_citations / max(r.publications, 1))
        first, last = min(by_year), max(by_year)
        assert np.mean(by_year[last]) > np.mean(by_year[first])
