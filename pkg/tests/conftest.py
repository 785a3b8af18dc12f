import sys
import numpy as np
import pytest

from journalcast.data_model import AnnualRecord, JournalHistory, SynthConfig, generate_synthetic


def make_history(journal_id, start, pubs, cites=None, snip=1.0, sjr=0.5, pct=20.0):
    """History from a list of publication counts and an optional citation rule.

    ``cites`` maps ``(citing_year, pub_year)`` to a count; by default every
    publication year gets ``10 * (citing - pub + 1)`` citations.
    """
    records = []
    for n, p in enumerate(pubs):
        year = start + n
        by_year = {}
        for pub_year in range(start, year + 1):
            c = cites(year, pub_year) if cites else 10 * (year - pub_year + 1)
            if c:
                by_year[pub_year] = int(c)
        records.append(AnnualRecord(year, int(p), by_year, pct, snip, sjr))
    return JournalHistory(journal_id, tuple(records))


def random_history(rng, journal_id="R", n_years=None, start=2000):
    n_years = n_years or int(rng.integers(4, 12))
    pubs = rng.integers(1, 200, size=n_years)
    matrix = {}
    for x in range(n_years):
        for y in range(x + 1):
            if rng.random() < 0.8:
                matrix[(start + x, start + y)] = int(rng.integers(0, 500))
    return make_history(journal_id, start, pubs, lambda j, i: matrix.get((j, i), 0))


@pytest.fixture(scope="session")
def small_corpus():
    return generate_synthetic(SynthConfig(n_journals=120), seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion that ran."""
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        status = "PASS" if all(mod.RESULTS[number]) else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}")
