"""Journal bibliometric histories, derived counts and the CiteScore formula.

A journal's history is a run of consecutive :class:`AnnualRecord` objects.
Each record stores the number of documents published that year and a sparse
row of the citation matrix: ``citations_by_pub_year[y]`` is the number of
citations received during ``record.year`` by documents published in ``y``.
Absent keys mean zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    MissingYearError,
    UndefinedCiteScoreError,
)

CITESCORE_WINDOW = 4


@dataclass(frozen=True)
class AnnualRecord:
    """One journal-year.

    Args:
        year: Calendar year.
        publications: Documents (articles, conference papers, reviews, book
            chapters) published during ``year``.
        citations_by_pub_year: Citations received during ``year``, keyed by
            the publication year of the cited documents. Sparse; treat as
            read-only.
        pct_not_cited: Percentage of this year's documents never cited as of
            the final observed year of the dataset.
        snip: SNIP value for the year, or None when unavailable.
        sjr: SJR value for the year, or None when unavailable.
    """

    year: int
    publications: int
    citations_by_pub_year: Mapping[int, int] = field(default_factory=dict)
    pct_not_cited: float = 0.0
    snip: float | None = None
    sjr: float | None = None

    @property
    def total_citations(self) -> int:
        return int(sum(self.citations_by_pub_year.values()))

    def citations_to(self, pub_year: int) -> int:
        return int(self.citations_by_pub_year.get(pub_year, 0))

    def to_dict(self) -> dict:
        return {
            "year": self.year,
            "publications": self.publications,
            "citations_by_pub_year": {
                str(y): int(c) for y, c in sorted(self.citations_by_pub_year.items())
            },
            "pct_not_cited": self.pct_not_cited,
            "snip": self.snip,
            "sjr": self.sjr,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "AnnualRecord":
        raw = d.get("citations_by_pub_year") or {}
        cites = {int(y): int(c) for y, c in raw.items()}
        snip = d.get("snip")
        sjr = d.get("sjr")
        return cls(
            year=int(d["year"]),
            publications=int(d["publications"]),
            citations_by_pub_year=cites,
            pct_not_cited=float(d.get("pct_not_cited", 0.0)),
            snip=None if snip is None else float(snip),
            sjr=None if sjr is None else float(sjr),
        )


@dataclass(frozen=True)
class JournalHistory:
    """Chronological annual records of one journal."""

    journal_id: str
    records: tuple[AnnualRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "_index", {r.year: i for i, r in enumerate(self.records)})

    def __len__(self):
        return len(self.records)

    def __contains__(self, year):
        return year in self._index

    @property
    def years(self) -> list[int]:
        return [r.year for r in self.records]

    @property
    def first_year(self) -> int:
        if not self.records:
            raise MissingYearError(f"journal {self.journal_id!r} has no records")
        return self.records[0].year

    @property
    def last_year(self) -> int:
        if not self.records:
            raise MissingYearError(f"journal {self.journal_id!r} has no records")
        return self.records[-1].year

    def record(self, year: int) -> AnnualRecord:
        try:
            return self.records[self._index[year]]
        except KeyError:
            raise MissingYearError(
                f"journal {self.journal_id!r} has no record for {year}"
            ) from None

    def truncate(self, last_year: int) -> "JournalHistory":
        """History restricted to records with ``year <= last_year``."""
        return JournalHistory(self.journal_id, tuple(r for r in self.records if r.year <= last_year))

    def to_dict(self) -> dict:
        return {"journal_id": self.journal_id, "records": [r.to_dict() for r in self.records]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "JournalHistory":
        return cls(str(d["journal_id"]), tuple(AnnualRecord.from_dict(r) for r in d["records"]))


@dataclass(frozen=True)
class Dataset:
    journals: tuple[JournalHistory, ...]
    horizon: tuple[int, int] | None = None

    def __post_init__(self):
        journals = tuple(self.journals)
        object.__setattr__(self, "journals", journals)
        ids = [j.journal_id for j in journals]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate journal_id in dataset")
        years = [r.year for j in journals for r in j.records]
        if self.horizon is None and years:
            object.__setattr__(self, "horizon", (min(years), max(years)))
        elif self.horizon is not None and years:
            lo, hi = self.horizon
            if min(years) < lo or max(years) > hi:
                raise DataError(f"records fall outside horizon {self.horizon}")
        object.__setattr__(self, "_by_id", {j.journal_id: j for j in journals})

    def __len__(self):
        return len(self.journals)

    def __iter__(self) -> Iterator[JournalHistory]:
        return iter(self.journals)

    def get(self, journal_id: str) -> JournalHistory:
        return self._by_id[journal_id]

    @property
    def journal_ids(self) -> list[str]:
        return [j.journal_id for j in self.journals]

    def subset(self, journal_ids: Iterable[str]) -> "Dataset":
        return Dataset(tuple(self._by_id[i] for i in journal_ids), self.horizon)


# ---------------------------------------------------------------------------
# Derived quantities
# ---------------------------------------------------------------------------


def total_citations(history: JournalHistory, year: int) -> int:
    """Citations received during ``year`` across all publication years."""
    return history.record(year).total_citations


def citation_window_sum(history: JournalHistory, year: int, window: int) -> int:
    """Citations received during ``year`` by documents of the last ``window`` years.

    Publication years ``year - window + 1 .. year`` must all have records.
    """
    if window < 1:
        raise ConfigError("window must be >= 1")
    for y in range(year - window + 1, year + 1):
        history.record(y)
    rec = history.record(year)
    return sum(rec.citations_to(i) for i in range(year - window + 1, year + 1))


def publication_window_sum(history: JournalHistory, year: int, window: int) -> int:
    if window < 1:
        raise ConfigError("window must be >= 1")
    return sum(history.record(y).publications for y in range(year - window + 1, year + 1))


def citescore_numerator(history: JournalHistory, year: int, through: int | None = None) -> int:
    """Citation terms of the CiteScore numerator for ``year``.

    With ``through`` set, only citations received up to that year are
    counted; this is the part already known before ``year`` completes.
    """
    last = year if through is None else through
    total = 0
    for i in range(year - CITESCORE_WINDOW + 1, year + 1):
        for j in range(i, last + 1):
            total += history.record(j).citations_to(i)
    return total


def compute_citescore(history: JournalHistory, year: int) -> float:
    """CiteScore of ``year``: four-year window citations over window publications."""
    for y in range(year - CITESCORE_WINDOW + 1, year + 1):
        history.record(y)
    denom = publication_window_sum(history, year, CITESCORE_WINDOW)
    if denom <= 0:
        raise UndefinedCiteScoreError(
            f"journal {history.journal_id!r}: no publications in CiteScore window ending {year}"
        )
    return citescore_numerator(history, year) / denom


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    journal_id: str
    year: int | None
    kind: str
    message: str


def validate_history(history: JournalHistory) -> list[Violation]:
    """Return all invariant violations of ``history``; empty when well formed."""
    out = []
    jid = history.journal_id

    def bad(year, kind, msg):
        out.append(Violation(jid, year, kind, msg))

    if not history.records:
        bad(None, "empty", "history has no records")
        return out
    prev = None
    for rec in history.records:
        if prev is not None:
            if rec.year <= prev:
                bad(rec.year, "order", f"year {rec.year} does not follow {prev}")
            elif rec.year != prev + 1:
                bad(rec.year, "gap", f"missing years {prev + 1}..{rec.year - 1}")
        prev = rec.year
        if rec.publications < 0:
            bad(rec.year, "negative_publications", f"publications = {rec.publications}")
        for y, c in rec.citations_by_pub_year.items():
            if y > rec.year:
                bad(rec.year, "citation_from_before_publication",
                    f"citation from before publication: c[{rec.year},{y}] = {c}")
            if c < 0:
                bad(rec.year, "negative_citations", f"c[{rec.year},{y}] = {c}")
        if not (0.0 <= rec.pct_not_cited <= 100.0) or math.isnan(rec.pct_not_cited):
            bad(rec.year, "pct_out_of_range", f"pct_not_cited = {rec.pct_not_cited}")
        for name in ("snip", "sjr"):
            v = getattr(rec, name)
            if v is not None and not v >= 0:
                bad(rec.year, f"negative_{name}", f"{name} = {v}")
    if history.records[-1].publications < 1:
        bad(history.records[-1].year, "inactive_final_year", "no publications in final year")
    return out


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


def iter_ndjson(path: str | Path) -> Iterator[tuple[int, JournalHistory]]:
    """Yield ``(line_number, history)`` pairs from a newline-delimited JSON file."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, JournalHistory.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, AttributeError) as exc:
                raise DataError(f"line {lineno}: cannot parse journal record ({exc})") from exc


def load_ndjson(path: str | Path) -> Dataset:
    return Dataset(tuple(h for _, h in iter_ndjson(path)))


def dump_ndjson(dataset: Dataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for h in dataset:
            fh.write(json.dumps(h.to_dict(), separators=(",", ":")))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic journal generator.

    Publication counts and per-document citation rates are log-normal across
    journals with multiplicative AR(1) year-to-year deviations. Defaults are
    calibrated so the journal-year means land near 108 publications and
    2,880 citations, with long right tails.
    """

    n_journals: int = 2000
    year_min: int = 2000
    year_max: int = 2020
    pub_log_mean: float = 3.654
    pub_log_sd: float = 1.434
    pub_trend: float = 0.02
    impact_log_mean: float = 1.42
    impact_log_sd: float = 0.8
    impact_trend: float = 0.04
    rho: float = 0.9
    innovation_sd: float = 0.2
    lag_decay: float = 4.0
    same_year_weight: float = 0.5
    full_history_fraction: float = 0.5
    burn_in_years: int = 10
    uncited_dispersion: float = 0.5
    missing_metric_rate: float = 0.01

    def __post_init__(self):
        if self.n_journals < 0:
            raise ConfigError("n_journals must be >= 0")
        if self.year_max < self.year_min:
            raise ConfigError("year_max must be >= year_min")
        for name in ("pub_log_sd", "impact_log_sd", "lag_decay", "uncited_dispersion"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("innovation_sd", "same_year_weight", "burn_in_years"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if not 0 <= self.rho < 1:
            raise ConfigError("rho must lie in [0, 1)")
        if self.innovation_sd >= self.pub_log_sd:
            raise ConfigError("innovation_sd must be smaller than pub_log_sd")
        for name in ("full_history_fraction", "missing_metric_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known - {"seed"}
        if unknown:
            raise ConfigError(f"unknown generator parameters: {sorted(unknown)}")
        return cls(**{k: v for k, v in d.items() if k in known})


def _ar1(rng, n, rho, sd):
    """Stationary AR(1) path with marginal standard deviation ``sd``."""
    out = np.empty(n)
    if n == 0:
        return out
    out[0] = rng.normal(0.0, sd)
    step = sd * math.sqrt(1.0 - rho * rho)
    for t in range(1, n):
        out[t] = rho * out[t - 1] + rng.normal(0.0, step)
    return out


def _lag_profile(cfg: SynthConfig, max_lag: int) -> np.ndarray:
    lags = np.arange(max_lag + 1, dtype=float)
    w = np.exp(-(lags - 1.0) / cfg.lag_decay)
    w[0] = cfg.same_year_weight
    return w


def _synth_journal(cfg: SynthConfig, rng: np.random.Generator, journal_id: str) -> JournalHistory:
    span = cfg.year_max - cfg.year_min + 1
    if rng.random() < cfg.full_history_fraction:
        start = cfg.year_min
        first_cohort = cfg.year_min - cfg.burn_in_years
    else:
        start = int(rng.integers(cfg.year_min + 1, cfg.year_max + 1)) if span > 1 else cfg.year_min
        first_cohort = start
    years = np.arange(first_cohort, cfg.year_max + 1)
    n = len(years)
    mid = 0.5 * (cfg.year_min + cfg.year_max)

    between_sd = math.sqrt(cfg.pub_log_sd ** 2 - cfg.innovation_sd ** 2)
    pub_level = rng.normal(cfg.pub_log_mean, between_sd)
    log_pubs = pub_level + cfg.pub_trend * (years - mid) + _ar1(rng, n, cfg.rho, cfg.innovation_sd)
    pubs = np.maximum(1, np.rint(np.exp(log_pubs))).astype(np.int64)

    z_impact = rng.normal()
    impact = np.exp(
        cfg.impact_log_mean
        + cfg.impact_log_sd * z_impact
        + cfg.impact_trend * (years - mid)
        + _ar1(rng, n, cfg.rho, cfg.innovation_sd)
    )

    # expected[t, i]: citations received in years[t] by the cohort of years[i]
    lag = years[:, None] - years[None, :]
    profile = _lag_profile(cfg, n - 1)
    expected = np.where(
        lag >= 0, impact[:, None] * pubs[None, :] * profile[np.clip(lag, 0, None)], 0.0
    )
    cites = rng.poisson(expected)

    received = cites.sum(axis=0)  # per cohort, through year_max
    per_doc = received / pubs
    k = cfg.uncited_dispersion
    pct_uncited = 100.0 * (1.0 + per_doc / k) ** (-k)

    snip = np.exp(-0.5 + 0.8 * z_impact + _ar1(rng, n, cfg.rho, 0.15))
    sjr = np.exp(-0.8 + 1.0 * z_impact + _ar1(rng, n, cfg.rho, 0.2))
    snip_missing = rng.random(n) < cfg.missing_metric_rate
    sjr_missing = rng.random(n) < cfg.missing_metric_rate

    records = []
    for t in range(n):
        year = int(years[t])
        if year < start:
            continue
        row = cites[t, : t + 1]
        nz = np.nonzero(row)[0]
        records.append(
            AnnualRecord(
                year=year,
                publications=int(pubs[t]),
                citations_by_pub_year={int(years[i]): int(row[i]) for i in nz},
                pct_not_cited=round(float(pct_uncited[t]), 4),
                snip=None if snip_missing[t] else round(float(snip[t]), 4),
                sjr=None if sjr_missing[t] else round(float(sjr[t]), 4),
            )
        )
    return JournalHistory(journal_id, tuple(records))


def generate_synthetic(config: SynthConfig | Mapping, seed: int) -> Dataset:
    """Deterministic synthetic dataset of journal histories."""
    cfg = config if isinstance(config, SynthConfig) else SynthConfig.from_dict(config)
    rng = np.random.default_rng(seed)
    width = max(4, len(str(cfg.n_journals)))
    journals = tuple(
        _synth_journal(cfg, rng, f"J{idx:0{width}d}") for idx in range(cfg.n_journals)
    )
    return Dataset(journals, (cfg.year_min, cfg.year_max))
