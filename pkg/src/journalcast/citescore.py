"""Next-year CiteScore from trained citation models.

Before year ``x`` completes, every term of its CiteScore is already known
except the citations received during ``x`` itself and the publication count
``p_x``. A strategy supplies the missing citations; ``p_x`` is taken from
the previous year.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .baselines import persistence_predict
from .data_model import CITESCORE_WINDOW, JournalHistory, citescore_numerator
from .errors import ConfigError, DataError, InsufficientHistoryError
from .features import FeatureConfig, FeatureId, Preprocessor, build_window, get_feature_config

# Target of each PerYear component, most recent publication year first.
PER_YEAR_TARGETS = (FeatureId.C_Y_Y, FeatureId.C_Y_Y1, FeatureId.C_Y_Y2, FeatureId.C_Y_Y3)

Component = Callable[[JournalHistory], float]


def predict_publications(history: JournalHistory) -> int:
    """Publication count of the final known year, carried forward."""
    if not history.records:
        raise InsufficientHistoryError(f"journal {history.journal_id!r} has no records")
    return int(persistence_predict([history.record(history.last_year).publications]))


@dataclass(frozen=True)
class ComponentModel:
    """A trained model plus the preprocessing it was fitted with.

    Calling it on a history predicts the configured target for the year
    after the history's final year, on the raw scale, clamped at 0.
    """

    model: object
    preprocessor: Preprocessor
    feature_config: FeatureConfig
    window_len: int

    def __call__(self, history: JournalHistory) -> float:
        return float(self.predict_many([history])[0])

    def predict_many(self, histories: Sequence[JournalHistory]) -> np.ndarray:
        windows = []
        for h in histories:
            try:
                windows.append(build_window(h, self.feature_config, self.window_len))
            except (DataError, KeyError) as exc:
                raise InsufficientHistoryError(
                    f"journal {h.journal_id!r}: cannot build a {self.window_len}-year "
                    f"{self.feature_config.name!r} window"
                ) from exc
        X = self.preprocessor.transform_inputs(np.stack(windows))
        raw = self.preprocessor.invert_target(self.model.predict_batch(X))
        return np.maximum(np.asarray(raw, dtype=float), 0.0)


@dataclass(frozen=True)
class Direct:
    """Regress next-year CiteScore outright."""

    model: Component
    name = "direct"


@dataclass(frozen=True)
class SumWindow:
    """Predict the year-``x`` citations to the whole four-year window as one value."""

    model: Component
    name = "sum"


@dataclass(frozen=True)
class PerYear:
    """One model per window publication year, ordered ``x, x-1, x-2, x-3``."""

    models: tuple[Component, ...]
    name = "per_year"

    def __post_init__(self):
        if len(self.models) != CITESCORE_WINDOW:
            raise ConfigError(f"PerYear needs exactly {CITESCORE_WINDOW} models, got {len(self.models)}")


CiteScoreStrategy = Union[Direct, SumWindow, PerYear]


def _call_many(component: Component, histories: Sequence[JournalHistory]) -> np.ndarray:
    many = getattr(component, "predict_many", None)
    if many is not None:
        return np.asarray(many(histories), dtype=float)
    return np.array([float(component(h)) for h in histories])


def known_terms(history: JournalHistory) -> tuple[int, int]:
    """Known numerator and known denominator part for the year after the final year."""
    if not history.records:
        raise InsufficientHistoryError(f"journal {history.journal_id!r} has no records")
    x = history.last_year + 1
    try:
        numer = citescore_numerator(history, x, through=x - 1)
        pubs = sum(history.record(y).publications for y in range(x - CITESCORE_WINDOW + 1, x))
    except KeyError as exc:
        raise InsufficientHistoryError(
            f"journal {history.journal_id!r}: CiteScore for {x} needs records {x - 3}..{x - 1}"
        ) from exc
    return numer, pubs


def citescore_components(histories: Sequence[JournalHistory], strategy: CiteScoreStrategy,
                         publications: Callable[[JournalHistory], int] | None = None) -> list[dict]:
    """Predicted CiteScore for the year after each history's end, with its parts.

    Args:
        histories: Journals whose final year is ``x - 1``.
        strategy: Source of the year-``x`` citation terms.
        publications: Source of ``p_x``; defaults to :func:`predict_publications`.
    """
    publications = publications or predict_publications
    histories = list(histories)
    if not histories:
        return []
    out = []
    if isinstance(strategy, Direct):
        preds = _call_many(strategy.model, histories)
        for h, v in zip(histories, preds):
            out.append({"journal_id": h.journal_id, "target_year": h.last_year + 1,
                        "predicted_citescore": max(float(v), 0.0), "strategy": strategy.name,
                        "components": {"citescore": float(v)}})
        return out
    if isinstance(strategy, SumWindow):
        cols = [_call_many(strategy.model, histories)]
        names = ["sum"]
    elif isinstance(strategy, PerYear):
        cols = [_call_many(m, histories) for m in strategy.models]
        names = [f"c_x_x{k}" if k else "c_x_x" for k in range(CITESCORE_WINDOW)]
    else:
        raise ConfigError(f"unknown CiteScore strategy {strategy!r}")
    for n, h in enumerate(histories):
        numer, pubs = known_terms(h)
        parts = {name: float(c[n]) for name, c in zip(names, cols)}
        p_x = int(publications(h))
        denom = pubs + p_x
        predicted = float(sum(parts.values()))
        score = max((numer + predicted) / denom, 0.0)
        parts["p_x"] = p_x
        parts["known_numerator"] = numer
        out.append({"journal_id": h.journal_id, "target_year": h.last_year + 1,
                    "predicted_citations": predicted, "predicted_citescore": score,
                    "strategy": strategy.name, "components": parts})
    return out


def predict_citescore(history: JournalHistory, strategy: CiteScoreStrategy,
                      publications: Callable[[JournalHistory], int] | None = None) -> float:
    """Predicted CiteScore for the year after ``history``'s final year."""
    return citescore_components([history], strategy, publications)[0]["predicted_citescore"]


def predict_citescore_many(histories: Sequence[JournalHistory], strategy: CiteScoreStrategy,
                           publications: Callable[[JournalHistory], int] | None = None) -> np.ndarray:
    rows = citescore_components(histories, strategy, publications)
    return np.array([r["predicted_citescore"] for r in rows])


def oracle_publications(completed: dict[str, JournalHistory]) -> Callable[[JournalHistory], int]:
    """``p_x`` read from completed histories, for exactness checks."""
    def read(h: JournalHistory) -> int:
        return completed[h.journal_id].record(h.last_year + 1).publications
    return read


def oracle_strategy(kind: str, completed: dict[str, JournalHistory]) -> CiteScoreStrategy:
    """Strategy that reads the true year-``x`` citations from completed histories.

    ``completed`` maps journal id to a history that includes year ``x``.
    Used to check that the assembly reproduces the exact CiteScore.
    """
    def reader(fid):
        def read(h: JournalHistory) -> float:
            full = completed[h.journal_id]
            x = h.last_year + 1
            rec = full.record(x)
            if fid == FeatureId.C_Y_W4:
                return float(sum(rec.citations_to(i) for i in range(x - CITESCORE_WINDOW + 1, x + 1)))
            return float(rec.citations_to(x - PER_YEAR_TARGETS.index(fid)))
        return read

    if kind == "sum":
        return SumWindow(reader(FeatureId.C_Y_W4))
    if kind == "per_year":
        return PerYear(tuple(reader(f) for f in PER_YEAR_TARGETS))
    raise ConfigError(f"unknown oracle strategy kind {kind!r}")


def component_feature_configs(kind: str, detail: str = "Full") -> list[FeatureConfig]:
    """Feature configurations feeding each component of a strategy."""
    if kind == "sum":
        return [get_feature_config(f"CiteScore Sum {detail}")]
    if kind == "direct":
        return [get_feature_config("CiteScore Direct")]
    if kind == "per_year":
        def pick(year, has_detail):
            return get_feature_config(f"CiteScore Year {year} {detail}" if has_detail else f"CiteScore Year {year}")
        return [pick(4, False), pick(3, False), pick(2, True), pick(1, True)]
    raise ConfigError(f"unknown strategy kind {kind!r}")
