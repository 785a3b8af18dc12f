"""Feature construction, sliding-window samples and preprocessing.

Every per-year input feature is a function of a journal history evaluated at
a calendar year ``t``. A sample for window length ``L`` stacks the feature
vectors of ``L`` consecutive years (oldest first) and pairs them with a
target evaluated at the following year.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from .data_model import Dataset, JournalHistory, compute_citescore
from .errors import ConfigError, DataError, UndefinedCiteScoreError

WINDOW_LENGTHS = (3, 4, 5, 6, 8, 10)


class FeatureId(str, Enum):
    YEAR = "x"
    NC = "nc_x"
    C = "c_x"
    P = "p_x"
    SNIP = "SNIP_x"
    SJR = "SJR_x"
    C_X_X = "c_{x,x}"
    C_X_X1 = "c_{x,x-1}"
    C_X_X2 = "c_{x,x-2}"
    C_X_X3 = "c_{x,x-3}"
    C_X1_X1 = "c_{x-1,x-1}"
    C_X1_X2 = "c_{x-1,x-2}"
    C_X2_X2 = "c_{x-2,x-2}"
    C_X_W4 = "c_{x,w4}"
    C_X_W3 = "c_{x,w3}"
    C_X1_W2 = "c_{x-1,w2}"
    P_X1 = "p_{x-1}"
    P_X2 = "p_{x-2}"
    P_X3 = "p_{x-3}"
    P_X_W3 = "p_{x,w3}"
    P_X_W4 = "p_{x,w4}"
    # targets, evaluated at the prediction year y
    C_Y = "c_y"
    C_Y_W4 = "c_{y,w4}"
    C_Y_Y = "c_{y,y}"
    C_Y_Y1 = "c_{y,y-1}"
    C_Y_Y2 = "c_{y,y-2}"
    C_Y_Y3 = "c_{y,y-3}"
    # target of the direct CiteScore arm only
    CS_Y = "cs_y"

    def __str__(self):
        return self.value


F = FeatureId

TARGETS = (F.C_Y, F.C_Y_W4, F.C_Y_Y, F.C_Y_Y1, F.C_Y_Y2, F.C_Y_Y3, F.CS_Y)
MINMAX_FEATURES = frozenset({F.YEAR, F.NC})

# (received-year offset, publication-year offsets) for citation features;
# publication-year offsets only for publication features.
_CITES = {
    F.C_X_X: (0, (0,)),
    F.C_X_X1: (0, (1,)),
    F.C_X_X2: (0, (2,)),
    F.C_X_X3: (0, (3,)),
    F.C_X1_X1: (1, (1,)),
    F.C_X1_X2: (1, (2,)),
    F.C_X2_X2: (2, (2,)),
    F.C_X_W4: (0, (0, 1, 2, 3)),
    F.C_X_W3: (0, (0, 1, 2)),
    F.C_X1_W2: (1, (1, 2)),
    F.C_Y_W4: (0, (0, 1, 2, 3)),
    F.C_Y_Y: (0, (0,)),
    F.C_Y_Y1: (0, (1,)),
    F.C_Y_Y2: (0, (2,)),
    F.C_Y_Y3: (0, (3,)),
}
_PUBS = {
    F.P: (0,),
    F.P_X1: (1,),
    F.P_X2: (2,),
    F.P_X3: (3,),
    F.P_X_W3: (0, 1, 2),
    F.P_X_W4: (0, 1, 2, 3),
}


def feature_lag(fid: FeatureId) -> int:
    """How many years before the evaluation year the feature reaches back."""
    if fid in _CITES:
        recv, pubs = _CITES[fid]
        return max(recv, *pubs)
    if fid in _PUBS:
        return max(_PUBS[fid])
    if fid is F.CS_Y:
        return 3
    return 0


def feature_value(history: JournalHistory, fid: FeatureId, year: int) -> float:
    """Value of ``fid`` for ``year``, or NaN when not computable.

    YEAR evaluates to ``year`` itself; samples overwrite it with the
    prediction year.
    """
    if fid is F.YEAR:
        return float(year)
    lag = feature_lag(fid)
    for y in range(year - lag, year + 1):
        if y not in history:
            return math.nan
    rec = history.record(year)
    if fid in (F.C, F.C_Y):
        return float(rec.total_citations)
    if fid is F.NC:
        return float(rec.pct_not_cited)
    if fid is F.SNIP:
        return math.nan if rec.snip is None else float(rec.snip)
    if fid is F.SJR:
        return math.nan if rec.sjr is None else float(rec.sjr)
    if fid in _CITES:
        recv, pubs = _CITES[fid]
        r = history.record(year - recv)
        return float(sum(r.citations_to(year - b) for b in pubs))
    if fid in _PUBS:
        return float(sum(history.record(year - b).publications for b in _PUBS[fid]))
    if fid is F.CS_Y:
        try:
            return compute_citescore(history, year)
        except UndefinedCiteScoreError:
            return math.nan
    raise ConfigError(f"unknown feature {fid!r}")


@dataclass(frozen=True)
class FeatureConfig:
    """A named selection of per-year input features and one target."""

    name: str
    inputs: tuple[FeatureId, ...]
    target: FeatureId

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ConfigError(f"{self.target} is not a target feature")
        bad = [f for f in self.inputs if f in TARGETS]
        if bad:
            raise ConfigError(f"targets used as inputs: {bad}")

    @property
    def lag(self) -> int:
        return max((feature_lag(f) for f in self.inputs), default=0)

    @property
    def n_features(self) -> int:
        return len(self.inputs)

    def required_span(self, window_len: int) -> int:
        """Consecutive years of history one sample consumes, target year included."""
        return self.lag + window_len + 1


def _cfg(name, target, *inputs):
    order = list(FeatureId)
    return FeatureConfig(name, tuple(sorted(inputs, key=order.index)), target)


_BASE = (F.YEAR, F.NC)
_METRICS = (F.SNIP, F.SJR)

FEATURE_CONFIGS: dict[str, FeatureConfig] = {
    c.name: c
    for c in (
        _cfg("Citations Basic", F.C_Y, *_BASE, F.C, F.P),
        _cfg("Citations Full", F.C_Y, *_BASE, F.C, F.P, *_METRICS),
        _cfg("CiteScore Sum Basic", F.C_Y_W4, *_BASE, *_METRICS,
             F.C_X_W4, F.C_X_W3, F.P_X_W3, F.P_X_W4),
        _cfg("CiteScore Sum Detailed", F.C_Y_W4, *_BASE, F.P, *_METRICS,
             F.C_X2_X2, F.C_X_W4, F.C_X_W3, F.C_X1_W2, F.P_X1, F.P_X2, F.P_X_W4),
        _cfg("CiteScore Sum Full", F.C_Y_W4, *_BASE, F.P, *_METRICS,
             F.C_X_X, F.C_X_X1, F.C_X_X2, F.C_X1_X1, F.C_X1_X2, F.C_X2_X2,
             F.C_X_W4, F.P_X1, F.P_X2, F.P_X_W4),
        _cfg("CiteScore Year 4", F.C_Y_Y, *_BASE, F.P, *_METRICS, F.C_X_X),
        _cfg("CiteScore Year 3", F.C_Y_Y1, *_BASE, F.P, *_METRICS, F.C_X_X, F.C_X_X1, F.P_X1),
        _cfg("CiteScore Year 2 Basic", F.C_Y_Y2, *_BASE, *_METRICS,
             F.C_X_X1, F.C_X_X2, F.P_X1, F.P_X2),
        _cfg("CiteScore Year 2 Full", F.C_Y_Y2, *_BASE, *_METRICS,
             F.C_X_X1, F.C_X_X2, F.C_X1_X1, F.P_X1, F.P_X2),
        _cfg("CiteScore Year 1 Basic", F.C_Y_Y3, *_BASE, *_METRICS,
             F.C_X_X2, F.C_X_X3, F.P_X2, F.P_X3),
        _cfg("CiteScore Year 1 Full", F.C_Y_Y3, *_BASE, *_METRICS,
             F.C_X_X2, F.C_X_X3, F.C_X1_X2, F.C_X2_X2, F.P_X2, F.P_X3),
    )
}

# Comparison arm that regresses next-year CiteScore outright.
DIRECT_CITESCORE_CONFIG = replace(FEATURE_CONFIGS["CiteScore Sum Full"],
                                  name="CiteScore Direct", target=F.CS_Y)

TASK_FEATURE_CONFIGS = {
    "citations": ("Citations Basic", "Citations Full"),
    "citescore": tuple(n for n in FEATURE_CONFIGS if n.startswith("CiteScore")),
}


def get_feature_config(name: str) -> FeatureConfig:
    if name == DIRECT_CITESCORE_CONFIG.name:
        return DIRECT_CITESCORE_CONFIG
    try:
        return FEATURE_CONFIGS[name]
    except KeyError:
        raise ConfigError(f"unknown feature configuration {name!r}") from None


# ---------------------------------------------------------------------------
# Splitting and samples
# ---------------------------------------------------------------------------


def split_dataset(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Random journal-level train/test partition."""
    if len(dataset) == 0:
        raise ConfigError("cannot split an empty dataset")
    if not 0 < train_fraction < 1:
        raise ConfigError("train_fraction must lie strictly between 0 and 1")
    n = len(dataset)
    n_train = int(math.floor(train_fraction * n + 0.5))
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    ids = dataset.journal_ids
    return (dataset.subset(ids[i] for i in train_idx), dataset.subset(ids[i] for i in test_idx))


@dataclass(frozen=True, eq=False)
class Sample:
    """Window of per-year feature vectors and the next year's target.

    ``inputs`` has shape ``(len(window_years), n_features)``, rows oldest
    first, columns in the feature configuration's order.
    """

    journal_id: str
    window_years: tuple[int, ...]
    inputs: np.ndarray
    target: float
    target_year: int

    @property
    def flat(self) -> np.ndarray:
        return self.inputs.reshape(-1)


def feature_table(history: JournalHistory, features: Sequence[FeatureId]) -> tuple[np.ndarray, np.ndarray]:
    """Years spanned by ``history`` and a ``(n_years, n_features)`` value table."""
    if not history.records:
        return np.empty(0, dtype=int), np.empty((0, len(features)))
    years = np.arange(history.first_year, history.last_year + 1)
    table = np.array([[feature_value(history, f, int(y)) for f in features] for y in years],
                     dtype=float).reshape(len(years), len(features))
    return years, table


def build_window(history: JournalHistory, config: FeatureConfig, window_len: int,
                 end_year: int | None = None) -> np.ndarray:
    """Input matrix for the window ending at ``end_year`` (default: final year).

    Raises DataError when any required value is missing.
    """
    end = history.last_year if end_year is None else end_year
    rows = []
    for y in range(end - window_len + 1, end + 1):
        rows.append([feature_value(history, f, y) for f in config.inputs])
    X = np.array(rows, dtype=float).reshape(window_len, config.n_features)
    if F.YEAR in config.inputs:
        X[:, config.inputs.index(F.YEAR)] = end + 1
    if not np.all(np.isfinite(X)):
        raise DataError(
            f"journal {history.journal_id!r}: incomplete inputs for window ending {end}"
        )
    return X


def journal_samples(history: JournalHistory, config: FeatureConfig, window_len: int) -> list[Sample]:
    years, table = feature_table(history, config.inputs)
    n = len(years)
    if n < window_len + 1:
        return []
    _, tgt = feature_table(history, (config.target,))
    tgt = tgt[:, 0]
    ok_row = np.all(np.isfinite(table), axis=1)
    year_col = config.inputs.index(F.YEAR) if F.YEAR in config.inputs else None
    out = []
    for end in range(window_len - 1, n - 1):
        start = end - window_len + 1
        if not (ok_row[start:end + 1].all() and np.isfinite(tgt[end + 1])):
            continue
        X = table[start:end + 1].copy()
        target_year = int(years[end + 1])
        if year_col is not None:
            X[:, year_col] = target_year
        out.append(Sample(history.journal_id, tuple(int(y) for y in years[start:end + 1]),
                          X, float(tgt[end + 1]), target_year))
    return out


def enumerate_samples(dataset: Dataset | Iterable[JournalHistory], config: FeatureConfig,
                      window_len: int) -> list[Sample]:
    """Stride-1 sliding-window samples over every journal."""
    if window_len < 1:
        raise ConfigError("window_len must be >= 1")
    out = []
    for history in dataset:
        out.extend(journal_samples(history, config, window_len))
    return out


def stack_samples(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    """``(X, y)`` with ``X`` of shape ``(n, L, F)``."""
    if not samples:
        raise ConfigError("no samples")
    shapes = {s.inputs.shape for s in samples}
    if len(shapes) != 1:
        raise DataError(f"inconsistent sample layouts: {sorted(shapes)}")
    X = np.stack([s.inputs for s in samples])
    y = np.array([s.target for s in samples], dtype=float)
    return X, y


def samples_to_csv(samples: Sequence[Sample], config: FeatureConfig, path) -> None:
    """One row per sample, inputs flattened oldest year first."""
    if not samples:
        header_len = 0
    else:
        header_len = samples[0].inputs.shape[0]
    names = [f"{f.value}@t-{header_len - 1 - k}" for k in range(header_len) for f in config.inputs]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["journal_id", "target_year", *names, config.target.value])
        for s in samples:
            w.writerow([s.journal_id, s.target_year, *map(repr, s.flat.tolist()), repr(s.target)])


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------


def yeo_johnson(x, lmbda: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    xp, xn = x[pos], x[~pos]
    if abs(lmbda) < 1e-12:
        out[pos] = np.log1p(xp)
    else:
        out[pos] = np.expm1(lmbda * np.log1p(xp)) / lmbda
    if abs(lmbda - 2) < 1e-12:
        out[~pos] = -np.log1p(-xn)
    else:
        out[~pos] = -np.expm1((2 - lmbda) * np.log1p(-xn)) / (2 - lmbda)
    return out


def yeo_johnson_inverse(y, lmbda: float) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    pos = y >= 0
    yp, yn = y[pos], y[~pos]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if abs(lmbda) < 1e-12:
            out[pos] = np.expm1(yp)
        else:
            # beyond the transform's supremum (lmbda < 0) the inverse is unbounded
            base = np.maximum(lmbda * yp, -1.0 + np.finfo(float).eps)
            out[pos] = np.expm1(np.log1p(base) / lmbda)
        if abs(lmbda - 2) < 1e-12:
            out[~pos] = -np.expm1(-yn)
        else:
            base = np.maximum(-(2 - lmbda) * yn, -1.0 + np.finfo(float).eps)
            out[~pos] = -np.expm1(np.log1p(base) / (2 - lmbda))
    return out


def yeo_johnson_llf(x, lmbda: float) -> float:
    """Gaussian profile log-likelihood of the transformed data."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        t = yeo_johnson(x, lmbda)
        var = np.var(t)
    if not np.isfinite(var) or var <= 0:
        return -math.inf
    n = x.size
    return -0.5 * n * math.log(var) + (lmbda - 1) * float(np.sum(np.sign(x) * np.log1p(np.abs(x))))


def golden_section_max(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-4) -> float:
    inv_phi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return (a + b) / 2


def fit_yeo_johnson_lambda(x, lo: float = -5.0, hi: float = 5.0, tol: float = 1e-4) -> float:
    x = np.asarray(x, dtype=float)
    return golden_section_max(lambda lam: yeo_johnson_llf(x, lam), lo, hi, tol)


@dataclass(frozen=True)
class PowerTransform:
    """Yeo-Johnson transform followed by standardization."""

    lmbda: float
    mean: float
    scale: float

    kind = "power"

    @classmethod
    def fit(cls, values) -> "PowerTransform":
        v = np.asarray(values, dtype=float).ravel()
        if v.size == 0:
            raise ConfigError("cannot fit a transform on no values")
        lmbda = 1.0 if np.ptp(v) == 0 else fit_yeo_johnson_lambda(v)
        t = yeo_johnson(v, lmbda)
        sd = float(np.std(t))
        return cls(float(lmbda), float(np.mean(t)), sd if sd > 0 else 1.0)

    def forward(self, v):
        return (yeo_johnson(v, self.lmbda) - self.mean) / self.scale

    def inverse(self, z):
        return yeo_johnson_inverse(np.asarray(z, dtype=float) * self.scale + self.mean, self.lmbda)

    def to_dict(self):
        return {"kind": self.kind, "lmbda": self.lmbda, "mean": self.mean, "scale": self.scale}


@dataclass(frozen=True)
class MinMaxTransform:
    """Affine map of the training range onto [0, 1]; no clipping."""

    lo: float
    hi: float

    kind = "minmax"

    @classmethod
    def fit(cls, values) -> "MinMaxTransform":
        v = np.asarray(values, dtype=float).ravel()
        if v.size == 0:
            raise ConfigError("cannot fit a transform on no values")
        return cls(float(v.min()), float(v.max()))

    def forward(self, v):
        v = np.asarray(v, dtype=float)
        if self.hi == self.lo:
            return np.full_like(v, 0.5)
        return (v - self.lo) / (self.hi - self.lo)

    def inverse(self, z):
        z = np.asarray(z, dtype=float)
        if self.hi == self.lo:
            return np.full_like(z, self.lo)
        return z * (self.hi - self.lo) + self.lo

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


def transform_from_dict(d):
    if d["kind"] == "power":
        return PowerTransform(d["lmbda"], d["mean"], d["scale"])
    if d["kind"] == "minmax":
        return MinMaxTransform(d["lo"], d["hi"])
    raise ConfigError(f"unknown transform kind {d['kind']!r}")


@dataclass(frozen=True)
class Preprocessor:
    features: tuple[FeatureId, ...]
    transforms: tuple
    target: FeatureId
    target_transform: PowerTransform

    def transform_inputs(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != len(self.features):
            raise DataError(f"expected {len(self.features)} features, got {X.shape[-1]}")
        out = np.empty_like(X)
        for j, tr in enumerate(self.transforms):
            out[..., j] = tr.forward(X[..., j])
        return out

    def transform_target(self, y):
        return self.target_transform.forward(y)

    def invert_target(self, z):
        out = self.target_transform.inverse(z)
        return float(out) if np.ndim(out) == 0 else out

    def apply(self, samples: Sequence[Sample]) -> list[Sample]:
        if not samples:
            return []
        X, y = stack_samples(samples)
        Xt = self.transform_inputs(X)
        yt = self.transform_target(y)
        return [replace(s, inputs=Xt[i], target=float(yt[i])) for i, s in enumerate(samples)]

    def to_dict(self) -> dict:
        return {
            "features": [f.value for f in self.features],
            "transforms": [t.to_dict() for t in self.transforms],
            "target": self.target.value,
            "target_transform": self.target_transform.to_dict(),
        }

    @classmethod
    def from_dict(cls, d) -> "Preprocessor":
        return cls(
            tuple(FeatureId(f) for f in d["features"]),
            tuple(transform_from_dict(t) for t in d["transforms"]),
            FeatureId(d["target"]),
            transform_from_dict(d["target_transform"]),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def fit_preprocessor(train_samples: Sequence[Sample], config: FeatureConfig) -> Preprocessor:
    """Fit per-feature transforms and the target transform on training samples only."""
    if not train_samples:
        raise ConfigError("cannot fit a preprocessor on no samples")
    X, y = stack_samples(train_samples)
    if X.shape[-1] != config.n_features:
        raise DataError("sample layout does not match the feature configuration")
    transforms = []
    for j, fid in enumerate(config.inputs):
        col = X[..., j].ravel()
        transforms.append(MinMaxTransform.fit(col) if fid in MINMAX_FEATURES else PowerTransform.fit(col))
    return Preprocessor(tuple(config.inputs), tuple(transforms), config.target, PowerTransform.fit(y))
