"""Model configurations and the hyperparameter grids searched per family."""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, fields
from typing import ClassVar, Union

from ..errors import ConfigError


@dataclass(frozen=True)
class LinearRegressionConfig:
    family: ClassVar[str] = "linear_regression"


@dataclass(frozen=True)
class DecisionTreeConfig:
    max_depth: int = 9
    min_samples_split: int = 2
    family: ClassVar[str] = "decision_tree"


@dataclass(frozen=True)
class RandomForestConfig:
    max_depth: int = 15
    min_samples_split: int = 2
    n_trees: int = 100
    seed: int = 0
    bootstrap: bool = True
    family: ClassVar[str] = "random_forest"


@dataclass(frozen=True)
class KNNConfig:
    k: int = 20
    family: ClassVar[str] = "knn"


@dataclass(frozen=True)
class MLPConfig:
    n_layers: int = 2
    layer_size: int = 100
    activation: str = "relu"
    seed: int = 0
    family: ClassVar[str] = "mlp"


@dataclass(frozen=True)
class RNNConfig:
    n_layers: int = 1
    layer_size: int = 50
    activation: str = "tanh"
    seed: int = 0
    family: ClassVar[str] = "rnn"


@dataclass(frozen=True)
class LSTMConfig:
    n_layers: int = 1
    layer_size: int = 25
    activation: str = "tanh"
    seed: int = 0
    family: ClassVar[str] = "lstm"


ModelConfig = Union[
    LinearRegressionConfig, DecisionTreeConfig, RandomForestConfig, KNNConfig,
    MLPConfig, RNNConfig, LSTMConfig,
]

CONFIG_TYPES = {
    c.family: c
    for c in (LinearRegressionConfig, DecisionTreeConfig, RandomForestConfig, KNNConfig,
              MLPConfig, RNNConfig, LSTMConfig)
}
FAMILIES = tuple(CONFIG_TYPES)
ITERATIVE_FAMILIES = ("mlp", "rnn", "lstm")
SEQUENCE_FAMILIES = ("rnn", "lstm")
SEEDED_FAMILIES = ("random_forest", "mlp", "rnn", "lstm")

# Hyperparameter grids; the product of each family's lists is searched.
GRIDS: dict[str, dict[str, tuple]] = {
    "linear_regression": {},
    "decision_tree": {"max_depth": (3, 6, 9, 12, 15), "min_samples_split": (2, 5, 10)},
    "random_forest": {"max_depth": (3, 6, 9, 12, 15), "min_samples_split": (2, 5, 10),
                      "n_trees": (20, 50, 100)},
    "knn": {"k": (10, 20, 50, 100)},
    "mlp": {"n_layers": (1, 2, 4), "layer_size": (50, 100, 200)},
    "rnn": {"n_layers": (1, 2), "layer_size": (25, 50, 100)},
    "lstm": {"n_layers": (1, 2), "layer_size": (25, 50, 100)},
}


def config_to_dict(config: ModelConfig) -> dict:
    return {"family": config.family, **asdict(config)}


def config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    family = d.pop("family", None)
    if family not in CONFIG_TYPES:
        raise ConfigError(f"unknown model family {family!r}; expected one of {FAMILIES}")
    cls = CONFIG_TYPES[family]
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown parameters for {family}: {sorted(unknown)}")
    return cls(**d)


def config_label(config: ModelConfig) -> str:
    """Stable human-readable name, e.g. ``lstm(layer_size=25,n_layers=1)``."""
    d = asdict(config)
    d.pop("seed", None)
    inner = ",".join(f"{k}={d[k]}" for k in sorted(d))
    return f"{config.family}({inner})"


def model_grid(family: str, seed: int = 0) -> list[ModelConfig]:
    """Every configuration of ``family`` in its grid, in a fixed order."""
    if family not in GRIDS:
        raise ConfigError(f"unknown model family {family!r}")
    grid = GRIDS[family]
    cls = CONFIG_TYPES[family]
    keys = list(grid)
    extra = {"seed": seed} if family in SEEDED_FAMILIES else {}
    return [cls(**dict(zip(keys, combo)), **extra) for combo in itertools.product(*grid.values())]


def parameter_count(config: ModelConfig, n_inputs: int, window_len: int = 1) -> int:
    """Size of the fitted model; used only to break ranking ties.

    ``n_inputs`` is the per-year feature count. Tree families count the
    node capacity of a full tree of the configured depth.
    """
    flat = n_inputs * window_len
    if isinstance(config, LinearRegressionConfig):
        return flat + 1
    if isinstance(config, DecisionTreeConfig):
        return 2 ** (config.max_depth + 1) - 1
    if isinstance(config, RandomForestConfig):
        return config.n_trees * (2 ** (config.max_depth + 1) - 1)
    if isinstance(config, KNNConfig):
        return config.k
    h = config.layer_size
    if isinstance(config, MLPConfig):
        total, width = 0, flat
        for _ in range(config.n_layers):
            total += width * h + h
            width = h
        return total + h + 1
    gates = 4 if isinstance(config, LSTMConfig) else 1
    total, width = 0, n_inputs
    for _ in range(config.n_layers):
        total += gates * (width * h + h * h + h)
        width = h
    return total + h + 1
