"""Uniform ``train`` / ``predict`` over every model family.

Flat families (linear regression, trees, forests, k-NN, MLP) see each
sample as its ``L x F`` window flattened oldest year first; the recurrent
families see the window as a length-``L`` sequence.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from ..errors import ConfigError, DivergenceError, ShapeError
from ..features import Sample, stack_samples
from .configs import (
    DecisionTreeConfig,
    KNNConfig,
    LinearRegressionConfig,
    ModelConfig,
    RandomForestConfig,
    SEQUENCE_FAMILIES,
    config_from_dict,
    config_to_dict,
)
from .knn import KNNRegressor
from .linear import LinearRegression
from .nn import NeuralNet, loss_and_grads
from .optim import AdamHyper, AdamState, adam_step
from .tree import DecisionTree, RandomForest

log = logging.getLogger(__name__)

FORMAT_VERSION = 1

DEFAULT_PATIENCE = {"mlp": 10, "rnn": 15, "lstm": 15}
DEFAULT_TOL = {"mlp": 1e-4, "rnn": 0.0, "lstm": 0.0}


@dataclass(frozen=True)
class TrainOptions:
    """Optimizer and stopping settings for the iterative families.

    ``stopping`` is ``"patience"`` (hold out ``validation_fraction`` of the
    samples, stop after ``patience`` epochs without a validation improvement
    larger than ``tol`` and restore the best weights) or ``"fixed"`` (train on
    every sample for exactly ``fixed_epochs``). ``patience`` and ``tol``
    default per family when None. ``max_epochs=None`` means unbounded.
    """

    adam: AdamHyper = AdamHyper()
    batch_size: int = 200
    stopping: str = "patience"
    patience: int | None = None
    tol: float | None = None
    fixed_epochs: int = 100
    max_epochs: int | None = 1000
    validation_fraction: float = 0.1

    def __post_init__(self):
        if self.stopping not in ("patience", "fixed"):
            raise ConfigError(f"unknown stopping mode {self.stopping!r}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.stopping == "fixed" and self.fixed_epochs < 1:
            raise ConfigError("fixed_epochs must be >= 1")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("validation_fraction must lie in (0, 1)")

    def fixed(self, epochs: int) -> "TrainOptions":
        return replace(self, stopping="fixed", fixed_epochs=int(epochs))


@dataclass
class TrainedModel:
    config: ModelConfig
    estimator: object
    layout: tuple[int, int]
    metadata: dict = field(default_factory=dict)

    @property
    def family(self) -> str:
        return self.config.family

    def _prepare(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            X = X[None]
        if X.shape[1:] != tuple(self.layout):
            raise ShapeError(f"model expects windows of shape {tuple(self.layout)}, got {X.shape[1:]}")
        if self.family in SEQUENCE_FAMILIES:
            return X
        return X.reshape(X.shape[0], -1)

    def predict_batch(self, X) -> np.ndarray:
        """Predictions (transformed target space) for windows ``X`` of shape ``(n, L, F)``."""
        return np.asarray(self.estimator.predict(self._prepare(X)), dtype=float)

    def to_dict(self, preprocessor_digest: str | None = None) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "family": self.family,
            "config": config_to_dict(self.config),
            "layout": list(self.layout),
            "preprocessor_digest": preprocessor_digest,
            "params": {k: _encode_array(v) for k, v in self.estimator.state().items()},
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported model format version {d.get('format_version')!r}")
        config = config_from_dict(d["config"])
        state = {k: _decode_array(v) for k, v in d["params"].items()}
        fam = config.family
        if fam == "linear_regression":
            est = LinearRegression.from_state(state)
        elif fam == "decision_tree":
            est = DecisionTree.from_state(state, config.max_depth, config.min_samples_split)
        elif fam == "random_forest":
            est = RandomForest.from_state(state, max_depth=config.max_depth,
                                          min_samples_split=config.min_samples_split,
                                          n_trees=config.n_trees, seed=config.seed,
                                          bootstrap=config.bootstrap)
        elif fam == "knn":
            est = KNNRegressor.from_state(state, config.k)
        else:
            est = NeuralNet(fam, state)
        return cls(config, est, tuple(d["layout"]), d.get("metadata", {}))


def _encode_array(a):
    a = np.asarray(a)
    return {"dtype": "int64" if a.dtype.kind in "iu" else "float64",
            "shape": list(a.shape), "data": a.ravel().tolist()}


def _decode_array(d):
    return np.asarray(d["data"], dtype=d["dtype"]).reshape(d["shape"])


def train(config: ModelConfig, samples: Sequence[Sample], opts: TrainOptions | None = None) -> TrainedModel:
    """Fit ``config`` on preprocessed samples."""
    if not samples:
        raise ConfigError("cannot train on an empty sample list")
    X, y = stack_samples(samples)
    return train_arrays(config, X, y, opts)


def train_arrays(config: ModelConfig, X: np.ndarray, y: np.ndarray,
                 opts: TrainOptions | None = None) -> TrainedModel:
    opts = opts or TrainOptions()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 3 or X.shape[0] == 0:
        raise ConfigError(f"expected a non-empty (n, L, F) array, got shape {X.shape}")
    layout = (X.shape[1], X.shape[2])
    flat = X.reshape(X.shape[0], -1)
    fam = config.family
    if isinstance(config, LinearRegressionConfig):
        return TrainedModel(config, LinearRegression().fit(flat, y), layout)
    if isinstance(config, DecisionTreeConfig):
        return TrainedModel(config, DecisionTree(config.max_depth, config.min_samples_split).fit(flat, y), layout)
    if isinstance(config, RandomForestConfig):
        est = RandomForest(config.max_depth, config.min_samples_split, config.n_trees,
                           config.seed, config.bootstrap).fit(flat, y)
        return TrainedModel(config, est, layout)
    if isinstance(config, KNNConfig):
        return TrainedModel(config, KNNRegressor(config.k).fit(flat, y), layout)
    if fam in ("mlp", "rnn", "lstm"):
        inputs = X if fam in SEQUENCE_FAMILIES else flat
        return _fit_network(config, inputs, y, opts, layout)
    raise ConfigError(f"unsupported model configuration {config!r}")


def _batch_loss(family, params, X, y, batch=4096):
    total = 0.0
    net = NeuralNet(family, params)
    for s in range(0, len(y), batch):
        d = net.predict(X[s:s + batch]) - y[s:s + batch]
        total += float(np.dot(d, d))
    return total / len(y)


def _fit_network(config, X, y, opts: TrainOptions, layout) -> TrainedModel:
    fam = config.family
    n_in = X.shape[-1]
    init_ss, split_ss, shuffle_ss = np.random.SeedSequence(config.seed).spawn(3)
    net = NeuralNet.init(fam, np.random.default_rng(init_ss), n_in, config.n_layers, config.layer_size)
    params = net.params
    shuffle_rng = np.random.default_rng(shuffle_ss)

    n = len(y)
    patience_mode = opts.stopping == "patience"
    if patience_mode and n >= 2:
        perm = np.random.default_rng(split_ss).permutation(n)
        n_val = min(n - 1, max(1, int(round(opts.validation_fraction * n))))
        val_idx, tr_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    else:
        val_idx, tr_idx = None, np.arange(n)
    X_tr, y_tr = X[tr_idx], y[tr_idx]
    X_val = y_val = None
    if val_idx is not None:
        X_val, y_val = X[val_idx], y[val_idx]

    patience = opts.patience if opts.patience is not None else DEFAULT_PATIENCE[fam]
    tol = opts.tol if opts.tol is not None else DEFAULT_TOL[fam]
    max_epochs = opts.fixed_epochs if not patience_mode else opts.max_epochs

    state = AdamState()
    train_hist, val_hist = [], []
    best_val, best_epoch, best_params = math.inf, 0, params
    epoch = 0
    while max_epochs is None or epoch < max_epochs:
        epoch += 1
        order = shuffle_rng.permutation(len(y_tr))
        seen, running = 0, 0.0
        for s in range(0, len(order), opts.batch_size):
            idx = order[s:s + opts.batch_size]
            loss, grads = loss_and_grads(fam, params, X_tr[idx], y_tr[idx])
            if not math.isfinite(loss):
                raise DivergenceError(epoch)
            params, state = adam_step(params, grads, state, opts.adam)
            running += loss * len(idx)
            seen += len(idx)
        train_hist.append(running / seen)
        if X_val is None:
            continue
        val = _batch_loss(fam, params, X_val, y_val)
        if not math.isfinite(val):
            raise DivergenceError(epoch, f"non-finite validation loss at epoch {epoch}")
        val_hist.append(val)
        if val < best_val - tol:
            best_val, best_epoch, best_params = val, epoch, params
        elif epoch - best_epoch >= patience:
            break

    meta = {"epochs_run": epoch, "final_train_loss": train_hist[-1] if train_hist else None}
    if X_val is not None:
        params = best_params
        meta.update(best_epoch=best_epoch, best_val_loss=best_val, val_loss_history=val_hist)
    else:
        meta["best_epoch"] = epoch
    meta["train_loss_history"] = train_hist
    log.debug("%s trained %d epochs (best %s)", fam, epoch, meta.get("best_epoch"))
    return TrainedModel(config, NeuralNet(fam, params), layout, meta)


def predict(model: TrainedModel, sample: Sample | np.ndarray) -> float:
    """Scalar prediction in transformed target space for one window."""
    X = sample.inputs if isinstance(sample, Sample) else np.asarray(sample, dtype=float)
    if X.ndim != 2:
        raise ShapeError(f"a single window must be 2-D, got shape {X.shape}")
    return float(model.predict_batch(X[None])[0])


def predict_samples(model: TrainedModel, samples: Sequence[Sample]) -> np.ndarray:
    X, _ = stack_samples(samples)
    return model.predict_batch(X)


def options_to_dict(opts: TrainOptions) -> dict:
    d = asdict(opts)
    return d


def options_from_dict(d: dict | None) -> TrainOptions:
    if not d:
        return TrainOptions()
    d = dict(d)
    adam = AdamHyper(**d.pop("adam", {}))
    return TrainOptions(adam=adam, **d)
