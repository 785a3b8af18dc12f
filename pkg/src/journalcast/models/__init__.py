"""Regression models with a shared train/predict contract."""

from .configs import (
    CONFIG_TYPES,
    FAMILIES,
    GRIDS,
    ITERATIVE_FAMILIES,
    SEEDED_FAMILIES,
    SEQUENCE_FAMILIES,
    DecisionTreeConfig,
    KNNConfig,
    LinearRegressionConfig,
    LSTMConfig,
    MLPConfig,
    ModelConfig,
    RandomForestConfig,
    RNNConfig,
    config_from_dict,
    config_label,
    config_to_dict,
    model_grid,
    parameter_count,
)
from .nn import lstm_cell_step
from .optim import AdamHyper, AdamState, adam_step, mse_loss
from .training import (
    TrainedModel,
    TrainOptions,
    options_from_dict,
    options_to_dict,
    predict,
    predict_samples,
    train,
    train_arrays,
)

__all__ = [
    "CONFIG_TYPES", "FAMILIES", "GRIDS", "ITERATIVE_FAMILIES", "SEEDED_FAMILIES",
    "SEQUENCE_FAMILIES",
    "DecisionTreeConfig", "KNNConfig", "LinearRegressionConfig", "LSTMConfig", "MLPConfig",
    "ModelConfig", "RandomForestConfig", "RNNConfig", "config_from_dict", "config_label",
    "config_to_dict", "model_grid", "parameter_count", "lstm_cell_step", "AdamHyper",
    "AdamState", "adam_step", "mse_loss", "TrainedModel", "TrainOptions", "options_from_dict",
    "options_to_dict", "predict", "predict_samples", "train", "train_arrays",
]
