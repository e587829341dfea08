from .network import (
    ARCHITECTURE,
    INPUT_CHANNELS,
    INPUT_HEIGHT,
    INPUT_WIDTH,
    OUTPUT_HEIGHT,
    OUTPUT_WIDTH,
    SKIP_SOURCE,
    TOTAL_PARAMS,
    DeflectionNet,
    NetworkError,
    backward,
    build_network,
    forward,
    load_weights,
    mse_loss,
    save_weights,
)
from .training import Adam, TrainConfig, TrainingError, mirror_expand, predict_deflection, train

__all__ = [
    "ARCHITECTURE",
    "TOTAL_PARAMS",
    "SKIP_SOURCE",
    "INPUT_HEIGHT",
    "INPUT_WIDTH",
    "INPUT_CHANNELS",
    "OUTPUT_HEIGHT",
    "OUTPUT_WIDTH",
    "DeflectionNet",
    "NetworkError",
    "build_network",
    "forward",
    "backward",
    "mse_loss",
    "save_weights",
    "load_weights",
    "TrainConfig",
    "TrainingError",
    "Adam",
    "train",
    "predict_deflection",
    "mirror_expand",
]
