"""Minimal numpy neural-network kernel for the CRNN shape contract."""
from .layers import (
    ELU,
    BatchNorm,
    BiLSTM,
    Conv2D,
    Dense,
    Dropout,
    FreqAveragePool,
    Layer,
    MaxPoolFreq,
    Normalize,
    Reshape,
    unit_rows,
)
from .model import (
    FILTER_CHOICES,
    POOL_SIZES,
    LayerStack,
    NNConfig,
    OptimConfig,
    TrainingDivergedError,
    TrainResult,
    build_crnn,
    build_toy_head,
    forward,
    grad_check,
    mse_loss,
    predict,
    train_toy_head,
)

__all__ = [
    "ELU", "BatchNorm", "BiLSTM", "Conv2D", "Dense", "Dropout", "FreqAveragePool", "Layer",
    "MaxPoolFreq", "Normalize", "Reshape", "unit_rows", "FILTER_CHOICES", "POOL_SIZES",
    "LayerStack", "NNConfig", "OptimConfig", "TrainingDivergedError", "TrainResult",
    "build_crnn", "build_toy_head", "forward", "grad_check", "mse_loss", "predict",
    "train_toy_head",
]
