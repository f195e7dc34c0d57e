"""Absolute-value activation networks: numpy layers, staircase training, diagnostics."""

from . import checkpoint, data, ensemble, models, optim, probe, stats, trainer
from .models import build_catalog, build_mlp, count_params, init_params
from .trainer import TrainConfig, train

__version__ = "0.1.0"

__all__ = ["checkpoint", "data", "ensemble", "models", "optim", "probe", "stats", "trainer",
           "build_catalog", "build_mlp", "count_params", "init_params", "TrainConfig", "train"]
