"""Node-classification baselines over pre-sampled neighborhood buffers."""

from .buffers import BufferDir, BufferError, BufferMissing, Neighborhood
from .data import CLASSES, Batch, class_index, collate
from .evaluate import EvalReport, evaluate, majority_baseline, model_infer
from .gbc import gbc_infer, seed_rows, train_gbc
from .models import MODEL_NAMES, SeedClassifier
from .splits import (EmptyClass, class_weights, make_splits, resample,
                     FRACTIONS, RESAMPLE_BOUNDS)
from .train import TrainConfig, TrainResult, train

__all__ = [
    "BufferDir", "BufferError", "BufferMissing", "Neighborhood",
    "CLASSES", "Batch", "class_index", "collate",
    "EvalReport", "evaluate", "majority_baseline", "model_infer",
    "gbc_infer", "seed_rows", "train_gbc",
    "MODEL_NAMES", "SeedClassifier",
    "EmptyClass", "class_weights", "make_splits", "resample",
    "FRACTIONS", "RESAMPLE_BOUNDS",
    "TrainConfig", "TrainResult", "train",
]
