"""Training loop: weighted cross-entropy over rotating buffer copies.

Every neighborhood buffer holds several independently sampled copies of
each seed's surroundings.  Training picks one train copy and one val copy,
runs on them for ``rotation_period`` epochs, then re-picks at random; the
rotation is cheap augmentation that stops the model memorizing one
particular sample of each neighborhood.  The returned model carries the
weights of the epoch with the best validation macro-F1, not the last one.
"""

from __future__ import annotations

import copy as copymod
import random
from dataclasses import dataclass, field, asdict

import numpy as np
import torch
from torch import nn

from .buffers import BufferDir, Neighborhood
from .data import CLASSES, Batch, class_index, collate, minibatches
from .models import (DROPOUT, GAT_HEADS, HIDDEN, LAYERS, MODEL_NAMES,
                     SeedClassifier)
from .splits import RESAMPLE_BOUNDS, class_weights, resample


@dataclass(frozen=True)
class TrainConfig:
    classes: tuple[str, ...] = CLASSES
    batch_size: int = 32
    lr: float = 1e-4
    gat_lr: float = 3e-4          # attention heads need the hotter rate
    hidden: int = HIDDEN
    layers: int = LAYERS
    dropout: float = DROPOUT
    heads: int = GAT_HEADS
    resample_bounds: tuple[int, int] = RESAMPLE_BOUNDS
    rotation_period: int = 100
    # No principled epoch budget exists for arbitrary data; 3000 is a
    # ceiling, the best-validation checkpoint decides what ships.
    max_epochs: int = 3000
    patience: int | None = None   # epochs without val improvement; None = off
    rng_seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 \
                or self.rotation_period < 1:
            raise ValueError("batch_size, max_epochs, rotation_period "
                             "must be positive")
        if not 0 < self.resample_bounds[0] <= self.resample_bounds[1]:
            raise ValueError(f"bad resample bounds {self.resample_bounds!r}")
        if len(set(self.classes)) != len(self.classes) or not self.classes:
            raise ValueError("classes must be non-empty and unique")

    def rate_for(self, model: str) -> float:
        return self.gat_lr if model == "gat" else self.lr


@dataclass
class TrainResult:
    model: SeedClassifier
    model_name: str
    best_val_f1: float
    best_epoch: int
    epochs_run: int
    history: list[dict] = field(default_factory=list)

    def manifest(self, config: TrainConfig) -> dict:
        return {
            "model": self.model_name,
            "lr": config.rate_for(self.model_name),
            "best_val_macro_f1": self.best_val_f1,
            "best_epoch": self.best_epoch,
            "epochs_run": self.epochs_run,
            "config": asdict(config),
        }


def _check_labels(labels: dict[int, str], classes: tuple[str, ...],
                  split: str) -> None:
    stray = sorted({lab for lab in labels.values() if lab not in classes})
    if stray:
        raise ValueError(f"{split} buffer carries labels outside the class "
                         f"list: {stray}")


def macro_f1(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> float:
    """Unweighted mean F1 over all class indices, absent classes scoring 0."""
    from sklearn.metrics import f1_score
    return float(f1_score(y_true, y_pred, labels=list(range(n_classes)),
                          average="macro", zero_division=0))


@torch.no_grad()
def _validate(model: SeedClassifier, nbhs: list[Neighborhood],
              cls_idx: dict[str, int]) -> float:
    model.eval()
    preds: list[np.ndarray] = []
    truth: list[np.ndarray] = []
    for batch in minibatches(nbhs, 256, cls_idx):
        logits = model(batch.x, batch.edge_index, batch.seed_rows)
        preds.append(logits.argmax(dim=1).numpy())
        truth.append(batch.y.numpy())
    model.train()
    return macro_f1(np.concatenate(truth), np.concatenate(preds),
                    len(cls_idx))


def train(model_name: str, train_buf: BufferDir, val_buf: BufferDir,
          config: TrainConfig = TrainConfig()) -> TrainResult:
    if model_name not in MODEL_NAMES:
        raise ValueError(f"unknown model {model_name!r}")
    cls_idx = class_index(config.classes)
    train_labels = train_buf.labels_by_seed()
    val_labels = val_buf.labels_by_seed()
    _check_labels(train_labels, config.classes, "train")
    _check_labels(val_labels, config.classes, "val")

    resampled = resample(train_labels, config.resample_bounds,
                         config.rng_seed)
    counts = [sum(1 for s in resampled if train_labels[s] == c)
              for c in config.classes]
    weights = torch.tensor(class_weights(counts), dtype=torch.float32)

    torch.manual_seed(config.rng_seed)
    rng = random.Random(config.rng_seed)
    model = SeedClassifier(model_name, in_dim=train_buf.num_features,
                           n_classes=len(config.classes),
                           hidden=config.hidden, layers=config.layers,
                           dropout=config.dropout, heads=config.heads)
    optim = torch.optim.Adam(model.parameters(),
                             lr=config.rate_for(model_name))
    criterion = nn.CrossEntropyLoss(weight=weights)

    train_nbhs: dict[int, Neighborhood] = {}
    val_nbhs: list[Neighborhood] = []

    best_f1 = -1.0
    best_epoch = -1
    best_state: dict = {}
    history: list[dict] = []
    model.train()
    epoch = 0
    for epoch in range(config.max_epochs):
        if epoch % config.rotation_period == 0:
            train_nbhs = train_buf.load_copy(rng.randrange(train_buf.copies))
            val_nbhs = list(
                val_buf.load_copy(rng.randrange(val_buf.copies)).values())
        order = resampled[:]
        rng.shuffle(order)
        total_loss = 0.0
        n_batches = 0
        for lo in range(0, len(order), config.batch_size):
            batch = collate([train_nbhs[s]
                             for s in order[lo:lo + config.batch_size]],
                            cls_idx)
            optim.zero_grad()
            logits = model(batch.x, batch.edge_index, batch.seed_rows)
            loss = criterion(logits, batch.y)
            loss.backward()
            optim.step()
            total_loss += float(loss.detach())
            n_batches += 1
        val_f1 = _validate(model, val_nbhs, cls_idx)
        history.append({"epoch": epoch, "loss": total_loss / n_batches,
                        "val_macro_f1": val_f1})
        if val_f1 > best_f1:
            best_f1 = val_f1
            best_epoch = epoch
            best_state = copymod.deepcopy(model.state_dict())
        elif config.patience is not None \
                and epoch - best_epoch >= config.patience:
            break
    model.load_state_dict(best_state)
    model.eval()
    return TrainResult(model=model, model_name=model_name,
                       best_val_f1=best_f1, best_epoch=best_epoch,
                       epochs_run=epoch + 1, history=history)
