"""Test-set evaluation over every sampled copy of each seed.

A seed's prediction is the argmax of the MEAN class-probability vector
across all copies in the test buffer, never the argmax of any single copy:
each copy is one random sample of the neighborhood, and averaging the
probabilities integrates that sampling noise out.  Ties break toward the
lowest class index so reruns agree bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from collections.abc import Callable, Sequence

import numpy as np

from .buffers import BufferDir, BufferError, Neighborhood
from .data import CLASSES, class_index, collate

InferFn = Callable[[list[Neighborhood]], np.ndarray]


@dataclass
class EvalReport:
    classes: tuple[str, ...]
    support: np.ndarray        # (C,) true seeds per class
    per_class_f1: np.ndarray   # (C,)
    macro_f1: float
    confusion: np.ndarray      # (C, C) rows = true class, row-normalized
    copies: int
    n_seeds: int

    def validate(self) -> None:
        C = len(self.classes)
        assert self.per_class_f1.shape == (C,) \
            and self.confusion.shape == (C, C)
        assert np.all((self.per_class_f1 >= 0) & (self.per_class_f1 <= 1))
        for i in range(C):
            row = self.confusion[i].sum()
            if self.support[i] > 0:
                if abs(row - 1.0) > 1e-9:
                    raise AssertionError(
                        f"confusion row {i} sums to {row!r}, not 1")
            elif row != 0.0:
                raise AssertionError(f"unsupported row {i} is non-zero")

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "support": self.support.tolist(),
            "per_class_f1": self.per_class_f1.tolist(),
            "macro_f1": self.macro_f1,
            "confusion": self.confusion.tolist(),
            "copies": self.copies,
            "n_seeds": self.n_seeds,
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def model_infer(model) -> InferFn:
    """Wrap a SeedClassifier as a probability function over neighborhoods."""
    import torch

    idx = class_index()

    @torch.no_grad()
    def infer(nbhs: list[Neighborhood]) -> np.ndarray:
        model.eval()
        batch = collate(nbhs, idx)
        logits = model(batch.x, batch.edge_index, batch.seed_rows)
        return torch.softmax(logits, dim=1).numpy().astype(np.float64)

    return infer


def evaluate(infer: InferFn, test_buf: BufferDir,
             classes: Sequence[str] = CLASSES,
             batch_size: int = 256) -> EvalReport:
    cls_idx = class_index(tuple(classes))
    n_cls = len(classes)
    labels = test_buf.labels_by_seed()
    stray = sorted({v for v in labels.values() if v not in cls_idx})
    if stray:
        raise ValueError(f"test buffer carries labels outside the class "
                         f"list: {stray}")
    seeds = sorted(labels)
    pos = {s: i for i, s in enumerate(seeds)}

    sums = np.zeros((len(seeds), n_cls), dtype=np.float64)
    for copy in range(test_buf.copies):
        nbhs = test_buf.load_copy(copy)
        if sorted(nbhs) != seeds:
            raise BufferError(f"copy {copy} covers a different seed set")
        ordered = [nbhs[s] for s in seeds]
        for lo in range(0, len(ordered), batch_size):
            chunk = ordered[lo:lo + batch_size]
            probs = np.asarray(infer(chunk), dtype=np.float64)
            if probs.shape != (len(chunk), n_cls):
                raise ValueError(f"infer returned {probs.shape}, expected "
                                 f"{(len(chunk), n_cls)}")
            for nbh, row in zip(chunk, probs):
                sums[pos[nbh.seed]] += row
    mean = sums / test_buf.copies
    # np.argmax returns the first maximum, which is the lowest class index.
    y_pred = mean.argmax(axis=1)
    y_true = np.array([cls_idx[labels[s]] for s in seeds], dtype=np.int64)

    from sklearn.metrics import confusion_matrix, f1_score
    per_class = f1_score(y_true, y_pred, labels=list(range(n_cls)),
                         average=None, zero_division=0)
    counts = confusion_matrix(y_true, y_pred,
                              labels=list(range(n_cls))).astype(np.float64)
    support = counts.sum(axis=1).astype(np.int64)
    confusion = np.zeros_like(counts)
    for i in range(n_cls):
        if support[i] > 0:
            confusion[i] = counts[i] / support[i]
    report = EvalReport(classes=tuple(classes), support=support,
                        per_class_f1=np.asarray(per_class, dtype=np.float64),
                        macro_f1=float(np.mean(per_class)),
                        confusion=confusion, copies=test_buf.copies,
                        n_seeds=len(seeds))
    report.validate()
    return report


def majority_baseline(train_buf: BufferDir, test_buf: BufferDir,
                      classes: Sequence[str] = CLASSES) -> EvalReport:
    """Score of always predicting the most common training class."""
    cls_idx = class_index(tuple(classes))
    counts = np.zeros(len(classes), dtype=np.int64)
    for label in train_buf.labels_by_seed().values():
        counts[cls_idx[label]] += 1
    winner = int(counts.argmax())

    def infer(nbhs: list[Neighborhood]) -> np.ndarray:
        probs = np.zeros((len(nbhs), len(classes)))
        probs[:, winner] = 1.0
        return probs

    return evaluate(infer, test_buf, classes)
