"""Gradient-boosted baseline over seed feature rows alone.

The tree model sees only each seed's own feature vector, no neighborhood
structure; the gap between its scores and the graph models' scores is the
measured value of the graph.  Parameters stay at library defaults and are
pinned into the run manifest so a library upgrade that shifts a default
shows up as a manifest diff, not silent drift.
"""

from __future__ import annotations

import numpy as np
from sklearn.ensemble import GradientBoostingClassifier

from .buffers import BufferDir, Neighborhood
from .data import CLASSES, class_index
from .splits import RESAMPLE_BOUNDS, resample


def seed_rows(buffer: BufferDir, copy: int = 0):
    """Feature row and label of every seed in one copy of a buffer.

    The seed's own row is identical across copies (only the surroundings
    are resampled), so copy 0 is canonical.  Returns (seeds, X, labels).
    """
    nbhs = buffer.load_copy(copy)
    seeds = sorted(nbhs)
    X = np.stack([nbhs[s].features[nbhs[s].seed_row] for s in seeds])
    labels = [nbhs[s].labels[nbhs[s].seed_row] for s in seeds]
    return seeds, X.astype(np.float64), labels


def train_gbc(train_buf: BufferDir, classes=CLASSES,
              resample_bounds: tuple[int, int] = RESAMPLE_BOUNDS,
              rng_seed: int = 0):
    """Fit the boosted baseline on the same resampled seed list the graph
    models train on.  Returns (classifier, pinned-parameter dict)."""
    cls_idx = class_index(tuple(classes))
    seeds, X, labels = seed_rows(train_buf)
    stray = sorted({v for v in labels if v not in cls_idx})
    if stray:
        raise ValueError(f"train buffer carries labels outside the class "
                         f"list: {stray}")
    row_of = {s: i for i, s in enumerate(seeds)}
    picked = resample(dict(zip(seeds, labels)), resample_bounds, rng_seed)
    Xr = X[[row_of[s] for s in picked]]
    yr = np.array([cls_idx[labels[row_of[s]]] for s in picked],
                  dtype=np.int64)
    clf = GradientBoostingClassifier(random_state=rng_seed)
    clf.fit(Xr, yr)
    return clf, clf.get_params()


def gbc_infer(clf, n_classes: int = len(CLASSES)):
    """Wrap a fitted classifier as a probability function over
    neighborhoods, padding zero columns for classes absent at fit time."""

    def infer(nbhs: list[Neighborhood]) -> np.ndarray:
        X = np.stack([n.features[n.seed_row] for n in nbhs]) \
            .astype(np.float64)
        raw = clf.predict_proba(X)
        probs = np.zeros((len(nbhs), n_classes), dtype=np.float64)
        for col, cls in enumerate(clf.classes_):
            probs[:, int(cls)] = raw[:, col]
        return probs

    return infer
