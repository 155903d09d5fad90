"""Train/validation/test protocol: stratified splits, resampling, weights."""

from __future__ import annotations

import random
from collections.abc import Mapping, Sequence

import numpy as np

FRACTIONS = (0.4, 0.3, 0.3)
RESAMPLE_BOUNDS = (300, 1500)
SPLIT_NAMES = ("train", "val", "test")


class EmptyClass(Exception):
    """A requested class has no labeled seeds at all."""


def make_splits(labels_by_seed: Mapping[int, str],
                fractions: Sequence[float] = FRACTIONS,
                rng_seed: int = 0) -> dict[str, list[int]]:
    """Stratified split of labeled seeds into train/val/test.

    Each class is shuffled and cut independently so every split sees the
    same class mix.  Within a class the three counts are the largest-
    remainder rounding of ``fractions``, which keeps the totals exact even
    for tiny classes.  A single-member class cannot be split, so its one
    seed goes to train: better one training example than a test singleton
    no model ever saw the label of.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions) \
            or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be 3 positives summing to 1, "
                         f"got {fractions!r}")
    by_class: dict[str, list[int]] = {}
    for seed in sorted(labels_by_seed):
        by_class.setdefault(labels_by_seed[seed], []).append(seed)
    out: dict[str, list[int]] = {name: [] for name in SPLIT_NAMES}
    rng = random.Random(rng_seed)
    for cls in sorted(by_class):
        members = by_class[cls]
        if not members:
            raise EmptyClass(cls)
        rng.shuffle(members)
        if len(members) == 1:
            out["train"].extend(members)
            continue
        counts = _largest_remainder(len(members), fractions)
        cursor = 0
        for name, cnt in zip(SPLIT_NAMES, counts):
            out[name].extend(members[cursor:cursor + cnt])
            cursor += cnt
    for name in SPLIT_NAMES:
        out[name].sort()
    return out


def _largest_remainder(total: int, fractions: Sequence[float]) -> list[int]:
    raw = [total * f for f in fractions]
    counts = [int(r) for r in raw]
    short = total - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (raw[i] - counts[i], -i),
                   reverse=True)
    for i in order[:short]:
        counts[i] += 1
    return counts


def resample(labels_by_seed: Mapping[int, str],
             bounds: tuple[int, int] = RESAMPLE_BOUNDS,
             rng_seed: int = 0) -> list[int]:
    """Rebalance a training set into per-class sizes within ``bounds``.

    Classes below the lower bound are oversampled with replacement up to
    it; classes above the upper bound are undersampled without replacement
    down to it; classes inside the band pass through untouched.  Returns a
    flat seed list (duplicates possible through oversampling).
    """
    lo, hi = bounds
    if not 0 < lo <= hi:
        raise ValueError(f"bad resample bounds {bounds!r}")
    by_class: dict[str, list[int]] = {}
    for seed in sorted(labels_by_seed):
        by_class.setdefault(labels_by_seed[seed], []).append(seed)
    rng = random.Random(rng_seed)
    out: list[int] = []
    for cls in sorted(by_class):
        members = by_class[cls]
        if not members:
            raise EmptyClass(cls)
        if len(members) < lo:
            out.extend(members)
            out.extend(rng.choices(members, k=lo - len(members)))
        elif len(members) > hi:
            out.extend(rng.sample(members, hi))
        else:
            out.extend(members)
    return out


def class_weights(counts: Sequence[int]) -> np.ndarray:
    """Loss weights inversely proportional to class counts, mean exactly 1.

    ``w_i = (1 / c_i) * len(c) / sum(1 / c)``.  Scaling to mean 1 keeps the
    weighted loss on the same scale as the unweighted one, so learning
    rates transfer.
    """
    if len(counts) == 0:
        raise ValueError("no classes")
    if any(c <= 0 for c in counts):
        raise EmptyClass(f"zero-count class in {list(counts)!r}")
    inv = np.array([1.0 / c for c in counts], dtype=np.float64)
    return inv * (len(inv) / inv.sum())
