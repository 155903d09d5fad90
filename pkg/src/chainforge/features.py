"""Feature derivation and normalization for node vectors.

On top of the raw per-node attributes this module derives averages,
ratios, an age in blocks (span between the earliest and latest transfer),
rate features (attribute divided by age), and USD conversions using the
median daily price over the node's activity period. The exact feature
list and order are frozen in a versioned manifest.

Normalization is a five-step pipeline fitted on training data only:
zeros become missing, values are log-transformed, scaled between a lower
anchor (minimum, or the 5th percentile for value-denominated features)
and the 95th percentile, clipped to [0, 1], and missing entries finally
become 0. Features whose anchors coincide are degenerate and map every
present value to 0.5.
"""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (EmptyTrainingSplit, MalformedRow, ManifestMismatch,
                     MissingRates, NoActivity)
from .nodes import NodeRecord

MANIFEST_VERSION = "fv1"

_BASE_FEATURES = (
    "degree", "degree_in", "degree_out",
    "total_transaction_in", "total_transaction_out",
    "first_transaction_in", "last_transaction_in",
    "first_transaction_out", "last_transaction_out",
    "min_sent", "max_sent", "total_sent",
    "min_received", "max_received", "total_received",
    "cluster_size", "cluster_num_edges", "cluster_num_cc",
    "cluster_num_nodes_in_cc",
)
_DERIVED_FEATURES = (
    "avg_received", "avg_sent", "non_isolated_proportion",
    "degree_out_in_ratio", "time_before_first_out", "age",
)
_RATE_FEATURES = (
    "total_transaction_in_rate", "total_transaction_out_rate",
    "degree_rate", "degree_in_rate", "degree_out_rate",
    "cluster_size_rate", "cluster_num_edges_rate", "cluster_num_cc_rate",
    "cluster_num_nodes_in_cc_rate",
)
_USD_FEATURES = (
    "min_sent_usd", "max_sent_usd", "total_sent_usd",
    "min_received_usd", "max_received_usd", "total_received_usd",
    "avg_sent_usd", "avg_received_usd",
)

FEATURE_NAMES: tuple[str, ...] = (
    _BASE_FEATURES + _DERIVED_FEATURES + _RATE_FEATURES + _USD_FEATURES
)
NUM_FEATURES = len(FEATURE_NAMES)

_VALUE_NAMES = frozenset(
    ("min_sent", "max_sent", "total_sent",
     "min_received", "max_received", "total_received",
     "avg_sent", "avg_received") + _USD_FEATURES
)
FEATURE_KINDS: tuple[str, ...] = tuple(
    "value" if name in _VALUE_NAMES else "other" for name in FEATURE_NAMES
)
VALUE_FEATURE_MASK = np.array([k == "value" for k in FEATURE_KINDS])

_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}


def feature_manifest() -> dict:
    return {
        "version": MANIFEST_VERSION,
        "names": list(FEATURE_NAMES),
        "kinds": list(FEATURE_KINDS),
    }


class RatesTable:
    """Daily BTC/USD prices with range-median lookups in satoshi terms."""

    def __init__(self, prices: Mapping[date, float]) -> None:
        for day, price in prices.items():
            if not price > 0:
                raise MissingRates(f"non-positive price on {day}")
        self._prices = dict(prices)
        self._median_cache: dict[tuple[int, int], float] = {}

    @classmethod
    def from_csv(cls, path) -> "RatesTable":
        prices: dict[date, float] = {}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["date", "usd_per_btc"]:
                raise MalformedRow(f"unexpected rates header: {header!r}")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 2:
                    raise MalformedRow(f"rates line {lineno}: {row!r}")
                prices[date.fromisoformat(row[0])] = float(row[1])
        return cls(prices)

    def price(self, day: date) -> float:
        try:
            return self._prices[day]
        except KeyError:
            raise MissingRates(f"no price for {day}") from None

    def median_satoshi_price(self, first_day: date, last_day: date) -> float:
        """Median of the daily USD-per-satoshi price over a closed range."""
        key = (first_day.toordinal(), last_day.toordinal())
        cached = self._median_cache.get(key)
        if cached is not None:
            return cached
        if last_day < first_day:
            raise MissingRates(f"empty day range {first_day}..{last_day}")
        days = (last_day - first_day).days + 1
        prices = [self.price(first_day + timedelta(days=i)) for i in range(days)]
        value = statistics.median(prices) / 1e8
        self._median_cache[key] = value
        return value


def compute_age(node: NodeRecord) -> int:
    """Block span between the node's earliest and latest transfer."""
    marks = [m for m in (node.first_transaction_in, node.last_transaction_in,
                         node.first_transaction_out, node.last_transaction_out)
             if m is not None]
    if not marks:
        raise NoActivity(f"alias {node.alias} has no transfers")
    return max(marks) - min(marks)


def derive_features(node: NodeRecord, rates: RatesTable,
                    block_dates: Mapping[int, date] | Sequence[date],
                    ) -> np.ndarray:
    """Raw (unnormalized) feature vector of one node; missing = NaN."""
    v = np.full(NUM_FEATURES, np.nan)

    def put(name: str, value) -> None:
        v[_INDEX[name]] = np.nan if value is None else float(value)

    for name in _BASE_FEATURES:
        put(name, getattr(node, name))

    if node.total_transaction_in:
        put("avg_received", node.total_received / node.total_transaction_in)
    if node.total_transaction_out:
        put("avg_sent", node.total_sent / node.total_transaction_out)
    if node.cluster_size:
        put("non_isolated_proportion",
            node.cluster_num_nodes_in_cc / node.cluster_size)
    if node.degree_in:
        put("degree_out_in_ratio", node.degree_out / node.degree_in)
    if node.first_transaction_out is not None and \
            node.first_transaction_in is not None:
        put("time_before_first_out",
            node.first_transaction_out - node.first_transaction_in)

    try:
        age = compute_age(node)
    except NoActivity:
        return v
    put("age", age)

    if age > 0:
        for name in _RATE_FEATURES:
            base = name[:-len("_rate")]
            raw = v[_INDEX[base]]
            if not math.isnan(raw):
                put(name, raw / age)

    marks = [m for m in (node.first_transaction_in, node.first_transaction_out)
             if m is not None]
    last_marks = [m for m in (node.last_transaction_in, node.last_transaction_out)
                  if m is not None]
    first_day = block_dates[min(marks)]
    last_day = block_dates[max(last_marks)]
    usd = rates.median_satoshi_price(first_day, last_day)
    for name in _USD_FEATURES:
        base = name[:-len("_usd")]
        raw = v[_INDEX[base]]
        if not math.isnan(raw):
            put(name, raw * usd)
    return v


def derive_feature_matrix(table: Mapping[str, np.ndarray], rates: RatesTable,
                          block_dates: Sequence[date]) -> np.ndarray:
    """Vectorized derive_features over a whole node table."""
    n = len(table["alias"])
    m = np.full((n, NUM_FEATURES), np.nan)

    def col(name: str) -> np.ndarray:
        return m[:, _INDEX[name]]

    for name in _BASE_FEATURES:
        raw = np.asarray(table[name], dtype=np.float64).copy()
        if name.startswith(("first_", "last_")):
            raw[raw < 0] = np.nan      # -1 marks no activity on that side
        col(name)[:] = raw

    with np.errstate(invalid="ignore", divide="ignore"):
        cnt_in = col("total_transaction_in")
        cnt_out = col("total_transaction_out")
        np.divide(col("total_received"), cnt_in, out=col("avg_received"),
                  where=cnt_in > 0)
        np.divide(col("total_sent"), cnt_out, out=col("avg_sent"),
                  where=cnt_out > 0)
        size = col("cluster_size")
        np.divide(col("cluster_num_nodes_in_cc"), size,
                  out=col("non_isolated_proportion"), where=size > 0)
        din = col("degree_in")
        np.divide(col("degree_out"), din, out=col("degree_out_in_ratio"),
                  where=din > 0)
        both = ~np.isnan(col("first_transaction_out")) & \
            ~np.isnan(col("first_transaction_in"))
        np.subtract(col("first_transaction_out"), col("first_transaction_in"),
                    out=col("time_before_first_out"), where=both)

        first = np.fmin(col("first_transaction_in"), col("first_transaction_out"))
        last = np.fmax(col("last_transaction_in"), col("last_transaction_out"))
        col("age")[:] = last - first

        age = col("age")
        pos_age = age > 0
        for name in _RATE_FEATURES:
            base = col(name[:-len("_rate")])
            np.divide(base, age, out=col(name), where=pos_age & ~np.isnan(base))

    active = ~np.isnan(first)
    usd = np.full(n, np.nan)
    first_blocks = np.where(active, first, 0).astype(np.int64)
    last_blocks = np.where(active, last, 0).astype(np.int64)
    for i in np.flatnonzero(active):
        usd[i] = rates.median_satoshi_price(block_dates[first_blocks[i]],
                                            block_dates[last_blocks[i]])
    for name in _USD_FEATURES:
        base = col(name[:-len("_usd")])
        col(name)[:] = base * usd
    return m


@dataclass
class NormalizationConstants:
    names: tuple[str, ...]
    kinds: tuple[str, ...]
    q_low: np.ndarray        # log-space lower anchor per feature
    q95: np.ndarray          # log-space 95th percentile per feature
    degenerate: np.ndarray   # bool per feature
    version: str = MANIFEST_VERSION

    def __post_init__(self) -> None:
        ok = self.degenerate | (self.q_low <= self.q95)
        if not bool(np.all(ok)):
            raise ManifestMismatch("lower anchor exceeds q95")


def _percentile(values: np.ndarray, p: float) -> float:
    """Linear-interpolation percentile over sorted values."""
    srt = np.sort(values)
    if len(srt) == 1:
        return float(srt[0])
    h = (len(srt) - 1) * (p / 100.0)
    lo = int(math.floor(h))
    hi = min(lo + 1, len(srt) - 1)
    frac = h - lo
    return float(srt[lo] + (srt[hi] - srt[lo]) * frac)


def fit_normalization(train_vectors: Iterable[Sequence[float]] | np.ndarray,
                      value_mask: np.ndarray = VALUE_FEATURE_MASK,
                      names: tuple[str, ...] = FEATURE_NAMES,
                      kinds: tuple[str, ...] = FEATURE_KINDS,
                      ) -> NormalizationConstants:
    """Per-feature log-space anchors from the training split only.

    Zeros, negatives, and missing entries are dropped before the log
    transform; a feature left without positive values, or whose two
    anchors coincide, is flagged degenerate.
    """
    matrix = np.asarray(train_vectors, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] == 0:
        raise EmptyTrainingSplit("no training vectors to fit on")
    d = matrix.shape[1]
    if d != len(names):
        raise ManifestMismatch(f"{d} columns vs {len(names)} feature names")

    q_low = np.zeros(d)
    q95 = np.zeros(d)
    degenerate = np.zeros(d, dtype=bool)
    for j in range(d):
        x = matrix[:, j]
        x = x[np.isfinite(x) & (x > 0)]
        if len(x) == 0:
            degenerate[j] = True
            continue
        logs = np.log(x)
        q_low[j] = _percentile(logs, 5.0) if value_mask[j] else float(np.min(logs))
        q95[j] = _percentile(logs, 95.0)
        if q_low[j] >= q95[j]:
            degenerate[j] = True
            q95[j] = q_low[j]
    return NormalizationConstants(tuple(names), tuple(kinds), q_low, q95,
                                  degenerate)


def normalize(vector: Sequence[float] | np.ndarray,
              constants: NormalizationConstants) -> np.ndarray:
    """Apply the normalization pipeline to one vector (result in [0, 1])."""
    return normalize_matrix(np.asarray(vector, dtype=np.float64)[None, :],
                            constants)[0]


def normalize_matrix(matrix: np.ndarray,
                     constants: NormalizationConstants) -> np.ndarray:
    if constants.version != MANIFEST_VERSION:
        raise ManifestMismatch(f"constants fitted under {constants.version!r}, "
                               f"code expects {MANIFEST_VERSION!r}")
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape[1] != len(constants.names):
        raise ManifestMismatch(f"vector has {matrix.shape[1]} entries, "
                               f"constants cover {len(constants.names)}")
    present = np.isfinite(matrix) & (matrix > 0)
    out = np.zeros_like(matrix, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        logs = np.where(present, np.log(np.where(present, matrix, 1.0)), np.nan)
        span = constants.q95 - constants.q_low
        span = np.where(span > 0, span, 1.0)
        scaled = (logs - constants.q_low) / span
        scaled = np.clip(scaled, 0.0, 1.0)
    scaled = np.where(constants.degenerate[None, :], 0.5, scaled)
    out[present] = scaled[present]
    return out


def write_constants(path, constants: NormalizationConstants) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "kind", "q_low", "q95", "degenerate"])
        for i, name in enumerate(constants.names):
            writer.writerow([
                name, constants.kinds[i],
                repr(float(constants.q_low[i])), repr(float(constants.q95[i])),
                "1" if constants.degenerate[i] else "0",
            ])


def read_constants(path) -> NormalizationConstants:
    names: list[str] = []
    kinds: list[str] = []
    q_low: list[float] = []
    q95: list[float] = []
    degenerate: list[bool] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["name", "kind", "q_low", "q95", "degenerate"]:
            raise MalformedRow(f"unexpected constants header: {header!r}")
        for row in reader:
            if not row:
                continue
            if len(row) != 5:
                raise MalformedRow(f"constants row: {row!r}")
            names.append(row[0])
            kinds.append(row[1])
            q_low.append(float(row[2]))
            q95.append(float(row[3]))
            degenerate.append(row[4] == "1")
    return NormalizationConstants(tuple(names), tuple(kinds),
                                  np.array(q_low), np.array(q95),
                                  np.array(degenerate, dtype=bool))


def write_matrix(path, aliases: np.ndarray, matrix: np.ndarray) -> None:
    """Feature matrix CSV: manifest comment line, header, one row per alias."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# manifest {MANIFEST_VERSION}\n")
        writer = csv.writer(fh)
        writer.writerow(["alias", *FEATURE_NAMES])
        for i in range(len(aliases)):
            writer.writerow([int(aliases[i]),
                             *(repr(float(x)) for x in matrix[i])])


def read_matrix(path) -> tuple[np.ndarray, np.ndarray, str]:
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("# manifest "):
            raise ManifestMismatch("feature matrix lacks a manifest line")
        version = first[len("# manifest "):]
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["alias", *FEATURE_NAMES]:
            raise ManifestMismatch("feature matrix header mismatch")
        aliases: list[int] = []
        rows: list[list[float]] = []
        for row in reader:
            if not row:
                continue
            aliases.append(int(row[0]))
            rows.append([float(x) for x in row[1:]])
    matrix = np.array(rows, dtype=np.float64) if rows else \
        np.empty((0, NUM_FEATURES))
    return np.array(aliases, dtype=np.int64), matrix, version
