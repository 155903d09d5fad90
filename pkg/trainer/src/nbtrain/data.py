"""Batching: neighborhoods to block-diagonal tensors.

Each neighborhood is an independent small graph; a batch stacks them with
disjoint row ranges so one forward pass embeds them all.  Aliases are
global entity ids with no tensor meaning, so rows are indexed by position
and edges are relabeled through each graph's alias->row map.  Every stored
edge enters in both directions: the classifier treats the graph as
undirected.
"""

from __future__ import annotations

from dataclasses import dataclass
from collections.abc import Sequence

import numpy as np
import torch
from torch import Tensor

from .buffers import Neighborhood

CLASSES = ("exchange", "mining", "gambling", "ponzi", "individual",
           "ransomware", "bet")


def class_index(classes: Sequence[str] = CLASSES) -> dict[str, int]:
    return {name: i for i, name in enumerate(classes)}


@dataclass
class Batch:
    x: Tensor            # (N, d) float32 node features
    edge_index: Tensor   # (2, E) long, both directions of every edge
    seed_rows: Tensor    # (B,) long, row of each graph's seed node
    y: Tensor            # (B,) long, class index per seed (-1 if unlabeled)
    seeds: list[int]     # global seed ids, aligned with seed_rows

    @property
    def num_graphs(self) -> int:
        return len(self.seeds)


def collate(neighborhoods: Sequence[Neighborhood],
            class_to_idx: dict[str, int]) -> Batch:
    if not neighborhoods:
        raise ValueError("empty batch")
    feats = []
    edges_src: list[int] = []
    edges_dst: list[int] = []
    seed_rows = []
    targets = []
    seeds = []
    offset = 0
    for nbh in neighborhoods:
        feats.append(nbh.features)
        row_of = {alias: offset + i for i, alias in enumerate(nbh.aliases)}
        for u, v in nbh.edges:
            ru, rv = row_of[u], row_of[v]
            edges_src.append(ru)
            edges_dst.append(rv)
            edges_src.append(rv)
            edges_dst.append(ru)
        srow = row_of[nbh.seed]
        seed_rows.append(srow)
        label = nbh.labels[srow - offset]
        targets.append(class_to_idx.get(label, -1))
        seeds.append(nbh.seed)
        offset += len(nbh.aliases)
    x = torch.from_numpy(np.concatenate(feats, axis=0))
    edge_index = torch.tensor([edges_src, edges_dst], dtype=torch.long) \
        if edges_src else torch.zeros((2, 0), dtype=torch.long)
    return Batch(x=x, edge_index=edge_index,
                 seed_rows=torch.tensor(seed_rows, dtype=torch.long),
                 y=torch.tensor(targets, dtype=torch.long),
                 seeds=seeds)


def minibatches(items: Sequence[Neighborhood], batch_size: int,
                class_to_idx: dict[str, int]):
    """Yield collated batches of at most ``batch_size`` graphs, in order."""
    for lo in range(0, len(items), batch_size):
        yield collate(items[lo:lo + batch_size], class_to_idx)
