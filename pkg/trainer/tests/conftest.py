"""Shared helpers: an independent writer for buffer directories.

Tests write neighborhood files with these plain-text helpers and read them
back through the package, so the reader is checked against hand-built
bytes rather than against its own output.
"""

import json
from pathlib import Path

import numpy as np
import pytest

CONFIG16 = "00112233aabbccdd"


def render_nbr(seed, copy, rows, edges, config=CONFIG16):
    """Neighborhood file text. rows: (alias, label, feature list)."""
    lines = ["# neighborhood nb1", f"seed,{seed}", f"copy,{copy}",
             f"config,{config}", f"nodes,{len(rows)}"]
    for alias, label, feats in rows:
        lines.append(",".join([str(alias), label]
                              + [repr(float(v)) for v in feats]))
    lines.append(f"edges,{len(edges)}")
    for u, v in edges:
        lines.append(f"{u},{v}")
    return "\n".join(lines) + "\n"


def write_buffer(root: Path, split, graphs, copies, num_features,
                 config=CONFIG16):
    """Build a buffer directory.

    graphs: dict seed -> (label, maker) where maker(copy) returns
    (rows, edges) for that copy.  Returns the directory path.
    """
    bdir = root / split
    bdir.mkdir(parents=True, exist_ok=True)
    entries = []
    for seed in sorted(graphs):
        label, maker = graphs[seed]
        for copy in range(copies):
            rows, edges = maker(copy)
            name = f"s{seed}_c{copy}.nbr"
            (bdir / name).write_text(
                render_nbr(seed, copy, rows, edges, config),
                encoding="ascii")
            entries.append({"seed": seed, "copy": copy, "file": name,
                            "label": label})
    manifest = {
        "version": "nb1",
        "split": split,
        "copies": copies,
        "config": {"k_max": 2, "fanouts": [5, 3],
                   "high_degree_threshold": 100000,
                   "edge_sample_cap": 100000, "rng_seed": 0},
        "config_hash": config,
        "num_features": num_features,
        "entries": entries,
    }
    with open(bdir / "manifest.json", "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return bdir


def star_maker(rng, center_alias, label, label_feat, n_neigh=3, d=6,
               wobble=0.05):
    """Per-copy star graph whose neighbor features point at one value.

    The center row is pure noise; neighbors carry ``label_feat`` in
    feature 0 plus per-copy noise, so only aggregation over the
    neighborhood can recover the class.
    """
    def maker(copy):
        sub = np.random.default_rng([rng, center_alias, copy])
        aliases = [center_alias] + [center_alias * 1000 + 1 + j
                                    for j in range(n_neigh)]
        rows = []
        feats = sub.uniform(0, 1, d)
        rows.append((aliases[0], label, list(feats)))
        for j in range(1, n_neigh + 1):
            feats = sub.uniform(0, wobble, d)
            feats[0] = label_feat + sub.uniform(-wobble, wobble)
            rows.append((aliases[j], "", list(feats)))
        edges = sorted((min(aliases[0], a), max(aliases[0], a))
                       for a in aliases[1:])
        return rows, edges
    return maker


@pytest.fixture(scope="session")
def community_buffers(tmp_path_factory):
    """Tiny 3-class dataset: train/val/test buffer dirs with 2 copies.

    Neighbor feature 0 sits at 0/1/2 by class; seed rows are noise.
    Small enough that a training run takes seconds.
    """
    root = tmp_path_factory.mktemp("community")
    classes = ("exchange", "mining", "gambling")
    anchors = (0.0, 1.0, 2.0)

    def graphs(start, per_class):
        out = {}
        seed = start
        for cls, anchor in zip(classes, anchors):
            for _ in range(per_class):
                out[seed] = (cls, star_maker(17, seed, cls, anchor))
                seed += 7
        return out

    dirs = {
        "train": write_buffer(root, "train", graphs(1, 30), 2, 6),
        "val": write_buffer(root, "val", graphs(1001, 8), 2, 6),
        "test": write_buffer(root, "test", graphs(5001, 8), 2, 6),
    }
    return dirs, classes
