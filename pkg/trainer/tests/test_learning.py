"""Acceptance: learning sanity on a planted-structure graph.

Seven communities of entities. Every labeled seed's own feature row is
pure noise, while the unlabeled members around it carry their
community's value signature (one log-decade per class). A classifier
that only sees the seed's features is stuck at chance; a model that
aggregates the neighborhood can read the class straight off. Every GNN
must beat the majority baseline's macro-F1 by at least 0.2 and at least
one must beat the gradient-boosting baseline.

The graph flows through the real pipeline CLI (features, export, sample
with external input overrides), so the buffers scored here are exactly
what the sampler ships.
"""

import shutil
import subprocess
import tempfile
import time
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from nbtrain.buffers import BufferDir
from nbtrain.evaluate import evaluate, majority_baseline, model_infer
from nbtrain.gbc import gbc_infer, train_gbc
from nbtrain.models import MODEL_NAMES
from nbtrain.train import TrainConfig, train

CLASSES = ("exchange", "mining", "gambling", "ponzi", "individual",
           "ransomware", "bet")
SEEDS_PER_CLASS = 714          # 7 x 714 = 4998 labeled seeds
MEMBERS_PER_CLASS = 600        # unlabeled entities carrying the signal

NODE_HEADER = ("alias,label,degree,degree_in,degree_out,"
               "total_transaction_in,total_transaction_out,"
               "first_transaction_in,last_transaction_in,"
               "first_transaction_out,last_transaction_out,"
               "min_sent,max_sent,total_sent,min_received,max_received,"
               "total_received,cluster_size,cluster_num_edges,"
               "cluster_num_cc,cluster_num_nodes_in_cc")
EDGE_HEADER = "a,b,reveal,last_seen,total,min_sent,max_sent,total_sent"


def _write_planted_graph(workdir: Path, rng_seed=42) -> None:
    """Node/edge/block CSVs plus a pipeline config, all plain text."""
    rng = np.random.default_rng(rng_seed)
    n_seeds = len(CLASSES) * SEEDS_PER_CLASS
    n = n_seeds + len(CLASSES) * MEMBERS_PER_CLASS

    def member(k, j):
        return n_seeds + k * MEMBERS_PER_CLASS + j

    labels = [""] * n
    values = np.zeros((n, 6))
    for k, cls in enumerate(CLASSES):
        for i in range(SEEDS_PER_CLASS):
            alias = k * SEEDS_PER_CLASS + i
            labels[alias] = cls
            # seed rows: independent log-uniform noise, no class signal
            values[alias] = 10.0 ** rng.uniform(2, 8, 6)
        base = 10.0 ** (2 + k)   # one value decade per community
        for j in range(MEMBERS_PER_CLASS):
            values[member(k, j)] = base * np.array(
                [rng.uniform(0.2, 0.5), rng.uniform(1, 2),
                 rng.uniform(2, 4), rng.uniform(0.2, 0.5),
                 rng.uniform(1, 2), rng.uniform(2, 4)])
    ints = rng.integers(1, 5, (n, 9))
    first_in = rng.integers(0, 5, n)

    with open(workdir / "nodes.csv", "w", encoding="ascii") as fh:
        fh.write(NODE_HEADER + "\n")
        for a in range(n):
            v = [float(x) for x in values[a]]
            fh.write(f"{a},{labels[a]},{ints[a,0]},{ints[a,1]},{ints[a,2]},"
                     f"{ints[a,3]},{ints[a,4]},"
                     f"{first_in[a]},{first_in[a]+4},{first_in[a]+1},"
                     f"{first_in[a]+3},"
                     f"{v[0]!r},{v[1]!r},{v[2]!r},{v[3]!r},{v[4]!r},{v[5]!r},"
                     f"{ints[a,5]},{ints[a,6]},{ints[a,7]},{ints[a,8]}\n")

    # each seed touches ~6 members of its community plus occasional
    # cross-community noise; members interlink so 2-hop stays on-class
    pairs = set()
    for k in range(len(CLASSES)):
        for i in range(SEEDS_PER_CLASS):
            s = k * SEEDS_PER_CLASS + i
            for j in rng.choice(MEMBERS_PER_CLASS, 6, replace=False):
                m = member(k, int(j))
                pairs.add((min(s, m), max(s, m)))
            if rng.random() < 0.3:
                ko = int((k + rng.integers(1, len(CLASSES))) % len(CLASSES))
                m = member(ko, int(rng.integers(0, MEMBERS_PER_CLASS)))
                pairs.add((min(s, m), max(s, m)))
        for j in range(MEMBERS_PER_CLASS):
            m = member(k, j)
            for j2 in rng.choice(MEMBERS_PER_CLASS, 2, replace=False):
                if int(j2) != j:
                    m2 = member(k, int(j2))
                    pairs.add((min(m, m2), max(m, m2)))
    with open(workdir / "edges.csv", "w", encoding="ascii") as fh:
        fh.write(EDGE_HEADER + "\n")
        for a, b in sorted(pairs):
            fh.write(f"{a},{b},0,9,2,0.5,1.5,{rng.uniform(1, 9):.4f}\n")

    base_t = datetime(2020, 1, 1, tzinfo=timezone.utc)
    with open(workdir / "blocks.csv", "w", encoding="ascii") as fh:
        fh.write("height,hash,time\n")
        for h in range(10):
            ts = int((base_t + timedelta(hours=6 * h)).timestamp())
            fh.write(f"{h},{'%064x' % h},{ts}\n")
    (workdir / "rates.csv").write_text(
        "date,usd_per_btc\n2020-01-01,9000\n2020-01-02,9100\n"
        "2020-01-03,9200\n")
    (workdir / "run.toml").write_text(
        '[run]\nout = "out"\n'
        '[inputs]\nnodes = "nodes.csv"\nedges = "edges.csv"\n'
        'blocks = "blocks.csv"\n'
        '[features]\nrates = "rates.csv"\n'
        '[sample]\ncopies = 12\nfanouts = [5, 3]\nrng_seed = 11\n')


def test_criterion_10_learning_sanity():
    started = time.monotonic()
    # buffers run ~0.6 GB; a mkdtemp tree is reclaimed immediately
    # instead of lingering through pytest tmp retention
    workdir = Path(tempfile.mkdtemp(prefix="planted-"))
    try:
        _write_planted_graph(workdir)
        for stage in ("features", "export", "sample"):
            proc = subprocess.run(
                ["forge", stage, "--config", str(workdir / "run.toml")],
                capture_output=True, text=True)
            assert proc.returncode == 0, \
                f"forge {stage}: {proc.stdout}\n{proc.stderr}"

        bufs = {s: BufferDir(workdir / "out" / "buffers" / s)
                for s in ("train", "val", "test")}
        assert bufs["train"].copies == 12
        n_labeled = sum(len(b.seeds) for b in bufs.values())
        assert n_labeled == len(CLASSES) * SEEDS_PER_CLASS

        majority = majority_baseline(bufs["train"], bufs["test"],
                                     CLASSES).macro_f1
        config = TrainConfig(classes=CLASSES, max_epochs=120, rng_seed=0)
        scores = {}
        for name in MODEL_NAMES:
            result = train(name, bufs["train"], bufs["val"], config)
            report = evaluate(model_infer(result.model), bufs["test"],
                              CLASSES)
            scores[name] = report.macro_f1

        clf, _ = train_gbc(bufs["train"], CLASSES)
        gbc_score = evaluate(gbc_infer(clf, len(CLASSES)), bufs["test"],
                             CLASSES).macro_f1
    finally:
        shutil.rmtree(workdir, ignore_errors=True)

    elapsed = time.monotonic() - started
    summary = " ".join(f"{k}={v:.3f}" for k, v in scores.items())
    print(f"majority={majority:.3f} {summary} gbc={gbc_score:.3f} "
          f"elapsed={elapsed:.0f}s")
    for name, score in scores.items():
        assert score >= majority + 0.2, \
            f"{name} macro-F1 {score:.3f} vs majority {majority:.3f}"
    assert max(scores.values()) > gbc_score, \
        f"no GNN beat the feature-only baseline {gbc_score:.3f}"
    assert elapsed < 1200, f"took {elapsed:.0f}s"
