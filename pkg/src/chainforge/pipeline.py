"""Stage orchestration with resumable manifests.

Each stage reads files produced by earlier stages (or external inputs),
writes its own outputs under the run directory, and records a manifest
with content digests of everything it touched. A stage whose config
hash, input digests, and output digests all still match is skipped, so
interrupted runs resume where they stopped and reruns are no-ops.

Execution order: parse, filter, cluster, edges, attributes, label,
features, export, sample. The sampler needs the sealed store, so export
runs before it. The optional ``[inputs]`` config section points selected
stages at externally produced tables (nodes/edges/blocks CSVs), letting
the feature, export, and sample stages run without chain data.
"""

from __future__ import annotations

import array
import hashlib
import json
import sys
import time
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import chain, clustering, features, labels, resolve, sampling, store
from .edges import split_transfers
from .errors import ConfigInvalid, ForgeError, TruncatedInput, UpstreamIncomplete
from .filters import CoinJoinConfig
from .nodes import build_node_table
from .wire import HEADER_SIZE, MAINNET_MAGIC, decode_compact_size, parse_transaction

STAGE_ORDER = ("parse", "filter", "cluster", "edges", "attributes", "label",
               "features", "export", "sample")

EVENT_DTYPE = np.dtype([("sender", "<i8"), ("recipient", "<i8"),
                        ("value", "<f8"), ("block", "<i8")])


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _config_hash(payload) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()[:16]


class Pipeline:
    def __init__(self, config_path, height_limit: int | None = None,
                 out_dir=None) -> None:
        self.config_path = Path(config_path)
        try:
            with open(self.config_path, "rb") as fh:
                self.cfg = tomllib.load(fh)
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigInvalid(f"config does not parse: {exc}") from exc
        if not isinstance(self.cfg, dict):
            raise ConfigInvalid("config root must be a table")

        run = self.cfg.get("run", {})
        out = out_dir if out_dir is not None else run.get("out")
        if out is None:
            raise ConfigInvalid("[run].out (or --out) is required")
        self.out = self._path(out)
        self.height_limit = height_limit if height_limit is not None \
            else run.get("height_limit")
        if self.height_limit is not None and int(self.height_limit) < 1:
            raise ConfigInvalid("height_limit must be >= 1")
        self.manifest_dir = self.out / "manifests"

    # Paths in the config resolve against the config file's directory.
    def _path(self, value) -> Path:
        p = Path(value)
        return p if p.is_absolute() else (self.config_path.parent / p)

    def _section(self, name: str) -> dict:
        section = self.cfg.get(name, {})
        if not isinstance(section, dict):
            raise ConfigInvalid(f"[{name}] must be a table")
        return section

    def _override(self, name: str) -> Path | None:
        value = self._section("inputs").get(name)
        return self._path(value) if value is not None else None

    # -- manifest plumbing ------------------------------------------------

    def _stage_config(self, stage: str) -> dict:
        if stage == "parse":
            return {"parse": self._section("parse"),
                    "height_limit": self.height_limit}
        if stage in ("filter", "label", "features", "sample", "export"):
            key = {"filter": "filter", "label": "labels",
                   "features": "features", "sample": "sample",
                   "export": "export"}[stage]
            return {key: self._section(key)}
        return {}

    def _deps(self, stage: str) -> list[str]:
        ov = self._section("inputs")
        table = {
            "parse": [],
            "filter": ["parse"],
            "cluster": ["filter"],
            "edges": ["filter", "cluster"],
            "attributes": ["edges"],
            "label": ["parse", "filter", "cluster", "attributes"],
            "features": [] if ("nodes" in ov and "blocks" in ov)
            else ["label", "parse"],
            "export": [] if ("nodes" in ov and "edges" in ov)
            else ["label", "edges"],
            "sample": ["export", "features"],
        }
        return table[stage]

    def _inputs(self, stage: str) -> dict[str, Path]:
        out = self.out
        ov = self._override
        if stage == "parse":
            blocks_dir = self._section("parse").get("blocks_dir")
            if blocks_dir is None:
                raise ConfigInvalid("[parse].blocks_dir is required")
            files = sorted(self._path(blocks_dir).glob("*.dat"))
            return {f"blocks/{p.name}": p for p in files}
        if stage == "filter":
            return {"txstream.bin": out / "txstream.bin"}
        if stage == "cluster":
            return {"resolved.bin": out / "resolved.bin",
                    "scripts.bin": out / "scripts.bin"}
        if stage == "edges":
            return {"resolved.bin": out / "resolved.bin",
                    "aliases.bin": out / "aliases.bin"}
        if stage == "attributes":
            return {"events.bin": out / "events.bin",
                    "edges.csv": out / "edges.csv",
                    "cluster_stats.bin": out / "cluster_stats.bin"}
        if stage == "label":
            paths = {"nodes_raw.csv": out / "nodes_raw.csv",
                     "scripts.bin": out / "scripts.bin",
                     "aliases.bin": out / "aliases.bin",
                     "txstream.bin": out / "txstream.bin"}
            section = self._section("labels")
            for i, f in enumerate(section.get("files", [])):
                paths[f"labels/{i}"] = self._path(f)
            if section.get("patterns"):
                paths["patterns"] = self._path(section["patterns"])
            return paths
        if stage == "features":
            section = self._section("features")
            rates = section.get("rates")
            if rates is None:
                raise ConfigInvalid("[features].rates is required")
            return {"nodes.csv": ov("nodes") or out / "nodes.csv",
                    "blocks.csv": ov("blocks") or out / "blocks.csv",
                    "rates.csv": self._path(rates)}
        if stage == "export":
            return {"nodes.csv": ov("nodes") or out / "nodes.csv",
                    "edges.csv": ov("edges") or out / "edges.csv"}
        if stage == "sample":
            return {"store/meta.json": out / "store" / "meta.json",
                    "features.csv": out / "features.csv",
                    "splits.json": out / "splits.json"}
        raise ConfigInvalid(f"unknown stage {stage!r}")

    def _output_names(self, stage: str) -> list[str]:
        table = {
            "parse": ["txstream.bin", "blocks.csv"],
            "filter": ["resolved.bin", "scripts.bin"],
            "cluster": ["aliases.bin"],
            "edges": ["events.bin", "edges.csv", "cluster_stats.bin"],
            "attributes": ["nodes_raw.csv"],
            "label": ["nodes.csv", "labels.csv"],
            "features": ["features.csv", "constants.csv", "splits.json",
                         "feature_manifest.json"],
            "export": ["store/meta.json", "store/nodes.bin",
                       "store/edges_fwd.bin", "store/edges_rev.bin",
                       "store/offsets_fwd.bin", "store/offsets_rev.bin"],
            "sample": ["buffers/train/manifest.json",
                       "buffers/val/manifest.json",
                       "buffers/test/manifest.json"],
        }
        names = list(table[stage])
        if stage == "export" and self._section("export").get("sql"):
            names.append("graph.sql")
        return names

    def _manifest_path(self, stage: str) -> Path:
        return self.manifest_dir / f"{stage}.json"

    def _load_manifest(self, stage: str) -> dict | None:
        path = self._manifest_path(stage)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def _write_manifest(self, manifest: dict) -> None:
        self.manifest_dir.mkdir(parents=True, exist_ok=True)
        path = self._manifest_path(manifest["stage"])
        path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n",
                        encoding="utf-8")

    def run(self, stage: str) -> dict:
        if stage not in STAGE_ORDER:
            raise ConfigInvalid(f"unknown stage {stage!r}; "
                                f"choose from {', '.join(STAGE_ORDER)}")
        for dep in self._deps(stage):
            m = self._load_manifest(dep)
            if m is None or m.get("status") != "complete":
                raise UpstreamIncomplete(
                    f"stage {stage!r} needs {dep!r} to have completed")

        inputs = self._inputs(stage)
        missing = [str(p) for p in inputs.values() if not p.exists()]
        if missing:
            raise UpstreamIncomplete(
                f"stage {stage!r} is missing inputs: {', '.join(missing)}")
        input_digests = {name: _sha256_file(p) for name, p in inputs.items()}
        cfg_hash = _config_hash(self._stage_config(stage))

        previous = self._load_manifest(stage)
        if previous is not None and previous.get("status") == "complete" \
                and previous.get("config_hash") == cfg_hash \
                and previous.get("inputs") == input_digests:
            out_ok = all(
                (self.out / name).exists()
                and _sha256_file(self.out / name) == digest
                for name, digest in previous.get("outputs", {}).items())
            if out_ok:
                skipped = dict(previous)
                skipped["skipped"] = True
                return skipped

        manifest = {
            "stage": stage,
            "status": "running",
            "config_hash": cfg_hash,
            "inputs": input_digests,
            "outputs": {},
            "stats": {},
            "started": datetime.now(timezone.utc).isoformat(),
        }
        runner: Callable[[dict[str, Path]], dict] = getattr(
            self, f"_stage_{stage}")
        self.out.mkdir(parents=True, exist_ok=True)
        try:
            stats = runner(inputs)
        except Exception as exc:
            manifest["status"] = "failed"
            manifest["error"] = f"{type(exc).__name__}: {exc}"
            self._write_manifest(manifest)
            raise
        manifest["stats"] = stats
        manifest["outputs"] = {
            name: _sha256_file(self.out / name)
            for name in self._output_names(stage)}
        manifest["status"] = "complete"
        manifest["finished"] = datetime.now(timezone.utc).isoformat()
        self._write_manifest(manifest)
        return manifest

    def run_all(self) -> list[dict]:
        return [self.run(stage) for stage in STAGE_ORDER]

    # -- stages -----------------------------------------------------------

    def _stage_parse(self, inputs: dict[str, Path]) -> dict:
        magic = bytes.fromhex(self._section("parse").get(
            "magic", MAINNET_MAGIC.hex()))
        files = [chain.BlockFile.from_path(p) for p in inputs.values()]
        if not files:
            raise ConfigInvalid("blocks_dir holds no .dat files")
        entries = chain.index_block_files(files, magic)
        limit = int(self.height_limit) if self.height_limit is not None else None
        locs = chain.select_main_chain(entries, limit)

        # Transactions are framed as raw byte slices out of the block
        # payload; nothing is re-serialized on this path.
        n_tx = 0
        started = time.monotonic()
        handles: dict[int, object] = {}
        try:
            with open(self.out / "txstream.bin", "wb") as stream, \
                    open(self.out / "blocks.csv", "w", encoding="utf-8",
                         newline="") as blk:
                blk.write("height,hash,time\n")
                for height, loc in enumerate(locs):
                    fh = handles.get(loc.file_index)
                    if fh is None:
                        fh = handles[loc.file_index] = files[loc.file_index].open()
                    fh.seek(loc.offset)
                    payload = fh.read(loc.length)
                    if len(payload) < loc.length:
                        raise TruncatedInput(
                            f"{files[loc.file_index].name}: truncated block")
                    blk.write(f"{height},{loc.header.hash_hex},"
                              f"{loc.header.timestamp}\n")
                    count, used = decode_compact_size(payload, HEADER_SIZE)
                    off = HEADER_SIZE + used
                    for _ in range(count):
                        _, consumed = parse_transaction(payload, off)
                        resolve.write_tx_frame(
                            stream, height, payload[off:off + consumed])
                        off += consumed
                        n_tx += 1
        finally:
            for fh in handles.values():
                fh.close()
        elapsed = time.monotonic() - started
        return {"blocks": len(locs), "transactions": n_tx,
                "block_files": len(files),
                "tx_per_second": int(n_tx / elapsed) if elapsed > 0 else n_tx}

    def _stage_filter(self, inputs: dict[str, Path]) -> dict:
        section = self._section("filter")
        cj = CoinJoinConfig(
            min_equal_outputs=section.get("min_equal_outputs", 3),
            min_distinct_input_scripts=section.get(
                "min_distinct_input_scripts", 3),
            min_equal_value=section.get("min_equal_value", 10_000))
        colored = tuple(section.get("colored",
                                    ["open_assets", "omni", "epobc"]))
        registry = resolve.ScriptRegistry()
        utxo = resolve.UtxoSet()
        counts = {"transactions": 0, "coinjoin": 0, "colored": 0,
                  "coinbase": 0}
        with open(self.out / "resolved.bin", "wb") as out:
            for rtx in resolve.resolve_stream(
                    resolve.iter_tx_frames(inputs["txstream.bin"]),
                    registry, utxo, cj, colored):
                resolve.write_resolved(out, rtx)
                counts["transactions"] += 1
                counts["coinjoin"] += rtx.coinjoin
                counts["colored"] += rtx.colored
                counts["coinbase"] += rtx.is_coinbase
        registry.save(self.out / "scripts.bin")
        counts["scripts"] = len(registry)
        counts["unspent"] = len(utxo)
        return counts

    def _stage_cluster(self, inputs: dict[str, Path]) -> dict:
        n_scripts = inputs["scripts.bin"].stat().st_size // 33
        idx = clustering.ClusterIndex()
        idx.ensure_size(n_scripts)
        merges = 0
        for rtx in resolve.iter_resolved(inputs["resolved.bin"]):
            if rtx.is_coinbase or rtx.excluded or len(rtx.inputs) < 2:
                continue
            first = rtx.inputs[0][1]
            for _, slot in rtx.inputs[1:]:
                merges += idx.union(first, slot)
        aliases = np.array(clustering.alias_table(idx), dtype=np.int64)
        aliases.tofile(self.out / "aliases.bin")
        n_aliases = int(aliases.max()) + 1 if len(aliases) else 0
        return {"scripts": n_scripts, "merges": merges, "clusters": n_aliases}

    def _stage_edges(self, inputs: dict[str, Path]) -> dict:
        alias_of = np.fromfile(inputs["aliases.bin"], dtype=np.int64)
        n_aliases = int(alias_of.max()) + 1 if len(alias_of) else 0
        acc = clustering.IntraClusterAccumulator()
        senders = array.array("q")
        recipients = array.array("q")
        values = array.array("d")
        blocks = array.array("q")

        for rtx in resolve.iter_resolved(inputs["resolved.bin"]):
            if rtx.is_coinbase or rtx.excluded or not rtx.inputs \
                    or not rtx.outputs:
                continue
            in_alias = [(int(alias_of[slot]), float(v))
                        for v, slot in rtx.inputs]
            out_alias = [(int(alias_of[slot]), float(v))
                         for v, slot in rtx.outputs]
            for s, r, v in split_transfers(in_alias, out_alias):
                senders.append(s)
                recipients.append(r)
                values.append(v)
                blocks.append(rtx.height)
            # Script-level transfers feed the intra-cluster connectivity
            # figures; they can only exist when an alias funds and
            # receives within the same transaction.
            if {a for a, _ in in_alias} & {a for a, _ in out_alias}:
                in_slots = [(slot, float(v)) for v, slot in rtx.inputs]
                out_slots = [(slot, float(v)) for v, slot in rtx.outputs]
                for s_slot, r_slot, _ in split_transfers(in_slots, out_slots):
                    a = int(alias_of[s_slot])
                    if a == int(alias_of[r_slot]):
                        acc.add(a, s_slot, r_slot)

        events = np.empty(len(senders), dtype=EVENT_DTYPE)
        events["sender"] = senders
        events["recipient"] = recipients
        events["value"] = values
        events["block"] = blocks
        events.tofile(self.out / "events.bin")

        # Aggregate per (a, b). The stable sort keeps each pair's events
        # in stream order, and bincount adds weights in scan order, so
        # the float totals equal sequential per-pair accumulation.
        order = np.lexsort((events["recipient"], events["sender"]))
        s = events["sender"][order]
        r = events["recipient"][order]
        v = events["value"][order]
        b = events["block"][order]
        if len(s):
            new = np.concatenate([[True], (s[1:] != s[:-1]) | (r[1:] != r[:-1])])
            starts = np.flatnonzero(new)
            group = np.cumsum(new) - 1
            edge_cols = {
                "a": s[starts],
                "b": r[starts],
                "reveal": np.minimum.reduceat(b, starts),
                "last_seen": np.maximum.reduceat(b, starts),
                "total": np.bincount(group),
                "min_sent": np.minimum.reduceat(v, starts),
                "max_sent": np.maximum.reduceat(v, starts),
                "total_sent": np.bincount(group, weights=v),
            }
        else:
            edge_cols = {name: np.empty(0, dtype=np.int64)
                         for name in ("a", "b", "reveal", "last_seen", "total")}
            edge_cols.update({name: np.empty(0, dtype=np.float64)
                              for name in ("min_sent", "max_sent",
                                           "total_sent")})
        store.write_edges_csv(self.out / "edges.csv", edge_cols)

        stats = np.zeros((4, n_aliases), dtype=np.int64)
        stats[0] = np.bincount(alias_of, minlength=n_aliases)
        for alias in acc.aliases():
            cs = acc.stats_for(alias, int(stats[0][alias]))
            stats[1][alias] = cs.cluster_num_edges
            stats[2][alias] = cs.cluster_num_cc
            stats[3][alias] = cs.cluster_num_nodes_in_cc
        stats.tofile(self.out / "cluster_stats.bin")
        return {"events": len(events), "edges": len(edge_cols["a"]),
                "aliases": n_aliases}

    def _stage_attributes(self, inputs: dict[str, Path]) -> dict:
        events = np.fromfile(inputs["events.bin"], dtype=EVENT_DTYPE)
        edge_cols = store.read_edges_csv(inputs["edges.csv"])
        stats = np.fromfile(inputs["cluster_stats.bin"],
                            dtype=np.int64).reshape(4, -1)
        n_aliases = stats.shape[1]
        cluster = {"cluster_size": stats[0], "cluster_num_edges": stats[1],
                   "cluster_num_cc": stats[2],
                   "cluster_num_nodes_in_cc": stats[3]}
        table = build_node_table(
            n_aliases,
            {"sender": events["sender"], "recipient": events["recipient"],
             "value": events["value"], "block": events["block"]},
            edge_cols, cluster)
        store.write_nodes_csv(self.out / "nodes_raw.csv", table)
        return {"nodes": n_aliases, "events": len(events)}

    def _stage_label(self, inputs: dict[str, Path]) -> dict:
        section = self._section("labels")
        table, _ = store.read_nodes_csv(inputs["nodes_raw.csv"])
        registry = resolve.ScriptRegistry.load(inputs["scripts.bin"])
        alias_of = np.fromfile(inputs["aliases.bin"], dtype=np.int64)
        cluster_map = {sid: int(alias_of[slot])
                       for slot, sid in enumerate(registry.ids)}

        records: list[labels.LabelRecord] = []
        for f in section.get("files", []):
            records.extend(labels.load_labels(self._path(f)))
        if section.get("patterns"):
            patterns = labels.load_patterns(self._path(section["patterns"]))
            coinbases = (tx for _, tx in
                         resolve.iter_tx_frames(inputs["txstream.bin"])
                         if tx.is_coinbase)
            records.extend(labels.coinbase_tags_from_txs(coinbases, patterns))

        report = labels.propagate(records, cluster_map)
        names = [""] * len(table["alias"])
        for cl in report.labels:
            names[cl.alias] = cl.category
        with open(self.out / "labels.csv", "w", encoding="utf-8",
                  newline="") as fh:
            fh.write("alias,label\n")
            for cl in report.labels:
                fh.write(f"{cl.alias},{cl.category}\n")
        store.write_nodes_csv(self.out / "nodes.csv", table, names)
        return {"records": len(records), "labeled": len(report.labels),
                "conflicted": len(report.conflicted),
                "unmatched": len(report.unmatched)}

    def _stage_features(self, inputs: dict[str, Path]) -> dict:
        section = self._section("features")
        table, label_names = store.read_nodes_csv(inputs["nodes.csv"])
        rates = features.RatesTable.from_csv(inputs["rates.csv"])

        block_dates: list = []
        with open(inputs["blocks.csv"], encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            if header != "height,hash,time":
                raise ConfigInvalid(
                    f"{inputs['blocks.csv']}: unexpected header {header!r}")
            for line in fh:
                height_s, _, time_s = line.rstrip("\n").split(",")
                if int(height_s) != len(block_dates):
                    raise ConfigInvalid("blocks.csv heights must be dense")
                block_dates.append(
                    datetime.fromtimestamp(int(time_s), tz=timezone.utc).date())

        matrix = features.derive_feature_matrix(table, rates, block_dates)
        labeled = {alias: name for alias, name in enumerate(label_names)
                   if name}
        fractions = tuple(section.get("split_fractions", (0.4, 0.3, 0.3)))
        splits = sampling.make_splits(labeled, fractions,
                                      section.get("split_seed", 0))
        constants = features.fit_normalization(matrix[splits["train"]])
        normalized = features.normalize_matrix(matrix, constants)

        features.write_matrix(self.out / "features.csv", table["alias"],
                              normalized)
        features.write_constants(self.out / "constants.csv", constants)
        with open(self.out / "splits.json", "w", encoding="utf-8") as fh:
            json.dump({"fractions": list(fractions),
                       "seed": section.get("split_seed", 0),
                       "splits": splits}, fh, indent=1, sort_keys=True)
            fh.write("\n")
        manifest = features.feature_manifest()
        manifest["fitted_on"] = "train"
        with open(self.out / "feature_manifest.json", "w",
                  encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
            fh.write("\n")
        return {"vectors": len(matrix), "labeled": len(labeled),
                "train": len(splits["train"]), "val": len(splits["val"]),
                "test": len(splits["test"]),
                "degenerate": int(constants.degenerate.sum())}

    def _stage_export(self, inputs: dict[str, Path]) -> dict:
        gs = store.import_csv(inputs["nodes.csv"], inputs["edges.csv"],
                              self.out / "store")
        stats = {"nodes": gs.num_nodes, "edges": gs.num_edges}
        if self._section("export").get("sql"):
            gs.export_sql(self.out / "graph.sql")
            stats["sql"] = True
        return stats

    def _stage_sample(self, inputs: dict[str, Path]) -> dict:
        section = self._section("sample")
        cfg = sampling.SamplerConfig(
            k_max=section.get("k_max", 2),
            fanouts=tuple(section.get("fanouts", (10, 5))),
            high_degree_threshold=section.get("high_degree_threshold",
                                              100_000),
            edge_sample_cap=section.get("edge_sample_cap", 100_000),
            rng_seed=section.get("rng_seed", 0))
        copies = section.get("copies", 12)
        gs = store.GraphStore.open(self.out / "store")
        aliases, matrix, version = features.read_matrix(inputs["features.csv"])
        if not np.array_equal(aliases, np.arange(len(aliases))):
            raise ConfigInvalid("features.csv must cover aliases densely")
        _, label_names = gs.node_table()
        splits = json.loads(inputs["splits.json"].read_text(
            encoding="utf-8"))["splits"]

        stats = {"config": asdict(cfg), "copies": copies,
                 "feature_version": version}
        for split in ("train", "val", "test"):
            manifest = sampling.build_buffer(
                splits[split], cfg, gs, matrix, label_names,
                self.out / "buffers" / split, split, copies)
            stats[split] = len(manifest["entries"])
        return stats


def run(stage: str, config_path, height_limit: int | None = None,
        out_dir=None) -> dict:
    """Run (or skip) one stage; returns its manifest."""
    return Pipeline(config_path, height_limit, out_dir).run(stage)


def run_all(config_path, height_limit: int | None = None,
            out_dir=None) -> list[dict]:
    """Run every stage in dependency order."""
    return Pipeline(config_path, height_limit, out_dir).run_all()
