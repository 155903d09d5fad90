"""Command line runner: train one baseline and score it on the test split.

    nbtrain --buffers OUT/buffers --model gat --out RUN_DIR

expects OUT/buffers/{train,val,test}/ as written by the sampling stage.
Writes report.json (scores), run_manifest.json (every hyperparameter and,
for the boosted baseline, the library defaults in force), and history.csv.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .buffers import BufferDir, BufferError
from .evaluate import evaluate, majority_baseline, model_infer
from .gbc import gbc_infer, train_gbc
from .models import MODEL_NAMES
from .splits import EmptyClass
from .train import TrainConfig, train


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="nbtrain",
        description="train a node-classification baseline on neighborhood "
                    "buffers")
    p.add_argument("--buffers", required=True,
                   help="directory holding train/ val/ test/ buffer splits")
    p.add_argument("--model", required=True,
                   choices=list(MODEL_NAMES) + ["gbc", "majority"])
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    root = Path(args.buffers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    overrides = {"rng_seed": args.seed}
    if args.max_epochs is not None:
        overrides["max_epochs"] = args.max_epochs
    if args.patience is not None:
        overrides["patience"] = args.patience

    manifest: dict = {"model": args.model, "buffers": str(root)}
    try:
        config = TrainConfig(**overrides)
        bufs = {name: BufferDir(root / name)
                for name in ("train", "val", "test")}
        if args.model == "majority":
            report = majority_baseline(bufs["train"], bufs["test"],
                                       config.classes)
        elif args.model == "gbc":
            clf, params = train_gbc(bufs["train"], config.classes,
                                    config.resample_bounds, config.rng_seed)
            manifest["gbc_params"] = params
            report = evaluate(gbc_infer(clf, len(config.classes)),
                              bufs["test"], config.classes)
        else:
            result = train(args.model, bufs["train"], bufs["val"], config)
            manifest.update(result.manifest(config))
            with open(out / "history.csv", "w", encoding="ascii") as fh:
                fh.write("epoch,loss,val_macro_f1\n")
                for row in result.history:
                    fh.write(f"{row['epoch']},{row['loss']!r},"
                             f"{row['val_macro_f1']!r}\n")
            report = evaluate(model_infer(result.model), bufs["test"],
                              config.classes)
    except (BufferError, EmptyClass, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    report.write_json(out / "report.json")
    with open(out / "run_manifest.json", "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True, default=str)
        fh.write("\n")
    print(f"{args.model}: test macro-F1 {report.macro_f1:.4f} "
          f"over {report.n_seeds} seeds x {report.copies} copies")
    return 0


if __name__ == "__main__":
    sys.exit(main())
