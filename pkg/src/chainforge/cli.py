"""Command line entry point.

    forge <stage|all> --config run.toml [--height-limit N] [--out DIR]

Stage names follow the pipeline order; ``all`` runs every stage. Errors
map to stable exit codes so shell callers can tell a bad config (2)
from missing upstream outputs (3), a parse failure (4), a semantic
failure (5), or a store problem (6).
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ForgeError
from .pipeline import STAGE_ORDER, Pipeline


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forge",
        description="entity graph builder: wire-format blocks in, "
                    "node/edge tables, features, and sampler buffers out")
    parser.add_argument("stage", choices=STAGE_ORDER + ("all",),
                        help="pipeline stage to run")
    parser.add_argument("--config", required=True, metavar="PATH",
                        help="TOML run configuration")
    parser.add_argument("--height-limit", type=int, default=None,
                        metavar="N", help="stop the chain after N blocks")
    parser.add_argument("--out", default=None, metavar="DIR",
                        help="run directory (overrides [run].out)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        pipe = Pipeline(args.config, args.height_limit, args.out)
        manifests = pipe.run_all() if args.stage == "all" \
            else [pipe.run(args.stage)]
    except ForgeError as exc:
        print(f"forge: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # pragma: no cover - last resort
        print(f"forge: unexpected {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 1
    for m in manifests:
        tag = "skipped" if m.get("skipped") else "ok"
        print(f"{m['stage']}: {tag} {json.dumps(m.get('stats', {}), sort_keys=True)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
