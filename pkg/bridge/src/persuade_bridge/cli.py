"""persuade-bridge: score corpora with external predictors, serve translation.

    persuade-bridge emit-scores --corpus c.jsonl --model stub:tag --out s.tsv
    persuade-bridge serve --directions table --mode tag
    persuade-bridge manifest --tool predictor --model stub:tag
"""

from __future__ import annotations

import argparse
import json
import sys

from persuade_bridge import BridgeError, __version__
from persuade_bridge.predictor import emit_scores
from persuade_bridge.translator import serve_translation
from persuade_bridge.wire import TECHNIQUE_ORDER, parse_directions


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="persuade-bridge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("emit-scores", help="run a predictor over a canonical corpus")
    p.add_argument("--corpus", required=True, help="canonical JSON-lines corpus")
    p.add_argument("--model", required=True, help="stub[:tag] or hf:<checkpoint>")
    p.add_argument("--out", required=True, help="score TSV path")

    p = sub.add_parser("serve", help="serve the translator bridge protocol on stdio")
    p.add_argument("--directions", default="table", help='"table" preset or "en2fr,fr2en,..."')
    p.add_argument("--mode", default="echo", choices=("echo", "tag", "marian"))
    p.add_argument("--model-id", help="identifier reported in the handshake")

    p = sub.add_parser("manifest", help="print the tool manifest as JSON")
    p.add_argument("--tool", required=True, choices=("predictor", "translator"))
    p.add_argument("--model", default="stub")
    p.add_argument("--directions", default="table")

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.subcommand == "emit-scores":
            count = emit_scores(args.corpus, args.model, args.out)
            print(f"scored {count} paragraphs -> {args.out}", file=sys.stderr)
            return 0
        if args.subcommand == "serve":
            serve_translation(
                parse_directions(args.directions), mode=args.mode, model_id=args.model_id
            )
            return 0
        manifest = {
            "tool": args.tool,
            "model": args.model,
            "version": __version__,
        }
        if args.tool == "predictor":
            manifest["label_order"] = list(TECHNIQUE_ORDER)
        else:
            manifest["directions"] = sorted(
                [s, t] for s, t in parse_directions(args.directions)
            )
        print(json.dumps(manifest, ensure_ascii=False, indent=2))
        return 0
    except BridgeError as exc:
        print(f"persuade-bridge {args.subcommand}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"persuade-bridge {args.subcommand}: {exc}", file=sys.stderr)
        return 2
    except Exception:
        import traceback

        traceback.print_exc()
        return 3


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
