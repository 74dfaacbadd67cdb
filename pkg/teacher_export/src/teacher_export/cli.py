"""teacher-export: turn pretrained encoder checkpoints into the JSONL
interchange consumed by the distillation pipeline.

Exit codes: 0 success, 1 invalid input, 2 runtime/model error.
"""

from __future__ import annotations

import argparse
import sys

from .extract import (
    Embedder,
    EmptyTokenization,
    ModelLoadError,
    TeacherSpec,
    export_corpus,
    export_probe,
    load_lexicon,
)
from .treebank import ParseError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="teacher-export",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", required=True,
                        help="checkpoint path or hub identifier")
    common.add_argument("--pooling", choices=("cls", "native"), default="cls")
    common.add_argument("--word-source", choices=("input-table", "encoded"),
                        help="subtoken vectors to mean over "
                             "(default: input-table for cls, encoded for native)")

    p = sub.add_parser("export", parents=[common],
                       help="export a treebank to sentence records")
    p.add_argument("--trees", required=True, help="one bracketed tree per line")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.add_argument("--keep-labels", action="store_true",
                   help="keep functional tags / empty elements verbatim")

    p = sub.add_parser("export-probe", parents=[common],
                       help="export two-word phrase records by category")
    p.add_argument("--nouns", required=True,
                   help="comma-separated noun list, e.g. dog,cat,idea")
    p.add_argument("--lexicon", help="JSON file {category: [words, ...]}")
    p.add_argument("--out", required=True, help="output JSONL path")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = TeacherSpec(model=args.model, pooling=args.pooling,
                           word_source=args.word_source)
        embedder = Embedder(spec)
        if args.subcommand == "export":
            n = export_corpus(embedder, args.trees, args.out,
                              normalize_labels=not args.keep_labels)
        else:
            nouns = [w for w in args.nouns.split(",") if w]
            lexicon = load_lexicon(args.lexicon) if args.lexicon else None
            n = export_probe(embedder, nouns, args.out, lexicon=lexicon)
    except (ParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ModelLoadError, EmptyTokenization, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{n} records -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
