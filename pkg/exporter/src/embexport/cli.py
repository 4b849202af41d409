"""embexport command line: image folders in, EMB1 + manifest out."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .export import ExportJob, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embexport")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="embed class image folders into one EMB1 file")
    p.add_argument("--class", dest="classes", action="append", required=True,
                   metavar="NAME=DIR", help="class name and its image directory")
    p.add_argument("--out", required=True, help="output base path (writes .emb1 and .json)")
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--encoder", choices=("clip", "projection"), default="clip")
    p.add_argument("--dim", type=int, default=512,
                   help="embedding width for the projection encoder")
    p.add_argument("--device", default="cpu")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    class_dirs = {}
    for item in args.classes:
        if "=" not in item:
            print(f"error: --class expects NAME=DIR, got {item!r}", file=sys.stderr)
            return 2
        name, directory = item.split("=", 1)
        class_dirs[name] = Path(directory)
    try:
        job = ExportJob(class_dirs, Path(args.out), batch_size=args.batch,
                        encoder=args.encoder, dim=args.dim, device=args.device)
        result = export(job)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ImportError as exc:
        print(f"error: encoder dependencies missing: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {result.emb_path} ({result.rows} rows x {result.dim} dims) "
          f"and {result.manifest_path}")
    if result.skipped:
        print(f"skipped {len(result.skipped)} unreadable file(s)", file=sys.stderr)
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
