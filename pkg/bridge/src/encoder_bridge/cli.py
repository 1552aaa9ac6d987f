"""Command line: export a manifest of images to an embeddings sidecar."""

from __future__ import annotations

import argparse
import sys

from encoder_bridge.encoders import ENCODERS, EncoderUnavailable
from encoder_bridge.export import BridgeError, export_embeddings, write_digit_corpus


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="encoder-bridge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="encode manifest images into a sidecar file")
    p.add_argument("--manifest", required=True, help="CSV of id,path rows")
    p.add_argument("--encoder", default="pixel_norm", choices=sorted(ENCODERS))
    p.add_argument("--out", required=True)

    p = sub.add_parser("digits", help="write the bundled digit corpus and manifest")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--per-class", type=int, default=20)

    args = parser.parse_args(argv)
    try:
        if args.command == "export":
            n = export_embeddings(args.manifest, args.encoder, args.out)
            print(f"wrote {n} records to {args.out}")
        else:
            manifest, _ = write_digit_corpus(args.out_dir, args.per_class)
            print(f"wrote digit corpus with manifest {manifest}")
    except (BridgeError, EncoderUnavailable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
