"""Command line for bundle export."""

from __future__ import annotations

import argparse
import sys

from .export import (
    RESNET_CHECKPOINTS,
    TEST_CHECKPOINT,
    VIT_CHECKPOINTS,
    ExportError,
    export_bundle,
)
from .model import TEST_CHECKPOINT_SEED


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="clip-bundle-export",
        description="Convert a checkpoint into a portable encoder bundle.",
    )
    parser.add_argument(
        "--model",
        default=TEST_CHECKPOINT,
        choices=[TEST_CHECKPOINT, *VIT_CHECKPOINTS, *RESNET_CHECKPOINTS],
    )
    parser.add_argument("--out", required=True, help="output bundle directory")
    parser.add_argument("--checkpoint", help="local weights file (public models)")
    parser.add_argument("--bpe-merges", dest="bpe_merges",
                        help="reference merges file (public models)")
    parser.add_argument("--seed", type=int, default=TEST_CHECKPOINT_SEED)
    parser.add_argument("--merges", type=int, default=700,
                        help="merge count when training the built-in vocabulary")
    parser.add_argument("--no-verify", action="store_true")
    args = parser.parse_args(argv)
    try:
        manifest = export_bundle(
            args.model,
            args.out,
            checkpoint_path=args.checkpoint,
            bpe_merges_path=args.bpe_merges,
            seed=args.seed,
            n_merges=args.merges,
            verify=not args.no_verify,
        )
    except ExportError as e:
        print(f"export failed: {e}", file=sys.stderr)
        return 1
    print(f"exported {manifest['checkpoint']} -> {args.out}")
    print(f"  embedding dim: {manifest['embedding_dim']}")
    print(f"  goldens: {manifest['golden_counts']}")
    if manifest.get("verification"):
        cosines = manifest["verification"]
        worst = min(cosines["text_cosines"] + cosines["image_cosines"])
        print(f"  engine-vs-reference worst cosine: {worst:.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
