"""CLI: extract --model <id> --patch 16 --out dir img1 img2 ..."""

from __future__ import annotations

import argparse
import sys

from .export import ExtractorConfig, extract
from .models import ImageDecodeError, ModelLoadError, load_model


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="extract",
        description="Export ViT patch tokens as SSAM v1 feature files.",
    )
    parser.add_argument("images", nargs="+", help="input image files")
    parser.add_argument("--model", default="dino_vits16",
                        help="torch-hub DINO id, or 'stub' for the test model")
    parser.add_argument("--patch", type=int, default=16,
                        help="patch size (stub model; pretrained models fix their own)")
    parser.add_argument("--short-side", type=int, default=224)
    parser.add_argument("--source", choices=("queries", "keys", "values"),
                        default="keys", help="which attention projection to export")
    parser.add_argument("--dim", type=int, default=64, help="stub model token dimension")
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)

    config = ExtractorConfig(
        model_id=args.model,
        patch_size=args.patch,
        short_side=args.short_side,
        output_dir=args.out,
        token_source=args.source,
        stub_dim=args.dim,
    )
    try:
        model = load_model(args.model, patch_size=args.patch, dim=args.dim,
                           source=args.source)
        for image in args.images:  # sequential: predictable memory use
            path = extract(image, config, model=model)
            print(path)
    except (ModelLoadError, ImageDecodeError, OSError) as exc:
        print(f"extract: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
