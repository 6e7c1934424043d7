"""SSAM v1 writing and the per-image extract pipeline.

The writer is self-contained: the binary layout is the contract between
this exporter and the segmentation engine, so no code is shared.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .preprocess import load_image_rgb, resize_to_patch_multiple

MAGIC = b"SSAM"
VERSION = 1


@dataclass(frozen=True)
class ExtractorConfig:
    """Which model to run and how to size its input."""

    model_id: str = "stub"
    patch_size: int = 16
    short_side: int = 224
    output_dir: str | Path = "."
    token_source: str = "keys"
    stub_dim: int = 64


def write_ssam(tokens: np.ndarray, grid_rows: int, grid_cols: int,
               patch_size: int, path: str | Path) -> None:
    """Write (n, d) float32 tokens in the SSAM v1 layout (atomically)."""
    tokens = np.ascontiguousarray(tokens, dtype="<f4")
    if tokens.shape[0] != grid_rows * grid_cols:
        raise ValueError(
            f"{tokens.shape[0]} tokens do not fill a {grid_rows}x{grid_cols} grid"
        )
    header = struct.pack(
        "<4sIIIII", MAGIC, VERSION, grid_rows, grid_cols, tokens.shape[1], patch_size
    )
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(header + tokens.tobytes())
    os.replace(tmp, path)


def extract(image_path: str | Path, config: ExtractorConfig, model=None) -> Path:
    """Run the model on one image and write `<stem>.ssam` to the output dir.

    Returns the written path. The model's patch size wins over the config
    when they disagree (the grid must match the embedding stride).
    """
    from .models import load_model

    if model is None:
        model = load_model(
            config.model_id,
            patch_size=config.patch_size,
            dim=config.stub_dim,
            source=config.token_source,
        )
    image = load_image_rgb(image_path)
    patch = model.patch_size
    sized = resize_to_patch_multiple(image, patch, config.short_side)
    rows, cols = sized.shape[0] // patch, sized.shape[1] // patch
    tokens = model.extract_keys(sized)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"{Path(image_path).stem}.ssam"
    write_ssam(tokens, rows, cols, patch, out_path)
    return out_path
