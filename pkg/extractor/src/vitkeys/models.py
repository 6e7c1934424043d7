"""Patch-token models: pretrained DINO ViTs and a deterministic stub.

A model takes a preprocessed (H, W, 3) uint8 image whose sides are
multiples of its patch size and returns an (Hp*Wp, d) float32 array of
per-patch vectors in row-major grid order, CLS token already dropped.
"""

from __future__ import annotations

import numpy as np


class ModelLoadError(Exception):
    """Checkpoint or backbone could not be loaded."""


class ImageDecodeError(Exception):
    """Input file is not a decodable image."""


class StubModel:
    """Deterministic stand-in for a ViT: no weights, no network.

    Each patch is summarized by its mean RGB and grid position, then
    lifted to `dim` features through a fixed random projection and a
    sine nonlinearity. Pure function of the pixels, so repeated runs
    produce byte-identical outputs.
    """

    def __init__(self, patch_size: int = 16, dim: int = 64):
        self.patch_size = patch_size
        self.dim = dim
        rng = np.random.default_rng(0x55A4)  # fixed basis
        self._basis = rng.standard_normal((5, dim))
        self._phase = rng.uniform(0, 2 * np.pi, dim)

    def extract_keys(self, image: np.ndarray) -> np.ndarray:
        p = self.patch_size
        height, width = image.shape[:2]
        rows, cols = height // p, width // p
        patches = (
            image[: rows * p, : cols * p]
            .reshape(rows, p, cols, p, 3)
            .mean(axis=(1, 3))
            .astype(np.float64)
            / 255.0
        )
        grid_r, grid_c = np.meshgrid(
            np.linspace(0.0, 1.0, rows), np.linspace(0.0, 1.0, cols), indexing="ij"
        )
        summary = np.concatenate(
            [patches.reshape(rows * cols, 3), grid_r.reshape(-1, 1), grid_c.reshape(-1, 1)],
            axis=1,
        )
        tokens = np.sin(2.0 * np.pi * summary @ self._basis + self._phase)
        return tokens.astype(np.float32)


class DinoKeyModel:
    """Keys of the last attention block of a pretrained DINO ViT.

    Loads `model_id` (e.g. ``dino_vits16``) from the facebookresearch/dino
    torch hub. `source` selects queries, keys or values; keys are the
    useful patch representation and the default.
    """

    def __init__(self, model_id: str, source: str = "keys"):
        if source not in ("queries", "keys", "values"):
            raise ModelLoadError(f"unknown token source {source!r}")
        self.source = source
        try:
            import torch
        except ImportError as exc:
            raise ModelLoadError("torch is required for pretrained models") from exc
        self._torch = torch
        try:
            self.model = torch.hub.load("facebookresearch/dino:main", model_id)
        except Exception as exc:
            raise ModelLoadError(f"cannot load {model_id!r}: {exc}") from exc
        self.model.eval()
        self.patch_size = int(self.model.patch_embed.proj.stride[0])
        self.dim = int(self.model.embed_dim)

    def extract_keys(self, image: np.ndarray) -> np.ndarray:
        torch = self._torch
        mean = np.array([0.485, 0.456, 0.406])
        std = np.array([0.229, 0.224, 0.225])
        pixels = (image.astype(np.float32) / 255.0 - mean) / std
        batch = torch.from_numpy(pixels.transpose(2, 0, 1)[None]).float()

        captured = {}

        def hook(module, inputs, output):
            captured["qkv"] = output.detach()

        attn = self.model.blocks[-1].attn
        handle = attn.qkv.register_forward_hook(hook)
        try:
            with torch.no_grad():
                self.model(batch)
        finally:
            handle.remove()
        qkv = captured["qkv"]  # (1, 1 + n, 3 * d)
        n_tokens = qkv.shape[1]
        qkv = qkv.reshape(1, n_tokens, 3, self.dim)
        index = ("queries", "keys", "values").index(self.source)
        tokens = qkv[0, 1:, index, :]  # drop CLS
        return tokens.cpu().numpy().astype(np.float32)


def load_model(model_id: str, patch_size: int = 16, dim: int = 64, source: str = "keys"):
    """`stub` gives the deterministic test model; anything else hits torch hub."""
    if model_id == "stub":
        return StubModel(patch_size=patch_size, dim=dim)
    return DinoKeyModel(model_id, source=source)
