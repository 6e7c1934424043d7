"""Patch-affinity matrices.

Three flavors drive segmentation: the raw token Gram matrix with its
global mean subtracted ("vanilla"), the Gram matrix of the trained
predictor outputs ("semantic"), and their weighted sum ("combined",
vanilla + kappa * semantic). A fourth, mask-induced flavor turns a label
mask into the ideal 0/1 affinity used as an evaluation reference.
Mean subtraction makes negative entries unavoidable; they are kept here
and clamped later when the graph Laplacian is built.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidSpec, ShapeMismatch
from .features import (
    LabelMask,
    PatchGrid,
    TokenFeatureMap,
    load_features,
    save_features,
    save_mask,
)
from .siamese import SiameseParams, predict, project

DEFAULT_KAPPA = 0.1

KINDS = ("vanilla", "vanilla_unnormalized", "semantic", "combined", "mask_induced")

_SYMMETRY_TOL = 1e-9


@dataclass(frozen=True)
class AffinityMatrix:
    """Symmetric n x n patch affinity, tagged with how it was built.

    `grid` records the patch layout of the source image when known; the
    spectral stage needs it to reshape per-patch results.
    """

    values: np.ndarray
    kind: str
    grid: PatchGrid | None = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise InvalidSpec(f"affinity must be square, got shape {values.shape}")
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown affinity kind {self.kind!r}")
        if not np.all(np.isfinite(values)):
            raise InvalidSpec("affinity contains non-finite entries")
        if np.abs(values - values.T).max(initial=0.0) >= _SYMMETRY_TOL:
            raise InvalidSpec("affinity is not symmetric within 1e-9")
        if self.kind == "vanilla" and abs(values.mean()) >= _SYMMETRY_TOL:
            raise InvalidSpec("vanilla affinity must have zero global mean")
        if self.kind == "mask_induced" and not np.isin(values, (0.0, 1.0)).all():
            raise InvalidSpec("mask-induced affinity entries must be 0 or 1")
        if self.grid is not None and self.grid.n != values.shape[0]:
            raise ShapeMismatch(
                f"grid has {self.grid.n} patches but affinity is {values.shape[0]}^2"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _symmetrize(g: np.ndarray) -> np.ndarray:
    # BLAS blocking can leave (i,j) and (j,i) a few ulps apart
    return (g + g.T) / 2.0


def vanilla_affinity(feature_map: TokenFeatureMap, normalize: bool = True) -> AffinityMatrix:
    """Token Gram matrix F F^T, mean-subtracted when `normalize` is set.

    The normalization subtracts the scalar mean of all n^2 entries from
    every entry, which centers the matrix at zero and is what separates
    the "vanilla" kind from "vanilla_unnormalized".
    """
    tokens = feature_map.tokens64()
    gram = _symmetrize(tokens @ tokens.T)
    if normalize:
        gram = gram - gram.mean()
        return AffinityMatrix(gram, "vanilla", grid=feature_map.grid)
    return AffinityMatrix(gram, "vanilla_unnormalized", grid=feature_map.grid)


def semantic_affinity(params: SiameseParams, feature_map: TokenFeatureMap) -> AffinityMatrix:
    """Gram matrix Z Z^T of the predictor outputs z_i = predictor(projector(f_i)).

    Inference runs the head on the untransformed tokens (an identity view),
    so the matrix depends only on the tokens and the trained weights.
    """
    z = predict(params, project(params, feature_map.tokens64()))
    return AffinityMatrix(_symmetrize(z @ z.T), "semantic", grid=feature_map.grid)


def combine(
    vanilla: AffinityMatrix, semantic: AffinityMatrix, kappa: float = DEFAULT_KAPPA
) -> AffinityMatrix:
    """Weighted sum vanilla + kappa * semantic used as the segmentation graph."""
    if vanilla.kind != "vanilla" or semantic.kind != "semantic":
        raise InvalidSpec(
            f"combine expects (vanilla, semantic), got ({vanilla.kind}, {semantic.kind})"
        )
    if vanilla.n != semantic.n:
        raise ShapeMismatch(f"sizes differ: {vanilla.n} vs {semantic.n}")
    if not np.isfinite(kappa) or kappa < 0:
        raise InvalidSpec(f"kappa must be a finite nonnegative real, got {kappa}")
    grid = vanilla.grid if vanilla.grid is not None else semantic.grid
    return AffinityMatrix(
        vanilla.values + kappa * semantic.values, "combined", grid=grid
    )


def mask_affinity(mask: LabelMask) -> AffinityMatrix:
    """Ideal affinity of a labeling: entry (i, j) is 1 iff the labels match."""
    labels = mask.labels
    values = (labels[:, None] == labels[None, :]).astype(np.float64)
    return AffinityMatrix(values, "mask_induced", grid=mask.grid)


# --- export -----------------------------------------------------------------


def save_affinity(matrix: AffinityMatrix, path: str | Path) -> None:
    """Store the matrix in the SSAM container (Hp=n, Wp=n, d=1, P=1)."""
    n = matrix.n
    carrier = TokenFeatureMap(
        PatchGrid.from_grid(n, n, 1),
        matrix.values.reshape(n * n, 1).astype(np.float32),
    )
    save_features(carrier, path)


def load_affinity(path: str | Path, kind: str = "combined") -> AffinityMatrix:
    """Read a matrix stored by :func:`save_affinity`."""
    carrier = load_features(path)
    n = carrier.grid.grid_rows
    if carrier.grid.grid_cols != n or carrier.dim != 1:
        raise InvalidSpec("file is not an affinity container (needs Hp=Wp, d=1)")
    return AffinityMatrix(carrier.tokens64().reshape(n, n), kind)


def heatmap_bytes(values: np.ndarray) -> np.ndarray:
    """Min-max scale a matrix onto 0..255 for PGM heatmap export."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros(values.shape, dtype=np.uint8)
    return np.round((values - lo) / (hi - lo) * 255.0).astype(np.uint8)


def save_heatmap(values: np.ndarray, path: str | Path) -> None:
    """Write any 2-D real matrix as a min-max scaled grayscale PGM."""
    scaled = heatmap_bytes(values)
    rows, cols = scaled.shape
    mask = LabelMask(PatchGrid.from_grid(rows, cols, 1), scaled.ravel().astype(np.int64))
    save_mask(mask, path)
