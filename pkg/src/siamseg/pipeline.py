"""End-to-end per-image segmentation built from the lower-level stages.

One call takes raw patch tokens through head training, affinity
construction (vanilla + kappa * semantic) and the spectral cut. Semantic
mode additionally pools per-segment features so a caller can cluster them
across a whole corpus.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .affinity import (
    AffinityMatrix,
    DEFAULT_KAPPA,
    combine,
    semantic_affinity,
    vanilla_affinity,
)
from .errors import InvalidSpec
from .features import LabelMask, PatchGrid, TokenFeatureMap
from .seeding import stage_seed
from .siamese import AffineRanges, SiameseParams, TrainConfig, TrainResult, train
from .spectral import (
    DEFAULT_KMEANS_K,
    DEFAULT_NUM_EIGENVECTORS,
    DEFAULT_NUM_SEGMENTS,
    SegmentLabeling,
    discrete_segments,
    fiedler_object_mask,
    identify_background,
    kmeans_assign,
    kmeans_fit,
    segment_features,
)


@dataclass(frozen=True)
class RunConfig:
    """Every knob of the pipeline, defaulted to the reference settings."""

    kappa: float = DEFAULT_KAPPA
    iterations: int = 10
    batch_size: int = 2
    learning_rate: float = 1e-2
    num_eigenvectors: int = DEFAULT_NUM_EIGENVECTORS
    num_segments: int = DEFAULT_NUM_SEGMENTS
    kmeans_k: int = DEFAULT_KMEANS_K
    seed: int = 0
    normalize_vanilla: bool = True
    affine: AffineRanges = field(default_factory=AffineRanges)

    def __post_init__(self):
        if self.kappa < 0 or not np.isfinite(self.kappa):
            raise InvalidSpec(f"kappa must be finite and >= 0, got {self.kappa}")
        if min(self.iterations, self.batch_size, self.num_segments, self.kmeans_k) < 1:
            raise InvalidSpec("counts must be >= 1")

    def train_config(self, seed: int | None = None) -> TrainConfig:
        return TrainConfig(
            iterations=self.iterations,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed if seed is None else seed,
            affine=self.affine,
        )


@dataclass(frozen=True)
class ImageResult:
    """Everything the pipeline produced for one image."""

    affinity: AffinityMatrix
    mask: LabelMask
    training: TrainResult | None = None
    segments: SegmentLabeling | None = None


def combined_affinity(
    feature_map: TokenFeatureMap, params: SiameseParams, config: RunConfig
) -> AffinityMatrix:
    """Segmentation graph weights: base token affinity plus the trained term.

    With `normalize_vanilla` off the base is the raw Gram matrix, which
    sits outside the combine() contract, so the sum is formed directly.
    """
    wsa = semantic_affinity(params, feature_map)
    if config.normalize_vanilla:
        return combine(vanilla_affinity(feature_map, True), wsa, config.kappa)
    raw = vanilla_affinity(feature_map, False)
    return AffinityMatrix(
        raw.values + config.kappa * wsa.values, "combined", grid=raw.grid
    )


def object_mask_from_affinity(w: AffinityMatrix, grid: PatchGrid) -> LabelMask:
    return fiedler_object_mask(w, grid)


def segment_object(feature_map: TokenFeatureMap, config: RunConfig = RunConfig()) -> ImageResult:
    """Train the head, build the combined affinity, cut out the object mask."""
    result = train(feature_map, config.train_config())
    w = combined_affinity(feature_map, result.params, config)
    mask = fiedler_object_mask(w, feature_map.grid)
    return ImageResult(affinity=w, mask=mask, training=result)


def segment_semantic_image(
    feature_map: TokenFeatureMap, config: RunConfig = RunConfig()
) -> ImageResult:
    """Discrete spectral segments for one image, background identified."""
    result = train(feature_map, config.train_config())
    w = combined_affinity(feature_map, result.params, config)
    segs = identify_background(
        discrete_segments(
            w,
            num_eigenvectors=config.num_eigenvectors,
            num_segments=config.num_segments,
            seed=stage_seed(config.seed, "segments"),
            grid=feature_map.grid,
        )
    )
    mask = LabelMask(feature_map.grid, segs.labels)
    return ImageResult(affinity=w, mask=mask, training=result, segments=segs)


@dataclass(frozen=True)
class CorpusResult:
    """Cluster-labeled masks for a corpus plus the per-image pipeline state."""

    masks: list[LabelMask]
    images: list[ImageResult]


def semantic_masks(
    feature_maps: list[TokenFeatureMap], config: RunConfig = RunConfig()
) -> CorpusResult:
    """Corpus-level semantic labeling.

    Per image: spectral segments and a background. Across the corpus the
    non-background segment features are pooled and K-means clustered
    (`kmeans_k` clusters); each segment is then renamed to 1 + its cluster
    id, with 0 reserved for background, so labels are comparable across
    images.
    """
    per_image = []
    pooled: list[np.ndarray] = []
    spans: list[list[int]] = []
    for i, feature_map in enumerate(feature_maps):
        cfg = replace(config, seed=stage_seed(config.seed, "image", i))
        result = segment_semantic_image(feature_map, cfg)
        feats = segment_features(feature_map, result.segments)
        spans.append([label for label, _ in feats])
        pooled.extend(vec for _, vec in feats)
        per_image.append(result)
    if not pooled:
        masks = [
            LabelMask(r.segments.grid, np.zeros(r.segments.grid.n, dtype=np.int64))
            for r in per_image
        ]
        return CorpusResult(masks, per_image)
    points = np.vstack(pooled)
    k = min(config.kmeans_k, points.shape[0])
    model, _ = kmeans_fit(points, K=k, seed=stage_seed(config.seed, "kmeans"))
    masks = []
    cursor = 0
    for result, labels_here in zip(per_image, spans):
        cluster_of = {}
        for label in labels_here:
            cluster_of[label] = kmeans_assign(model, points[cursor])
            cursor += 1
        segs = result.segments
        out = np.zeros(segs.grid.n, dtype=np.int64)
        for label in labels_here:
            out[segs.labels == label] = 1 + cluster_of[label]
        masks.append(LabelMask(segs.grid, out))
    return CorpusResult(masks, per_image)
