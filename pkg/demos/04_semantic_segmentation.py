"""Semantic labels: spectral segments + dataset-wide K-means clustering.

Run from the repository root:  python demos/04_semantic_segmentation.py
"""

import numpy as np

from siamseg import (
    FixtureSpec,
    PatchGrid,
    RunConfig,
    discrete_segments,
    identify_background,
    segment_features,
    semantic_masks,
    synthesize_fixture,
    vanilla_affinity,
)

grid = PatchGrid.from_grid(8, 8, 16)

# Per image: embed patches in the smallest nontrivial Laplacian
# eigenvectors and K-means them into discrete segments; the largest
# segment is background.
features, planted = synthesize_fixture(
    FixtureSpec(grid, dim=16, block_count=3, noise_sigma=0.05, seed=1)
)
w = vanilla_affinity(features, True)
segments = identify_background(
    discrete_segments(w, num_eigenvectors=2, num_segments=3, seed=0)
)
print("segment sizes:", np.bincount(segments.labels),
      "| background id:", segments.background_label)

# Non-background segments get an L2-normalized mean-token feature each.
for label, vector in segment_features(features, segments):
    print(f"segment {label}: |feature| = {np.linalg.norm(vector):.3f}")

# Across a corpus, segment features are pooled and clustered so that the
# same object class receives the same label in every image (0 stays
# background). Here a four-image corpus of 3-block fixtures.
corpus = [
    synthesize_fixture(FixtureSpec(grid, dim=16, block_count=3,
                                   noise_sigma=0.05, seed=s))[0]
    for s in range(4)
]
config = RunConfig(num_eigenvectors=2, num_segments=3, kmeans_k=4, seed=0)
result = semantic_masks(corpus, config)
for i, mask in enumerate(result.masks):
    print(f"image {i}: labels {sorted(np.unique(mask.labels).tolist())}")
