"""siamseg: spectral segmentation on siamese-refined patch-token affinities.

The pipeline, per image: load (or synthesize) a grid of patch tokens,
train a tiny projector/predictor head on two randomly warped views of the
grid with a symmetric stop-gradient cosine loss, add the head's output
Gram matrix (scaled by kappa) to the mean-centered token Gram matrix, and
segment by eigenvectors of the normalized graph Laplacian: the second
eigenvector's sign cut for object masks, K-means over the leading
eigenvectors (and dataset-wide K-means over segment features) for
semantic labels.
"""

from .affinity import (
    AffinityMatrix,
    DEFAULT_KAPPA,
    combine,
    load_affinity,
    mask_affinity,
    save_affinity,
    save_heatmap,
    semantic_affinity,
    vanilla_affinity,
)
from .features import (
    FixtureSpec,
    LabelMask,
    PatchGrid,
    TokenFeatureMap,
    load_features,
    load_mask,
    planted_blocks,
    rectangular_split,
    save_features,
    save_mask,
    synthesize_fixture,
)
from .metrics import (
    EvalReport,
    ablation_csv,
    ablation_sweep,
    frobenius_gap,
    miou,
    pixel_accuracy,
)
from .pipeline import (
    CorpusResult,
    ImageResult,
    RunConfig,
    combined_affinity,
    segment_object,
    segment_semantic_image,
    semantic_masks,
)
from .seeding import stage_rng, stage_seed
from .siamese import (
    AffineParams,
    AffineRanges,
    SiameseParams,
    TrainConfig,
    TrainResult,
    ViewPair,
    cosine_distance,
    draw_affine_params,
    identity_affine,
    loss_gradient,
    predict,
    project,
    random_affine_views,
    symmetric_loss,
    train,
)
from .spectral import (
    ClusterModel,
    EigenBasis,
    SegmentLabeling,
    discrete_segments,
    eigendecompose,
    fiedler_object_mask,
    identify_background,
    kmeans_assign,
    kmeans_fit,
    normalized_laplacian,
    save_eigenvector_heatmaps,
    segment_features,
)

__version__ = "0.1.0"
