import numpy as np
import pytest

from oracles import (
    best_label_bijection_agreement,
    jacobi_eigh,
    min_ncut_bipartition,
    normalized_cut_value,
)
from siamseg import (
    AffinityMatrix,
    FixtureSpec,
    PatchGrid,
    SegmentLabeling,
    TokenFeatureMap,
    discrete_segments,
    eigendecompose,
    fiedler_object_mask,
    identify_background,
    kmeans_assign,
    kmeans_fit,
    normalized_laplacian,
    planted_blocks,
    rectangular_split,
    segment_features,
    synthesize_fixture,
    vanilla_affinity,
)
from siamseg.errors import (
    AllZeroAffinity,
    DegenerateFiedlerWarning,
    InvalidSpec,
    NotSymmetric,
    TooFewPoints,
)


def _aff(values, rows=None, cols=None):
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    if rows is None:
        rows, cols = 1, n
    return AffinityMatrix(values, "combined", grid=PatchGrid.from_grid(rows, cols, 1))


# --- Laplacian -----------------------------------------------------------------


def test_laplacian_closed_form_pair():
    lap = normalized_laplacian(_aff([[1.0, 1.0], [1.0, 1.0]]))
    assert np.abs(lap - np.array([[0.5, -0.5], [-0.5, 0.5]])).max() < 1e-15


def test_laplacian_identity_affinity():
    lap = normalized_laplacian(_aff(np.eye(3)))
    assert np.abs(lap).max() == 0.0


def test_laplacian_spectrum_bounds(rng):
    for _ in range(10):
        w = rng.random((8, 8))
        w = (w + w.T) / 2
        lap = normalized_laplacian(_aff(w, 2, 4))
        values = np.linalg.eigvalsh(lap)
        assert values[0] < 1e-10  # connected graph: zero eigenvalue
        assert values.min() > -1e-8
        assert values.max() < 2.0 + 1e-8


def test_laplacian_negative_clamp():
    w = np.array([[1.0, -0.5], [-0.5, 1.0]])
    lap = normalized_laplacian(_aff(w))
    # negatives clamp to zero, leaving two isolated self-loops
    assert np.abs(lap).max() == 0.0


def test_laplacian_all_zero_affinity():
    with pytest.raises(AllZeroAffinity):
        normalized_laplacian(_aff([[0.0, -1.0], [-1.0, 0.0]]))


# --- eigensolver -----------------------------------------------------------------


def test_eigendecompose_identity():
    basis = eigendecompose(np.eye(4), 4)
    assert np.abs(basis.eigenvalues - 1.0).max() < 1e-12


def test_eigendecompose_diagonal():
    basis = eigendecompose(np.diag([3.0, 1.0, 2.0]), 3)
    assert np.abs(basis.eigenvalues - [1.0, 2.0, 3.0]).max() < 1e-12
    expected_axes = [1, 2, 0]
    for j, axis in enumerate(expected_axes):
        vec = np.abs(basis.eigenvectors[:, j])
        assert vec[axis] == pytest.approx(1.0, abs=1e-12)


def test_eigendecompose_matches_jacobi(rng):
    matrix = rng.standard_normal((12, 12))
    matrix = (matrix + matrix.T) / 2
    basis = eigendecompose(matrix, 12)
    jac_values, jac_vectors = jacobi_eigh(matrix)
    # the oracle itself must satisfy the eigen equation
    assert np.abs(matrix @ jac_vectors - jac_vectors * jac_values).max() < 1e-9
    assert np.abs(basis.eigenvalues - jac_values).max() < 1e-8
    for j in range(12):
        cos = abs(basis.eigenvectors[:, j] @ jac_vectors[:, j])
        assert cos > 1 - 1e-8


def test_eigendecompose_contracts(rng):
    matrix = rng.standard_normal((9, 9))
    matrix = (matrix + matrix.T) / 2
    basis = eigendecompose(matrix, 5)
    residual = matrix @ basis.eigenvectors - basis.eigenvectors * basis.eigenvalues
    assert np.abs(residual).max() < 1e-8
    gram = basis.eigenvectors.T @ basis.eigenvectors
    assert np.abs(gram - np.eye(5)).max() < 1e-8
    assert (np.diff(basis.eigenvalues) >= 0).all()
    for j in range(5):
        col = basis.eigenvectors[:, j]
        first = col[np.abs(col) > 1e-12][0]
        assert first > 0  # deterministic sign convention


def test_eigendecompose_rejects_asymmetric(rng):
    with pytest.raises(NotSymmetric):
        eigendecompose(rng.standard_normal((4, 4)), 2)


# --- Fiedler object masks ---------------------------------------------------------


def test_two_patch_closed_form():
    mask = fiedler_object_mask(_aff([[1.0, 0.01], [0.01, 1.0]]))
    assert sorted(mask.labels.tolist()) == [0, 1]


def test_uniform_affinity_degenerate():
    w = _aff(np.ones((16, 16)), 4, 4)
    with pytest.warns(DegenerateFiedlerWarning):
        mask = fiedler_object_mask(w)
    assert (mask.labels == 0).all()


def test_planted_cut_is_minimum_ncut():
    # 8-patch instance: spectral answer must equal the exhaustive optimum
    grid = PatchGrid.from_grid(2, 4, 1)
    blocks = rectangular_split(grid, axis=1, at=2)
    fmap, planted = planted_blocks(grid, 8, blocks, noise_sigma=0.05, seed=13)
    w = vanilla_affinity(fmap, True)
    clamped = np.maximum(w.values, 0.0)
    best_side = min_ncut_bipartition(clamped)
    planted_side = planted.labels.astype(bool)
    assert (
        (best_side == planted_side).all() or (best_side == ~planted_side).all()
    )
    pred = fiedler_object_mask(w)
    pred_side = pred.labels.astype(bool)
    assert normalized_cut_value(clamped, pred_side) == pytest.approx(
        normalized_cut_value(clamped, best_side)
    )


def test_fiedler_recovers_all_rectangular_splits(grid8):
    for axis in (0, 1):
        for at in range(1, 8):
            blocks = rectangular_split(grid8, axis, at)
            fmap, planted = planted_blocks(grid8, 16, blocks, 0.0, seed=5)
            pred = fiedler_object_mask(vanilla_affinity(fmap, True))
            same = (pred.labels == planted.labels).all()
            flipped = (pred.labels == 1 - planted.labels).all()
            assert same or flipped


def test_fiedler_scale_invariant(grid8):
    for seed in range(5):
        fmap, _ = synthesize_fixture(
            FixtureSpec(grid8, dim=16, block_count=2, noise_sigma=0.1, seed=seed)
        )
        w = vanilla_affinity(fmap, True)
        base = fiedler_object_mask(w)
        for c in (0.25, 3.0, 117.0):
            scaled = AffinityMatrix(c * w.values, "combined", grid=w.grid)
            assert np.array_equal(fiedler_object_mask(scaled).labels, base.labels)


def test_foreground_is_smaller_side(grid8):
    blocks = rectangular_split(grid8, axis=1, at=2)  # 16 vs 48 patches
    fmap, _ = planted_blocks(grid8, 16, blocks, 0.0, seed=1)
    pred = fiedler_object_mask(vanilla_affinity(fmap, True))
    assert pred.labels.sum() == 16  # the small block is foreground


# --- discrete segments --------------------------------------------------------------


def test_discrete_segments_recover_planted_blocks(grid8):
    # k nearly-disconnected blocks leave exactly k-1 nontrivial indicator
    # directions; wider embeddings pull in high-variance in-block modes
    for seed in range(5):
        fmap, planted = synthesize_fixture(
            FixtureSpec(grid8, dim=16, block_count=3, noise_sigma=0.02, seed=seed)
        )
        w = vanilla_affinity(fmap, True)
        segs = discrete_segments(w, num_eigenvectors=2, num_segments=3, seed=0)
        agreement = best_label_bijection_agreement(segs.labels, planted.labels)
        assert agreement == 1.0


def test_discrete_segments_single_cluster(grid8, two_block):
    fmap, _ = two_block
    segs = discrete_segments(
        vanilla_affinity(fmap, True), num_eigenvectors=5, num_segments=1, seed=0
    )
    assert (segs.labels == 0).all()


def test_discrete_segments_deterministic(grid8):
    fmap, _ = synthesize_fixture(
        FixtureSpec(grid8, dim=16, block_count=4, noise_sigma=0.1, seed=3)
    )
    w = vanilla_affinity(fmap, True)
    a = discrete_segments(w, num_eigenvectors=6, num_segments=4, seed=9)
    b = discrete_segments(w, num_eigenvectors=6, num_segments=4, seed=9)
    assert np.array_equal(a.labels, b.labels)


# --- background and segment features --------------------------------------------------


def test_identify_background_rules():
    grid = PatchGrid.from_grid(1, 4, 1)
    labeled = identify_background(SegmentLabeling(grid, np.array([0, 0, 0, 1])))
    assert labeled.background_label == 0
    tie = identify_background(
        SegmentLabeling(PatchGrid.from_grid(1, 2, 1), np.array([0, 1]))
    )
    assert tie.background_label == 0  # tie goes to the smaller id
    single = identify_background(
        SegmentLabeling(PatchGrid.from_grid(1, 2, 1), np.array([0, 0]))
    )
    assert single.background_label == 0


def test_segment_features_single_patch(rng):
    grid = PatchGrid.from_grid(1, 2, 1)
    tokens = rng.standard_normal((2, 4)).astype(np.float32)
    fmap = TokenFeatureMap(grid, tokens)
    segs = SegmentLabeling(grid, np.array([0, 1]), background_label=0)
    feats = segment_features(fmap, segs)
    assert len(feats) == 1
    label, vec = feats[0]
    assert label == 1
    expected = tokens[1].astype(np.float64)
    expected /= np.linalg.norm(expected)
    assert np.abs(vec - expected).max() < 1e-12


def test_segment_features_mean_idempotent():
    grid = PatchGrid.from_grid(1, 2, 1)
    token = np.array([3.0, 4.0], dtype=np.float32)
    fmap = TokenFeatureMap(grid, np.stack([token, token]))
    segs = SegmentLabeling(grid, np.array([0, 0]))
    [(_, vec)] = segment_features(fmap, segs)
    assert np.abs(vec - np.array([0.6, 0.8])).max() < 1e-7


def test_segment_features_scalar_mean_oracle(rng):
    grid = PatchGrid.from_grid(2, 3, 1)
    tokens = rng.standard_normal((6, 3)).astype(np.float32)
    fmap = TokenFeatureMap(grid, tokens)
    labels = np.array([0, 1, 0, 1, 1, 0])
    segs = SegmentLabeling(grid, labels, background_label=1)
    [(label, vec)] = segment_features(fmap, segs)
    assert label == 0
    acc = np.zeros(3)
    count = 0
    for i in range(6):
        if labels[i] == 0:
            acc += tokens[i].astype(np.float64)
            count += 1
    mean = acc / count
    assert np.abs(vec - mean / np.linalg.norm(mean)).max() < 1e-12


# --- K-means ------------------------------------------------------------------------


def test_kmeans_exact_cover(rng):
    points = rng.standard_normal((5, 3))
    model, labels = kmeans_fit(points, K=5, seed=0)
    assert sorted(labels.tolist()) == [0, 1, 2, 3, 4]
    assert model.cost_trace[-1] == pytest.approx(0.0, abs=1e-24)


def test_kmeans_single_cluster_is_mean(rng):
    points = rng.standard_normal((20, 4))
    model, labels = kmeans_fit(points, K=1, seed=0)
    assert np.abs(model.centroids[0] - points.mean(axis=0)).max() < 1e-12
    assert (labels == 0).all()


def test_kmeans_three_blobs(rng):
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    truth = np.repeat(np.arange(3), 30)
    points = centers[truth] + 0.5 * rng.standard_normal((90, 2))
    _, labels = kmeans_fit(points, K=3, seed=4)
    assert best_label_bijection_agreement(labels, truth) == 1.0


def test_kmeans_cost_non_increasing(rng):
    points = rng.standard_normal((60, 5))
    model, _ = kmeans_fit(points, K=6, seed=1)
    costs = np.array(model.cost_trace)
    assert (np.diff(costs) <= 1e-9).all()


def test_kmeans_deterministic(rng):
    points = rng.standard_normal((40, 3))
    a = kmeans_fit(points, K=4, seed=8)
    b = kmeans_fit(points, K=4, seed=8)
    assert np.array_equal(a[0].centroids, b[0].centroids)
    assert np.array_equal(a[1], b[1])


def test_kmeans_too_few_points(rng):
    with pytest.raises(TooFewPoints):
        kmeans_fit(rng.standard_normal((3, 2)), K=4, seed=0)


def test_kmeans_assign_tie_goes_to_smaller_index():
    from siamseg.spectral import ClusterModel

    model = ClusterModel(2, np.array([[0.0], [2.0]]), seed=0)
    assert kmeans_assign(model, np.array([1.0])) == 0
    assert kmeans_assign(model, np.array([1.1])) == 1


# --- type invariants ------------------------------------------------------------------


def test_segment_labeling_requires_contiguous_labels():
    grid = PatchGrid.from_grid(1, 3, 1)
    with pytest.raises(InvalidSpec):
        SegmentLabeling(grid, np.array([0, 2, 2]))
    with pytest.raises(InvalidSpec):
        SegmentLabeling(grid, np.array([1, 1, 2]))
