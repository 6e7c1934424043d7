"""Spectral segmentation on the patch-affinity graph.

Objects come from the sign pattern of the Fiedler vector (second-smallest
eigenvector) of the symmetric normalized Laplacian; semantic segments come
from K-means on the leading nontrivial eigenvectors, with the largest
segment taken as background and the remaining segments pooled into feature
vectors for dataset-wide clustering.

Affinity entries can be negative (mean subtraction upstream); they are
clamped to zero here because the normalized Laplacian needs nonnegative
degrees.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .affinity import AffinityMatrix, save_heatmap
from .errors import (
    AllZeroAffinity,
    DegenerateFiedlerWarning,
    EmptySegment,
    InvalidSpec,
    NoConvergence,
    NotSymmetric,
    ShapeMismatch,
    TooFewPoints,
    ZeroVector,
)
from .features import LabelMask, PatchGrid, TokenFeatureMap, relabel_contiguous
from .seeding import stage_rng

_SYM_TOL = 1e-9
_EIGENGAP_TOL = 1e-10
_SIGN_TOL = 1e-12

DEFAULT_NUM_EIGENVECTORS = 15
DEFAULT_NUM_SEGMENTS = 15
DEFAULT_KMEANS_K = 20


@dataclass(frozen=True)
class EigenBasis:
    """Ascending eigenvalues and orthonormal eigenvectors (one per column)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.eigenvalues, dtype=np.float64)
        vectors = np.asarray(self.eigenvectors, dtype=np.float64)
        if vectors.ndim != 2 or values.shape != (vectors.shape[1],):
            raise InvalidSpec(
                f"need m values for an (n, m) vector matrix, got "
                f"{values.shape} and {vectors.shape}"
            )
        if np.any(np.diff(values) < 0):
            raise InvalidSpec("eigenvalues must be ascending")
        values.setflags(write=False)
        vectors.setflags(write=False)
        object.__setattr__(self, "eigenvalues", values)
        object.__setattr__(self, "eigenvectors", vectors)


@dataclass(frozen=True)
class SegmentLabeling:
    """Per-patch segment ids covering 0..L-1, with an optional background id."""

    grid: PatchGrid
    labels: np.ndarray
    background_label: int | None = None

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (self.grid.n,):
            raise ShapeMismatch(
                f"labels shape {labels.shape} does not cover the {self.grid.n}-patch grid"
            )
        present = np.unique(labels)
        if present[0] != 0 or present[-1] != len(present) - 1:
            raise InvalidSpec("labels must cover a contiguous range starting at 0")
        if self.background_label is not None and self.background_label not in present:
            raise InvalidSpec(f"background label {self.background_label} not present")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def num_segments(self) -> int:
        return int(self.labels.max()) + 1

    def to_mask(self) -> LabelMask:
        return LabelMask(self.grid, self.labels)


@dataclass(frozen=True)
class ClusterModel:
    """Fitted K-means centroids plus the per-sweep assignment costs."""

    K: int
    centroids: np.ndarray
    seed: int
    cost_trace: tuple[float, ...] = ()

    def __post_init__(self):
        centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.K < 1 or centroids.shape[0] != self.K:
            raise InvalidSpec(f"need K={self.K} centroid rows, got {centroids.shape}")
        if not np.all(np.isfinite(centroids)):
            raise InvalidSpec("centroids contain non-finite entries")
        centroids.setflags(write=False)
        object.__setattr__(self, "centroids", centroids)


# --- Laplacian and eigensolver ----------------------------------------------


def clamped_affinity(w: AffinityMatrix) -> np.ndarray:
    """Affinity with negative entries clamped to zero (Laplacian precondition)."""
    clamped = np.maximum(w.values, 0.0)
    if clamped.max(initial=0.0) == 0.0:
        raise AllZeroAffinity("every affinity entry clamped to zero")
    return clamped


def normalized_laplacian(w: AffinityMatrix) -> np.ndarray:
    """Symmetric normalized Laplacian D^{-1/2} (D - W) D^{-1/2} of the clamped graph.

    Rows with zero degree get a zero D^{-1/2} entry, leaving isolated
    patches as zero rows (eigenvalue 0).
    """
    clamped = clamped_affinity(w)
    degree = clamped.sum(axis=1)
    inv_sqrt = np.where(degree > 0, 1.0 / np.sqrt(np.where(degree > 0, degree, 1.0)), 0.0)
    lap = (np.diag(degree) - clamped) * inv_sqrt[:, None] * inv_sqrt[None, :]
    return (lap + lap.T) / 2.0


def eigendecompose(matrix: np.ndarray, m: int) -> EigenBasis:
    """The m algebraically smallest eigenpairs of a symmetric matrix.

    Ascending eigenvalues, orthonormal eigenvectors, and a deterministic
    sign: the first component of each vector larger than 1e-12 in magnitude
    is made positive.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    n = matrix.shape[0]
    if matrix.ndim != 2 or matrix.shape != (n, n):
        raise InvalidSpec(f"matrix must be square, got {matrix.shape}")
    if not 1 <= m <= n:
        raise InvalidSpec(f"m must be in 1..{n}, got {m}")
    if np.abs(matrix - matrix.T).max(initial=0.0) >= _SYM_TOL:
        raise NotSymmetric("matrix is not symmetric within 1e-9")
    try:
        values, vectors = np.linalg.eigh((matrix + matrix.T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"eigendecomposition failed: {exc}") from exc
    values = values[:m]
    vectors = vectors[:, :m]
    for j in range(m):
        col = vectors[:, j]
        nonzero = np.flatnonzero(np.abs(col) > _SIGN_TOL)
        if nonzero.size and col[nonzero[0]] < 0:
            vectors[:, j] = -col
    return EigenBasis(values, vectors)


# --- object segmentation ----------------------------------------------------


def _fiedler_vector(w: AffinityMatrix) -> np.ndarray | None:
    """Second-eigenvector direction, or None when it is ambiguous.

    For a graph with two exactly disconnected components the two smallest
    eigenvalues coincide and the solver returns an arbitrary basis of the
    nullspace; the partition-carrying direction is recovered as the vector
    in that 2-D span orthogonal to the trivial sqrt-degree direction.
    A repeated second eigenvalue (e.g. a fully uniform graph) leaves no
    preferred direction at all, which reports as degenerate.
    """
    lap = normalized_laplacian(w)
    n = lap.shape[0]
    basis = eigendecompose(lap, min(3, n))
    lam = basis.eigenvalues
    y0, y1 = basis.eigenvectors[:, 0], basis.eigenvectors[:, 1]
    if lam[1] - lam[0] <= _EIGENGAP_TOL:
        degree = clamped_affinity(w).sum(axis=1)
        trivial = np.sqrt(degree)
        trivial /= np.linalg.norm(trivial)
        coeffs = np.array([y0 @ trivial, y1 @ trivial])
        if np.linalg.norm(coeffs) < 1e-8:
            return y1
        ortho = np.array([-coeffs[1], coeffs[0]])
        ortho /= np.linalg.norm(ortho)
        vec = basis.eigenvectors[:, :2] @ ortho
        return _fix_sign(vec)
    if n >= 3 and lam[2] - lam[1] <= _EIGENGAP_TOL:
        return None
    return y1


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    nonzero = np.flatnonzero(np.abs(vec) > _SIGN_TOL)
    if nonzero.size and vec[nonzero[0]] < 0:
        return -vec
    return vec


def _border_count(member: np.ndarray, grid: PatchGrid) -> int:
    field = member.reshape(grid.grid_rows, grid.grid_cols)
    border = np.zeros_like(field, dtype=bool)
    border[0, :] = border[-1, :] = True
    border[:, 0] = border[:, -1] = True
    return int((field & border).sum())


def _resolve_grid(w: AffinityMatrix, grid: PatchGrid | None) -> PatchGrid:
    if grid is not None:
        if grid.n != w.n:
            raise ShapeMismatch(f"grid has {grid.n} patches, affinity {w.n}")
        return grid
    if w.grid is not None:
        return w.grid
    raise InvalidSpec("affinity carries no grid; pass one explicitly")


def fiedler_object_mask(w: AffinityMatrix, grid: PatchGrid | None = None) -> LabelMask:
    """Binary object mask from the sign cut of the Fiedler vector.

    The side with fewer patches becomes foreground (label 1); an equal
    split prefers the side with fewer grid-border patches, then the
    positive-sign side. When no partition direction exists the mask is
    all background and a :class:`DegenerateFiedlerWarning` is emitted.
    """
    grid = _resolve_grid(w, grid)
    if w.n < 2:
        raise InvalidSpec("need at least two patches to bipartition")
    vec = _fiedler_vector(w)
    if vec is None:
        warnings.warn(
            "second eigenvector direction is ambiguous; returning all background",
            DegenerateFiedlerWarning,
            stacklevel=2,
        )
        return LabelMask(grid, np.zeros(w.n, dtype=np.int64))
    positive = vec > 0.0
    if positive.all() or not positive.any():
        warnings.warn(
            "sign cut left one side empty; returning all background",
            DegenerateFiedlerWarning,
            stacklevel=2,
        )
        return LabelMask(grid, np.zeros(w.n, dtype=np.int64))
    n_pos = int(positive.sum())
    if n_pos * 2 < w.n:
        foreground = positive
    elif n_pos * 2 > w.n:
        foreground = ~positive
    else:
        pos_border = _border_count(positive, grid)
        neg_border = _border_count(~positive, grid)
        if pos_border < neg_border:
            foreground = positive
        elif neg_border < pos_border:
            foreground = ~positive
        else:
            foreground = positive
    return LabelMask(grid, foreground.astype(np.int64))


# --- semantic segmentation --------------------------------------------------


def discrete_segments(
    w: AffinityMatrix,
    num_eigenvectors: int = DEFAULT_NUM_EIGENVECTORS,
    num_segments: int = DEFAULT_NUM_SEGMENTS,
    seed: int = 0,
    grid: PatchGrid | None = None,
) -> SegmentLabeling:
    """Cluster patches in the spectral embedding into discrete segments.

    Each patch is embedded as its row across the `num_eigenvectors`
    smallest nontrivial eigenvectors (the trivial sqrt-degree direction is
    excluded) and K-means with `num_segments` clusters labels the rows.
    """
    grid = _resolve_grid(w, grid)
    if w.n < num_eigenvectors:
        raise InvalidSpec(
            f"need at least {num_eigenvectors} patches, got {w.n}"
        )
    lap = normalized_laplacian(w)
    m = min(num_eigenvectors + 1, w.n)
    basis = eigendecompose(lap, m)
    embedding = basis.eigenvectors[:, 1:m]
    model, labels = kmeans_fit(embedding, K=num_segments, seed=seed)
    return SegmentLabeling(grid, relabel_contiguous(labels))


def identify_background(segments: SegmentLabeling) -> SegmentLabeling:
    """Mark the largest segment (ties to the smaller id) as background."""
    counts = np.bincount(segments.labels, minlength=segments.num_segments)
    return SegmentLabeling(
        segments.grid, segments.labels, background_label=int(counts.argmax())
    )


def segment_features(
    feature_map: TokenFeatureMap, segments: SegmentLabeling
) -> list[tuple[int, np.ndarray]]:
    """L2-normalized mean token of every non-background segment."""
    if feature_map.grid.n != segments.grid.n:
        raise ShapeMismatch(
            f"feature grid has {feature_map.grid.n} patches, labeling {segments.grid.n}"
        )
    tokens = feature_map.tokens64()
    out = []
    for label in range(segments.num_segments):
        if label == segments.background_label:
            continue
        member = segments.labels == label
        if not member.any():
            raise EmptySegment(f"segment {label} has no patches")
        mean = tokens[member].mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm == 0.0:
            raise ZeroVector(f"segment {label} has a zero mean token")
        out.append((label, mean / norm))
    return out


# --- K-means ----------------------------------------------------------------


def _plus_plus_seeds(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(k - 1):
        total = d2.sum()
        if total == 0.0:
            chosen.append(int(rng.integers(n)))
        else:
            chosen.append(int(rng.choice(n, p=d2 / total)))
        d2 = np.minimum(d2, ((points - points[chosen[-1]]) ** 2).sum(axis=1))
    return points[chosen].copy()


def kmeans_fit(
    points: np.ndarray, K: int = DEFAULT_KMEANS_K, seed: int = 0, max_iter: int = 300
) -> tuple[ClusterModel, np.ndarray]:
    """Lloyd's algorithm with k-means++ seeding; returns (model, labels).

    Deterministic in `seed`; stops when assignments stabilize or after
    `max_iter` sweeps. Distance ties assign to the smaller centroid index;
    a centroid that loses all its points keeps its previous position. The
    per-sweep assignment costs are recorded on the model and are
    non-increasing.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise InvalidSpec(f"points must be (n, q), got shape {points.shape}")
    n = points.shape[0]
    if n < K:
        raise TooFewPoints(f"{n} points cannot seed {K} clusters")
    rng = stage_rng(seed, "kmeans")
    centroids = _plus_plus_seeds(points, K, rng)
    labels = np.full(n, -1, dtype=np.int64)
    costs: list[float] = []
    for _ in range(max_iter):
        d2 = _sq_distances(points, centroids)
        new_labels = d2.argmin(axis=1)
        costs.append(float(d2[np.arange(n), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(K):
            member = labels == j
            if member.any():
                centroids[j] = points[member].mean(axis=0)
    return ClusterModel(K, centroids, seed, tuple(costs)), labels


def kmeans_assign(model: ClusterModel, point: np.ndarray) -> int:
    """Index of the nearest centroid (Euclidean, ties to the smaller index)."""
    point = np.asarray(point, dtype=np.float64)
    d2 = ((model.centroids - point) ** 2).sum(axis=1)
    return int(d2.argmin())


def _sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, k) squared Euclidean distances, computed stably
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkq,nkq->nk", diff, diff)


# --- export -----------------------------------------------------------------


def save_eigenvector_heatmaps(
    basis: EigenBasis, grid: PatchGrid, directory: str | Path, stem: str = "ev"
) -> list[Path]:
    """One min-max scaled PGM per eigenvector, reshaped onto the patch grid."""
    directory = Path(directory)
    paths = []
    for j in range(basis.eigenvectors.shape[1]):
        field = basis.eigenvectors[:, j].reshape(grid.grid_rows, grid.grid_cols)
        path = directory / f"{stem}{j}.pgm"
        save_heatmap(field, path)
        paths.append(path)
    return paths
