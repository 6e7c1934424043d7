"""Segmentation and affinity quality measures.

All scores are computed at patch resolution. Binary masks (labels in
{0, 1}) keep their foreground/background roles fixed for IoU; multi-class
predictions with free label ids are matched to ground-truth classes by
Hungarian assignment before scoring, the usual protocol for unsupervised
segmentation. The Frobenius gap compares two affinity matrices directly.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .affinity import (
    AffinityMatrix,
    combine,
    mask_affinity,
    semantic_affinity,
    vanilla_affinity,
)
from .errors import InvalidSpec, ShapeMismatch
from .features import LabelMask, TokenFeatureMap
from .seeding import stage_seed
from .siamese import TrainConfig, train
from .spectral import fiedler_object_mask


@dataclass(frozen=True)
class EvalReport:
    """mIoU and accuracy in [0, 1], plus an optional affinity Frobenius gap."""

    miou: float
    accuracy: float
    frobenius: float | None = None

    def __post_init__(self):
        for name in ("miou", "accuracy"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise InvalidSpec(f"{name} must lie in [0, 1], got {value}")
        if self.frobenius is not None and (
            not np.isfinite(self.frobenius) or self.frobenius < 0
        ):
            raise InvalidSpec("frobenius must be a finite nonnegative real")


def _check_grids(pred: LabelMask, gt: LabelMask) -> None:
    pg, gg = pred.grid, gt.grid
    if (pg.grid_rows, pg.grid_cols) != (gg.grid_rows, gg.grid_cols):
        raise ShapeMismatch(
            f"grids differ: {pg.grid_rows}x{pg.grid_cols} vs {gg.grid_rows}x{gg.grid_cols}"
        )


def _contingency(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Counts[p, g] of patches with predicted label p and true label g."""
    np_labels = int(pred.max()) + 1
    ng_labels = int(gt.max()) + 1
    counts = np.zeros((np_labels, ng_labels), dtype=np.int64)
    np.add.at(counts, (pred, gt), 1)
    return counts


def miou(pred: LabelMask, gt: LabelMask) -> float:
    """Mean intersection-over-union.

    Binary masks score foreground and background with their roles fixed;
    otherwise predicted labels are Hungarian-matched to ground-truth
    classes on the IoU matrix and the mean runs over classes present in
    the ground truth (unmatched classes count 0).
    """
    _check_grids(pred, gt)
    counts = _contingency(pred.labels, gt.labels)
    pred_sizes = counts.sum(axis=1)
    gt_sizes = counts.sum(axis=0)
    binary = counts.shape[0] <= 2 and counts.shape[1] <= 2
    if binary:
        ious = []
        for label in range(counts.shape[1]):
            if gt_sizes[label] == 0:
                continue
            inter = counts[label, label] if label < counts.shape[0] else 0
            psize = pred_sizes[label] if label < counts.shape[0] else 0
            union = psize + gt_sizes[label] - inter
            ious.append(inter / union if union else 0.0)
        return float(np.mean(ious))
    inter = counts.astype(np.float64)
    union = pred_sizes[:, None] + gt_sizes[None, :] - inter
    iou_matrix = np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)
    rows, cols = linear_sum_assignment(iou_matrix, maximize=True)
    matched = {g: iou_matrix[p, g] for p, g in zip(rows, cols)}
    present = np.flatnonzero(gt_sizes)
    return float(np.mean([matched.get(g, 0.0) for g in present]))


def pixel_accuracy(pred: LabelMask, gt: LabelMask) -> float:
    """Fraction of patches agreeing after the optimal pred-to-gt label matching."""
    _check_grids(pred, gt)
    counts = _contingency(pred.labels, gt.labels)
    rows, cols = linear_sum_assignment(counts, maximize=True)
    return float(counts[rows, cols].sum() / pred.labels.size)


def frobenius_gap(a: AffinityMatrix, b: AffinityMatrix) -> float:
    """Frobenius norm of the elementwise difference ||A - B||_F."""
    if a.n != b.n:
        raise ShapeMismatch(f"affinity sizes differ: {a.n} vs {b.n}")
    return float(np.sqrt(((a.values - b.values) ** 2).sum()))


# --- ablation sweep ---------------------------------------------------------


DEFAULT_KAPPA_SWEEP = (0.1, 0.3, 0.5, 0.7, 0.9)

CSV_HEADER = ("config", "kappa", "normalize", "frobenius", "accuracy", "miou")


@dataclass(frozen=True)
class AblationRow:
    config: str
    kappa: float
    normalize: bool
    report: EvalReport


def ablation_sweep(
    corpus: Sequence[tuple[TokenFeatureMap, LabelMask]],
    kappas: Iterable[float] = DEFAULT_KAPPA_SWEEP,
    normalize_flags: Iterable[bool] = (True,),
    train_config: TrainConfig = TrainConfig(),
) -> list[AblationRow]:
    """Run the object-segmentation pipeline per configuration over a corpus.

    Normalized configurations train the siamese head and segment the
    combined affinity (vanilla + kappa * semantic); unnormalized ones use
    the raw token Gram matrix untouched and untrained, the reference the
    normalization is compared against, so kappa only labels those rows.
    Scores are corpus means; the Frobenius column compares mask-induced
    affinities of prediction and ground truth. Deterministic given
    `train_config.seed`.
    """
    corpus = list(corpus)
    if not corpus:
        raise InvalidSpec("ablation corpus is empty")
    trained = None
    rows = []
    for normalize in normalize_flags:
        if normalize and trained is None:
            trained = [
                train(f, _reseeded(train_config, stage_seed(train_config.seed, "ablate-image", i))).params
                for i, (f, _) in enumerate(corpus)
            ]
        for kappa in kappas:
            scores = []
            for i, (feature_map, gt) in enumerate(corpus):
                if normalize:
                    w = combine(
                        vanilla_affinity(feature_map, normalize=True),
                        semantic_affinity(trained[i], feature_map),
                        kappa,
                    )
                else:
                    w = vanilla_affinity(feature_map, normalize=False)
                pred = fiedler_object_mask(w, feature_map.grid)
                scores.append(
                    (
                        miou(pred, gt),
                        pixel_accuracy(pred, gt),
                        frobenius_gap(mask_affinity(pred), mask_affinity(gt)),
                    )
                )
            mean = np.mean(scores, axis=0)
            config = f"{'wfeat' if normalize else 'raw'}-k{kappa:g}"
            rows.append(
                AblationRow(
                    config,
                    kappa,
                    normalize,
                    EvalReport(
                        miou=float(mean[0]),
                        accuracy=float(mean[1]),
                        frobenius=float(mean[2]),
                    ),
                )
            )
    return rows


def _reseeded(config: TrainConfig, seed: int) -> TrainConfig:
    return replace(config, seed=seed)


def ablation_csv(rows: Sequence[AblationRow]) -> str:
    """Serialize sweep rows with the stable header config,kappa,normalize,..."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(
            [
                row.config,
                f"{row.kappa:.12g}",
                str(row.normalize).lower(),
                f"{row.report.frobenius:.12g}",
                f"{row.report.accuracy:.12g}",
                f"{row.report.miou:.12g}",
            ]
        )
    return buffer.getvalue()
