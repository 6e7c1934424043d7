"""Independent reference implementations used as test oracles.

Everything here is deliberately written the slow, obvious way (scalar
loops, textbook algorithms, finite differences) and never calls into the
library paths it is used to check.
"""

from __future__ import annotations

import math

import numpy as np

# --- cyclic Jacobi eigensolver ----------------------------------------------


def jacobi_eigh(matrix: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100):
    """All eigenpairs of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues ascending, eigenvectors as columns).
    """
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = math.sqrt(float((np.triu(a, 1) ** 2).sum()))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0:
                    t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                _rotate(a, v, p, q, c, s)
    order = np.argsort(np.diag(a), kind="stable")
    return np.diag(a)[order].copy(), v[:, order].copy()


def _rotate(a: np.ndarray, v: np.ndarray, p: int, q: int, c: float, s: float) -> None:
    # similarity transform G^T A G with G = I except G[[p,q]][[p,q]] = [[c, s], [-s, c]]
    col_p = a[:, p].copy()
    col_q = a[:, q].copy()
    a[:, p] = c * col_p - s * col_q
    a[:, q] = s * col_p + c * col_q
    row_p = a[p, :].copy()
    row_q = a[q, :].copy()
    a[p, :] = c * row_p - s * row_q
    a[q, :] = s * row_p + c * row_q
    a[p, q] = 0.0
    a[q, p] = 0.0
    vp = v[:, p].copy()
    vq = v[:, q].copy()
    v[:, p] = c * vp - s * vq
    v[:, q] = s * vp + c * vq


# --- siamese head references --------------------------------------------------


def elu_scalar(z: float) -> float:
    return z if z > 0 else math.exp(z) - 1.0


def project_scalar(weight, bias, x):
    """Row-by-row, entry-by-entry projector forward."""
    n, d = x.shape
    out = np.zeros((n, d))
    for i in range(n):
        for j in range(d):
            acc = bias[j]
            for k in range(d):
                acc += weight[j, k] * x[i, k]
            out[i, j] = elu_scalar(acc)
    return out


def predict_scalar(weight, bias, delta):
    n, d = delta.shape
    out = np.zeros((n, d))
    for i in range(n):
        for j in range(d):
            acc = bias[j]
            for k in range(d):
                acc += weight[j, k] * delta[i, k]
            out[i, j] = acc
    return out


def cosine_scalar(u, v) -> float:
    nu = math.sqrt(sum(float(x) * float(x) for x in u))
    nv = math.sqrt(sum(float(x) * float(x) for x in v))
    dot = sum(float(a) * float(b) for a, b in zip(u, v))
    return -dot / (nu * nv)


def symmetric_loss_scalar(params, alpha, beta) -> float:
    """Straight-line reference of the symmetric two-branch loss."""
    delta_a = project_scalar(params.proj_weight, params.proj_bias, alpha)
    delta_b = project_scalar(params.proj_weight, params.proj_bias, beta)
    f_a = predict_scalar(params.pred_weight, params.pred_bias, delta_a)
    f_b = predict_scalar(params.pred_weight, params.pred_bias, delta_b)
    n = alpha.shape[0]
    total = 0.0
    for i in range(n):
        total += 0.5 * (cosine_scalar(f_a[i], delta_b[i]) + cosine_scalar(delta_a[i], f_b[i]))
    return total / n


# --- parameter packing and finite differences --------------------------------


def pack_params(params) -> np.ndarray:
    return np.concatenate(
        [
            params.proj_weight.ravel(),
            params.proj_bias,
            params.pred_weight.ravel(),
            params.pred_bias,
        ]
    )


def unpack_params(theta: np.ndarray, d: int):
    from siamseg.siamese import SiameseParams

    i = 0
    proj_w = theta[i : i + d * d].reshape(d, d)
    i += d * d
    proj_b = theta[i : i + d]
    i += d
    pred_w = theta[i : i + d * d].reshape(d, d)
    i += d * d
    pred_b = theta[i : i + d]
    return SiameseParams(proj_w, proj_b, pred_w, pred_b)


def finite_diff(loss_fn, theta: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of the packed params."""
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        plus = theta.copy()
        plus[i] += eps
        minus = theta.copy()
        minus[i] -= eps
        grad[i] = (loss_fn(plus) - loss_fn(minus)) / (2.0 * eps)
    return grad


def frozen_loss(theta: np.ndarray, theta0: np.ndarray, alpha, beta, d: int) -> float:
    """Loss with the detached targets held at theta0 (the stop-grad semantics)."""
    p = unpack_params(theta, d)
    p0 = unpack_params(theta0, d)
    delta_a = project_scalar(p.proj_weight, p.proj_bias, alpha)
    delta_b = project_scalar(p.proj_weight, p.proj_bias, beta)
    f_a = predict_scalar(p.pred_weight, p.pred_bias, delta_a)
    f_b = predict_scalar(p.pred_weight, p.pred_bias, delta_b)
    target_b = project_scalar(p0.proj_weight, p0.proj_bias, beta)
    target_a = project_scalar(p0.proj_weight, p0.proj_bias, alpha)
    n = alpha.shape[0]
    total = 0.0
    for i in range(n):
        total += 0.5 * (cosine_scalar(f_a[i], target_b[i]) + cosine_scalar(target_a[i], f_b[i]))
    return total / n


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.maximum(1e-6, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float((np.abs(analytic - numeric) / scale).max())


# --- graph cuts ---------------------------------------------------------------


def normalized_cut_value(weights: np.ndarray, side: np.ndarray) -> float:
    """ncut(A, B) = cut * (1/vol(A) + 1/vol(B)) for the bipartition `side`."""
    side = side.astype(bool)
    cut = weights[np.ix_(side, ~side)].sum()
    vol_a = weights[side].sum()
    vol_b = weights[~side].sum()
    if vol_a == 0 or vol_b == 0:
        return math.inf
    return float(cut * (1.0 / vol_a + 1.0 / vol_b))


def min_ncut_bipartition(weights: np.ndarray) -> np.ndarray:
    """Exhaustive minimum normalized cut over all 2^(n-1)-1 bipartitions."""
    n = weights.shape[0]
    best, best_side = math.inf, None
    for bits in range(1, 2 ** (n - 1)):
        side = np.array([(bits >> i) & 1 for i in range(n)], dtype=bool)
        value = normalized_cut_value(weights, side)
        if value < best:
            best, best_side = value, side
    return best_side


# --- misc ---------------------------------------------------------------------


def gram_scalar(tokens: np.ndarray) -> np.ndarray:
    n = tokens.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = sum(float(a) * float(b) for a, b in zip(tokens[i], tokens[j]))
    return out


def shifted_grid(field: np.ndarray, shift_rows: int, shift_cols: int) -> np.ndarray:
    """Integer-shift remap with edge clamping (no interpolation)."""
    rows, cols = field.shape[:2]
    out = np.empty_like(field)
    for r in range(rows):
        for c in range(cols):
            src_r = min(max(r - shift_rows, 0), rows - 1)
            src_c = min(max(c - shift_cols, 0), cols - 1)
            out[r, c] = field[src_r, src_c]
    return out


def best_label_bijection_agreement(pred: np.ndarray, truth: np.ndarray) -> float:
    """Max fraction of agreeing entries over all injective label matchings."""
    from itertools import permutations

    pred_labels = sorted(set(pred.tolist()))
    truth_labels = sorted(set(truth.tolist()))
    best = 0.0
    for perm in permutations(truth_labels, len(pred_labels)):
        mapping = dict(zip(pred_labels, perm))
        agree = sum(1 for p, t in zip(pred, truth) if mapping[p] == t)
        best = max(best, agree / len(pred))
    return best
