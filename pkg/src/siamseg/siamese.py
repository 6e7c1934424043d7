"""Per-image non-contrastive training of a tiny projector/predictor head.

The head is a single ELU layer (projector) followed by a single linear
layer (predictor), both d -> d. Two spatially warped views of the token
grid are pushed through the head and trained to agree under a symmetric
negative-cosine loss in which each view's projector output is treated as
a constant target for the other view (the stop-gradient trick that keeps
non-contrastive training from collapsing). Gradients are derived by hand
and checked against finite differences in the test suite.

All math runs in float64; file storage stays float32.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergedLoss, InvalidSpec, ShapeMismatch, ZeroVector
from .features import TokenFeatureMap
from .seeding import stage_rng, stage_seed

# --- parameters and views ---------------------------------------------------


@dataclass(frozen=True)
class SiameseParams:
    """Projector (W, b) and predictor (W, b), all d x d / d.

    Also used as the container for gradients, which share the shape.
    """

    proj_weight: np.ndarray
    proj_bias: np.ndarray
    pred_weight: np.ndarray
    pred_bias: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("proj_weight", "proj_bias", "pred_weight", "pred_bias"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arrays[name] = arr
        d = arrays["proj_weight"].shape[0]
        for name in ("proj_weight", "pred_weight"):
            if arrays[name].shape != (d, d):
                raise InvalidSpec(f"{name} must be square {d}x{d}, got {arrays[name].shape}")
        for name in ("proj_bias", "pred_bias"):
            if arrays[name].shape != (d,):
                raise InvalidSpec(f"{name} must have length {d}, got {arrays[name].shape}")
        for name, arr in arrays.items():
            if not np.all(np.isfinite(arr)):
                raise InvalidSpec(f"{name} contains non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.proj_bias.shape[0]

    @classmethod
    def initialize(cls, dim: int, seed: int) -> "SiameseParams":
        """Identity weights plus N(0, 0.01^2) noise, zero biases.

        Starting near the identity keeps the early semantic affinity close
        to the raw token affinity it gets added to.
        """
        rng = stage_rng(seed, "init")
        eye = np.eye(dim)
        return cls(
            proj_weight=eye + 0.01 * rng.standard_normal((dim, dim)),
            proj_bias=np.zeros(dim),
            pred_weight=eye + 0.01 * rng.standard_normal((dim, dim)),
            pred_bias=np.zeros(dim),
        )


@dataclass(frozen=True)
class AffineRanges:
    """Sampling ranges for view transforms (degrees, grid fractions, scale)."""

    rotation_deg: tuple[float, float] = (-10.0, 10.0)
    translate_frac: tuple[float, float] = (-0.1, 0.1)
    scale: tuple[float, float] = (0.9, 1.1)


@dataclass(frozen=True)
class AffineParams:
    """One concrete spatial transform of the token grid.

    `seed` records the draw that produced it (0 for hand-built params).
    """

    rotation_deg: float = 0.0
    translate_frac: tuple[float, float] = (0.0, 0.0)
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        values = (self.rotation_deg, *self.translate_frac, self.scale)
        if not all(np.isfinite(v) for v in values):
            raise InvalidSpec("affine parameters must be finite")
        if self.scale <= 0:
            raise InvalidSpec(f"scale must be positive, got {self.scale}")


def identity_affine() -> AffineParams:
    return AffineParams()


def draw_affine_params(seed: int, ranges: AffineRanges = AffineRanges()) -> AffineParams:
    """Sample a transform uniformly from `ranges`, deterministically in `seed`."""
    rng = np.random.default_rng(seed)
    return AffineParams(
        rotation_deg=float(rng.uniform(*ranges.rotation_deg)),
        translate_frac=(
            float(rng.uniform(*ranges.translate_frac)),
            float(rng.uniform(*ranges.translate_frac)),
        ),
        scale=float(rng.uniform(*ranges.scale)),
        seed=seed,
    )


@dataclass(frozen=True)
class ViewPair:
    """Two warped copies (alpha, beta) of a token map, as (n, d) float64."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64)
        beta = np.asarray(self.beta, dtype=np.float64)
        if alpha.shape != beta.shape or alpha.ndim != 2:
            raise ShapeMismatch(
                f"views must share an (n, d) shape, got {alpha.shape} and {beta.shape}"
            )
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
            raise InvalidSpec("views contain non-finite entries")
        for name, arr in (("alpha", alpha), ("beta", beta)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 10
    batch_size: int = 2
    learning_rate: float = 1e-2
    seed: int = 0
    affine: AffineRanges = field(default_factory=AffineRanges)

    def __post_init__(self):
        if self.iterations < 1 or self.batch_size < 1:
            raise InvalidSpec("iterations and batch_size must be >= 1")
        if not np.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise InvalidSpec("learning_rate must be finite and >= 0")


# --- spatial views ----------------------------------------------------------


def _warp_field(field: np.ndarray, params: AffineParams) -> np.ndarray:
    """Inverse-map bilinear warp of an (Hp, Wp, d) field, edge-clamped.

    The transform rotates by `rotation_deg` and scales by `scale` about the
    grid center, then translates by `translate_frac` of the grid size.
    Identity parameters reproduce the field bit-exactly because the source
    coordinates come out as exact integers.
    """
    rows, cols, _ = field.shape
    cy, cx = (rows - 1) / 2.0, (cols - 1) / 2.0
    ty = params.translate_frac[0] * rows
    tx = params.translate_frac[1] * cols
    theta = np.deg2rad(params.rotation_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)

    out_r, out_c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    pr = out_r - cy - ty
    pc = out_c - cx - tx
    # inverse rotation and scale back into source coordinates
    src_r = (cos_t * pr + sin_t * pc) / params.scale + cy
    src_c = (-sin_t * pr + cos_t * pc) / params.scale + cx

    src_r = np.clip(src_r, 0.0, rows - 1.0)
    src_c = np.clip(src_c, 0.0, cols - 1.0)
    r0 = np.floor(src_r).astype(np.intp)
    c0 = np.floor(src_c).astype(np.intp)
    r1 = np.minimum(r0 + 1, rows - 1)
    c1 = np.minimum(c0 + 1, cols - 1)
    wr = (src_r - r0)[..., None]
    wc = (src_c - c0)[..., None]

    top = field[r0, c0] * (1.0 - wc) + field[r0, c1] * wc
    bottom = field[r1, c0] * (1.0 - wc) + field[r1, c1] * wc
    return top * (1.0 - wr) + bottom * wr


def random_affine_views(
    feature_map: TokenFeatureMap, params_a: AffineParams, params_b: AffineParams
) -> ViewPair:
    """Warp the token grid twice to produce the (alpha, beta) view pair."""
    grid = feature_map.grid
    field = feature_map.tokens64().reshape(grid.grid_rows, grid.grid_cols, -1)
    alpha = _warp_field(field, params_a).reshape(grid.n, -1)
    beta = _warp_field(field, params_b).reshape(grid.n, -1)
    return ViewPair(alpha, beta)


# --- forward ----------------------------------------------------------------


def _elu(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))


def _elu_grad(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, 1.0, np.exp(np.minimum(z, 0.0)))


def project(params: SiameseParams, x: np.ndarray) -> np.ndarray:
    """Projector: row-wise ELU(x W^T + b); output dim equals input dim."""
    x = np.asarray(x, dtype=np.float64)
    return _elu(x @ params.proj_weight.T + params.proj_bias)


def predict(params: SiameseParams, delta: np.ndarray) -> np.ndarray:
    """Predictor: row-wise delta W^T + b, no activation."""
    delta = np.asarray(delta, dtype=np.float64)
    return delta @ params.pred_weight.T + params.pred_bias


def _row_norms(x: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1)
    if np.any(norms == 0.0):
        raise ZeroVector(f"zero-norm {what} vector (degenerate token)")
    return norms


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Negative cosine similarity -(u/|u|) . (v/|v|), in [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine distance of a zero vector is undefined")
    return float(np.clip(-(u @ v) / (nu * nv), -1.0, 1.0))


def symmetric_loss(params: SiameseParams, views: ViewPair) -> float:
    """Mean over tokens of the two-way negative cosine between branches.

    For token i the two terms pair the predicted features of one view with
    the (gradient-detached) projector output of the other; detaching does
    not change the value, only the gradient, so none is applied here.
    """
    delta_a = project(params, views.alpha)
    delta_b = project(params, views.beta)
    f_a = predict(params, delta_a)
    f_b = predict(params, delta_b)
    cos_ab = _row_cosines(f_a, delta_b)
    cos_ba = _row_cosines(delta_a, f_b)
    return float(np.clip(-0.5 * (cos_ab + cos_ba).mean(), -1.0, 1.0))


def _row_cosines(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    nx = _row_norms(x, "branch")
    ny = _row_norms(y, "branch")
    return np.einsum("ij,ij->i", x, y) / (nx * ny)


# --- gradients --------------------------------------------------------------


def loss_gradient(
    params: SiameseParams, views: ViewPair, stop_gradient: bool = True
) -> SiameseParams:
    """Hand-derived gradient of :func:`symmetric_loss` w.r.t. all parameters.

    With `stop_gradient` (the training rule), the target branch of each
    cosine term is a constant: gradient reaches the projector only through
    its own view's predictor path. Setting it False differentiates the
    plain loss instead, which adds projector terms through the targets;
    predictor gradients are identical either way.

    For D(u, v) = -(u/|u|).(v/|v|):
        dD/du = (-v_hat + (u_hat . v_hat) u_hat) / |u|
    and symmetrically for v.
    """
    alpha, beta = views.alpha, views.beta
    n = alpha.shape[0]

    z_a = alpha @ params.proj_weight.T + params.proj_bias
    z_b = beta @ params.proj_weight.T + params.proj_bias
    delta_a = _elu(z_a)
    delta_b = _elu(z_b)
    f_a = predict(params, delta_a)
    f_b = predict(params, delta_b)

    # term 1: D(f_a, sg(delta_b)) -- differentiates through the alpha branch
    g_fa, g_db = _cosine_pair_grads(f_a, delta_b)
    # term 2: D(sg(delta_a), f_b) -- differentiates through the beta branch
    g_da, g_fb = _cosine_pair_grads(delta_a, f_b)

    scale = 1.0 / (2.0 * n)
    pred_weight = scale * (g_fa.T @ delta_a + g_fb.T @ delta_b)
    pred_bias = scale * (g_fa.sum(axis=0) + g_fb.sum(axis=0))

    h_a = (g_fa @ params.pred_weight) * _elu_grad(z_a)
    h_b = (g_fb @ params.pred_weight) * _elu_grad(z_b)
    proj_weight = scale * (h_a.T @ alpha + h_b.T @ beta)
    proj_bias = scale * (h_a.sum(axis=0) + h_b.sum(axis=0))

    if not stop_gradient:
        # targets stop being constants: backprop straight into the projector
        e_b = g_db * _elu_grad(z_b)
        e_a = g_da * _elu_grad(z_a)
        proj_weight = proj_weight + scale * (e_b.T @ beta + e_a.T @ alpha)
        proj_bias = proj_bias + scale * (e_b.sum(axis=0) + e_a.sum(axis=0))

    return SiameseParams(proj_weight, proj_bias, pred_weight, pred_bias)


def _cosine_pair_grads(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise gradients of D(u_i, v_i) w.r.t. u_i and v_i."""
    nu = _row_norms(u, "branch")[:, None]
    nv = _row_norms(v, "branch")[:, None]
    u_hat = u / nu
    v_hat = v / nv
    cos = np.einsum("ij,ij->i", u_hat, v_hat)[:, None]
    grad_u = (-v_hat + cos * u_hat) / nu
    grad_v = (-u_hat + cos * v_hat) / nv
    return grad_u, grad_v


# --- training ---------------------------------------------------------------


@dataclass(frozen=True)
class TrainResult:
    """Final head parameters plus the loss trace.

    `loss_trace[k]` is the loss after k update steps, evaluated on a fixed
    panel of view pairs drawn once from the seed (a held-out estimate of
    the view-averaged loss). Entry 0 is the initial loss, the last entry
    the final one; the panel is fixed so successive entries are comparable.
    """

    params: SiameseParams
    loss_trace: tuple[float, ...]

    def trace_csv(self) -> str:
        lines = ["iter,loss"]
        lines += [f"{i},{value:.12g}" for i, value in enumerate(self.loss_trace)]
        return "\n".join(lines) + "\n"


_EVAL_PANEL_SIZE = 4


def train(feature_map: TokenFeatureMap, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Plain gradient descent on the symmetric stop-gradient loss.

    Each step draws `batch_size` independent view pairs, averages their
    gradients and takes one step of size `learning_rate`. Deterministic in
    `config.seed`: affine draws, weight init and the evaluation panel use
    disjoint seed stages.
    """
    params = SiameseParams.initialize(feature_map.dim, config.seed)
    panel = [
        random_affine_views(
            feature_map,
            draw_affine_params(stage_seed(config.seed, "eval", 2 * j), config.affine),
            draw_affine_params(stage_seed(config.seed, "eval", 2 * j + 1), config.affine),
        )
        for j in range(_EVAL_PANEL_SIZE)
    ]

    def panel_loss(p: SiameseParams) -> float:
        return float(np.mean([symmetric_loss(p, views) for views in panel]))

    trace = [panel_loss(params)]
    draw = 0
    for _ in range(config.iterations):
        grads = None
        for _ in range(config.batch_size):
            pair = random_affine_views(
                feature_map,
                draw_affine_params(stage_seed(config.seed, "affine", draw), config.affine),
                draw_affine_params(stage_seed(config.seed, "affine", draw + 1), config.affine),
            )
            draw += 2
            g = loss_gradient(params, pair)
            grads = g if grads is None else _add(grads, g)
        step = config.learning_rate / config.batch_size
        updated = [
            params.proj_weight - step * grads.proj_weight,
            params.proj_bias - step * grads.proj_bias,
            params.pred_weight - step * grads.pred_weight,
            params.pred_bias - step * grads.pred_bias,
        ]
        if not all(np.all(np.isfinite(arr)) for arr in updated):
            raise DivergedLoss(
                f"parameters became non-finite after {len(trace)} iterations"
            )
        params = SiameseParams(*updated)
        loss = panel_loss(params)
        if not np.isfinite(loss):
            raise DivergedLoss(f"loss became non-finite after {len(trace)} iterations")
        trace.append(loss)
    return TrainResult(params, tuple(trace))


def _add(a: SiameseParams, b: SiameseParams) -> SiameseParams:
    return SiameseParams(
        a.proj_weight + b.proj_weight,
        a.proj_bias + b.proj_bias,
        a.pred_weight + b.pred_weight,
        a.pred_bias + b.pred_bias,
    )
