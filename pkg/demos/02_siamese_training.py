"""The projector/predictor head, its stop-gradient loss, and training.

Run from the repository root:  python demos/02_siamese_training.py
"""

import numpy as np

from siamseg import (
    FixtureSpec,
    PatchGrid,
    TrainConfig,
    draw_affine_params,
    identity_affine,
    loss_gradient,
    random_affine_views,
    symmetric_loss,
    synthesize_fixture,
    train,
)

grid = PatchGrid.from_grid(8, 8, 16)
features, _ = synthesize_fixture(FixtureSpec(grid, dim=16, block_count=2,
                                             noise_sigma=0.1, seed=0))

# Views are spatial warps of the token grid (rotation, translation, scale
# with bilinear interpolation). Identity parameters reproduce the tokens.
pair = random_affine_views(features, identity_affine(), identity_affine())
print("identity warp exact:", np.abs(pair.alpha - features.tokens64()).max() == 0.0)

p1, p2 = draw_affine_params(seed=1), draw_affine_params(seed=2)
print(f"drawn view 1: rot={p1.rotation_deg:+.2f} deg, "
      f"shift={p1.translate_frac}, scale={p1.scale:.3f}")
views = random_affine_views(features, p1, p2)

# The loss is the mean negative cosine between each view's predicted
# features and the other view's (detached) projector output.
from siamseg import SiameseParams

params = SiameseParams.initialize(features.dim, seed=0)
print(f"loss at init: {symmetric_loss(params, views):+.6f}")

# Stop-gradient changes the gradient, not the value: the projector only
# feels its own branch. Compare against the no-detach variant.
g_sg = loss_gradient(params, views, stop_gradient=True)
g_plain = loss_gradient(params, views, stop_gradient=False)
print("projector grad gap (sg vs plain):",
      f"{np.abs(g_sg.proj_weight - g_plain.proj_weight).max():.2e}")
print("predictor grads identical:",
      np.array_equal(g_sg.pred_weight, g_plain.pred_weight))

# Ten gradient-descent steps on batches of two view pairs per step.
result = train(features, TrainConfig(iterations=10, batch_size=2, seed=0))
print("loss trace (held-out view panel):")
for i, value in enumerate(result.loss_trace):
    print(f"  iter {i:2d}: {value:+.6f}")
print("descent:", result.loss_trace[-1] <= result.loss_trace[0])
