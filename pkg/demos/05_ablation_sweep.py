"""Sweep kappa and the normalization flag over a fixture corpus.

Run from the repository root:  python demos/05_ablation_sweep.py
"""

from siamseg import FixtureSpec, PatchGrid, TrainConfig, ablation_csv, ablation_sweep, synthesize_fixture

grid = PatchGrid.from_grid(8, 8, 16)
corpus = [
    synthesize_fixture(FixtureSpec(grid, dim=16, block_count=2,
                                   noise_sigma=0.25, seed=s))
    for s in range(5)
]

# Rows with normalize=true run the full pipeline (trained head, combined
# affinity); normalize=false rows segment the raw, untrained Gram matrix,
# the reference that mean subtraction is measured against.
rows = ablation_sweep(
    corpus,
    kappas=(0.1, 0.3, 0.5, 0.7, 0.9),
    normalize_flags=(True, False),
    train_config=TrainConfig(seed=0),
)
print(ablation_csv(rows), end="")
