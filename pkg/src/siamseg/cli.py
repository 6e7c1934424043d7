"""Command-line surface: fixture, segment, ablate, metrics, export-affinity.

Exit codes are a stable contract: 0 success, 2 usage or validation
failure, 3 numerical degeneracy, 4 empty input. Every command is
deterministic given --seed (or the SIMSAM_SEED environment variable as a
fallback): running twice produces byte-identical files. Per-image work is
seeded by splitting the root seed per stage and image, so images can be
processed in parallel (--jobs) without changing any output.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .affinity import (
    mask_affinity,
    save_affinity,
    save_heatmap,
    semantic_affinity,
    vanilla_affinity,
)
from .errors import (
    AllZeroAffinity,
    DegenerateFiedlerWarning,
    DivergedLoss,
    NoConvergence,
    SiamsegError,
)
from .features import (
    FixtureSpec,
    PatchGrid,
    load_features,
    load_mask,
    save_features,
    save_mask,
    synthesize_fixture,
)
from .pipeline import RunConfig, combined_affinity, segment_object, semantic_masks
from .seeding import stage_seed
from .siamese import SiameseParams, train
from .spectral import (
    EigenBasis,
    eigendecompose,
    normalized_laplacian,
    save_eigenvector_heatmaps,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DEGENERATE = 3
EXIT_EMPTY = 4

_DEGENERATE = (AllZeroAffinity, DivergedLoss, NoConvergence)


class _EmptyInput(SiamsegError):
    pass


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", DegenerateFiedlerWarning)
            return args.func(args)
    except DegenerateFiedlerWarning as warning:
        print(f"{args.command}: degenerate spectrum: {warning}", file=sys.stderr)
        return EXIT_DEGENERATE
    except _DEGENERATE as exc:
        stage = type(exc).__name__
        print(f"{args.command}: numerical degeneracy ({stage}): {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except _EmptyInput as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (SiamsegError, OSError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _default_seed() -> int:
    return int(os.environ.get("SIMSAM_SEED", "0"))


def _write_text(path: Path, text: str) -> None:
    # all outputs land atomically (temp + rename)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="siamseg",
        description="Spectral segmentation of patch-token feature files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fixture = sub.add_parser("fixture", help="synthesize a planted-block feature file")
    fixture.add_argument("--grid", default="8x8", help="patch grid as ROWSxCOLS")
    fixture.add_argument("--patch", type=int, default=16, help="patch size in pixels")
    fixture.add_argument("--dim", type=int, default=16, help="token dimension")
    fixture.add_argument("--blocks", type=int, default=2, help="number of planted blocks")
    fixture.add_argument("--sigma", type=float, default=0.0, help="token noise level")
    fixture.add_argument("--seed", type=int, default=None)
    fixture.add_argument("--stem", default="fixture", help="output file stem")
    fixture.add_argument("-o", "--out", required=True, help="output directory")
    fixture.set_defaults(func=_cmd_fixture)

    segment = sub.add_parser("segment", help="segment one or more feature files")
    segment.add_argument("inputs", nargs="+", help="SSAM feature files")
    segment.add_argument("--mode", choices=("object", "semantic"), default="object")
    segment.add_argument("-o", "--out", required=True, help="output directory")
    _add_run_flags(segment)
    segment.add_argument("--jobs", type=int, default=1)
    segment.add_argument("--save-params", action="store_true", help="debug: keep head weights")
    segment.add_argument(
        "--emit-eigenvectors", type=int, default=0, metavar="N",
        help="write the first N nontrivial eigenvectors as PGM heatmaps",
    )
    segment.add_argument(
        "--emit-affinity", action="store_true", help="write the affinity heatmap and container"
    )
    segment.set_defaults(func=_cmd_segment)

    ablate = sub.add_parser("ablate", help="kappa/normalization sweep over a corpus")
    ablate.add_argument("corpus", help="directory of <stem>.ssam with <stem>.pgm masks")
    ablate.add_argument(
        "--kappas", default="0.1,0.3,0.5,0.7,0.9", help="comma-separated kappa values"
    )
    ablate.add_argument(
        "--normalize", choices=("true", "false", "both"), default="true",
        help="which vanilla-affinity normalizations to sweep",
    )
    _add_run_flags(ablate)
    ablate.add_argument("--jobs", type=int, default=1)
    ablate.add_argument("-o", "--out", default=None, help="CSV path (default: stdout)")
    ablate.set_defaults(func=_cmd_ablate)

    metrics = sub.add_parser("metrics", help="score a predicted mask against ground truth")
    metrics.add_argument("pred", help="predicted mask PGM")
    metrics.add_argument("gt", help="ground-truth mask PGM")
    metrics.add_argument("-o", "--out", default=None, help="CSV path (default: stdout)")
    metrics.set_defaults(func=_cmd_metrics)

    export = sub.add_parser("export-affinity", help="write an affinity matrix and heatmap")
    export.add_argument("input", help="SSAM feature file")
    export.add_argument(
        "--kind", choices=("vanilla", "vanilla-raw", "semantic", "combined"),
        default="combined",
    )
    export.add_argument("--no-train", action="store_true", help="use initialized head weights")
    _add_run_flags(export)
    export.add_argument("-o", "--out", required=True, help="output directory")
    export.set_defaults(func=_cmd_export)

    return parser


def _add_run_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--kappa", type=float, default=0.1)
    sub.add_argument("--iterations", type=int, default=10)
    sub.add_argument("--batch-size", type=int, default=2)
    sub.add_argument("--learning-rate", type=float, default=1e-2)
    sub.add_argument("--eigenvectors", type=int, default=15)
    sub.add_argument("--segments", type=int, default=15)
    sub.add_argument("--kmeans-k", type=int, default=20)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument(
        "--no-normalize", action="store_true",
        help="skip the vanilla-affinity mean subtraction",
    )


def _run_config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        kappa=args.kappa,
        iterations=args.iterations,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        num_eigenvectors=args.eigenvectors,
        num_segments=args.segments,
        kmeans_k=args.kmeans_k,
        seed=args.seed if args.seed is not None else _default_seed(),
        normalize_vanilla=not args.no_normalize,
    )


# --- commands ---------------------------------------------------------------


def _cmd_fixture(args: argparse.Namespace) -> int:
    rows, _, cols = args.grid.partition("x")
    grid = PatchGrid.from_grid(int(rows), int(cols), args.patch)
    spec = FixtureSpec(
        grid=grid,
        dim=args.dim,
        block_count=args.blocks,
        noise_sigma=args.sigma,
        seed=args.seed if args.seed is not None else _default_seed(),
    )
    feature_map, mask = synthesize_fixture(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_features(feature_map, out / f"{args.stem}.ssam")
    save_mask(mask, out / f"{args.stem}.pgm")
    return EXIT_OK


def _per_image_config(config: RunConfig, index: int) -> RunConfig:
    return replace(config, seed=stage_seed(config.seed, "image", index))


def _cmd_segment(args: argparse.Namespace) -> int:
    config = _run_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = [Path(p) for p in args.inputs]
    feature_maps = [load_features(p) for p in inputs]

    if args.mode == "semantic":
        corpus = semantic_masks(feature_maps, config)
        masks, results = corpus.masks, corpus.images
    else:
        def run_one(item):
            index, feature_map = item
            return segment_object(feature_map, _per_image_config(config, index))

        with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
            results = list(pool.map(run_one, enumerate(feature_maps)))
        masks = [r.mask for r in results]

    for index, (path, feature_map, mask) in enumerate(zip(inputs, feature_maps, masks)):
        stem = path.stem
        save_mask(mask, out / f"{stem}_mask.pgm")
        result = results[index]
        if result.training is not None:
            _write_text(out / f"{stem}_loss.csv", result.training.trace_csv())
            if args.save_params:
                p = result.training.params
                tmp = out / f"{stem}_params.npz.tmp"
                with open(tmp, "wb") as handle:
                    np.savez(
                        handle,
                        proj_weight=p.proj_weight,
                        proj_bias=p.proj_bias,
                        pred_weight=p.pred_weight,
                        pred_bias=p.pred_bias,
                    )
                os.replace(tmp, out / f"{stem}_params.npz")
        if args.emit_affinity:
            save_affinity(result.affinity, out / f"{stem}_affinity.ssam")
            save_heatmap(result.affinity.values, out / f"{stem}_affinity.pgm")
        if args.emit_eigenvectors:
            w = result.affinity
            basis = eigendecompose(
                normalized_laplacian(w), min(args.emit_eigenvectors + 1, w.n)
            )
            trimmed = EigenBasis(basis.eigenvalues[1:], basis.eigenvectors[:, 1:])
            save_eigenvector_heatmaps(trimmed, feature_map.grid, out, stem=f"{stem}_ev")
    return EXIT_OK


def _cmd_ablate(args: argparse.Namespace) -> int:
    config = _run_config(args)
    corpus_dir = Path(args.corpus)
    pairs = []
    for feature_path in sorted(corpus_dir.glob("*.ssam")):
        mask_path = feature_path.with_suffix(".pgm")
        if mask_path.exists():
            pairs.append((load_features(feature_path), load_mask(mask_path)))
    if not pairs:
        raise _EmptyInput(f"no <stem>.ssam + <stem>.pgm pairs in {corpus_dir}")
    kappas = tuple(float(v) for v in args.kappas.split(",") if v)
    flags = {"true": (True,), "false": (False,), "both": (True, False)}[args.normalize]
    rows = metrics_mod.ablation_sweep(
        pairs, kappas=kappas, normalize_flags=flags, train_config=config.train_config()
    )
    csv_text = metrics_mod.ablation_csv(rows)
    if args.out:
        _write_text(Path(args.out), csv_text)
    else:
        sys.stdout.write(csv_text)
    return EXIT_OK


def _cmd_metrics(args: argparse.Namespace) -> int:
    pred = load_mask(args.pred)
    gt = load_mask(args.gt)
    report_lines = [
        "metric,value",
        f"miou,{metrics_mod.miou(pred, gt):.12g}",
        f"accuracy,{metrics_mod.pixel_accuracy(pred, gt):.12g}",
        f"frobenius,{metrics_mod.frobenius_gap(mask_affinity(pred), mask_affinity(gt)):.12g}",
    ]
    text = "\n".join(report_lines) + "\n"
    if args.out:
        _write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_export(args: argparse.Namespace) -> int:
    config = _run_config(args)
    path = Path(args.input)
    feature_map = load_features(path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "vanilla":
        w = vanilla_affinity(feature_map, True)
    elif args.kind == "vanilla-raw":
        w = vanilla_affinity(feature_map, False)
    else:
        if args.no_train:
            params = SiameseParams.initialize(feature_map.dim, config.seed)
        else:
            params = train(feature_map, config.train_config()).params
        if args.kind == "semantic":
            w = semantic_affinity(params, feature_map)
        else:
            w = combined_affinity(feature_map, params, config)
    stem = f"{path.stem}_{args.kind.replace('-', '_')}"
    save_affinity(w, out / f"{stem}.ssam")
    save_heatmap(w.values, out / f"{stem}.pgm")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
