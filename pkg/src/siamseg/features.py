"""Token-feature and mask file formats, plus planted-structure fixtures.

Feature files ("SSAM v1") are a fixed little-endian binary layout:

==========  =====  ========================================
bytes 0-3   ascii  magic ``SSAM``
bytes 4-7   u32    version, must be 1
bytes 8-11  u32    grid rows Hp
bytes 12-15 u32    grid cols Wp
bytes 16-19 u32    feature dimension d
bytes 20-23 u32    patch size P (pixels)
bytes 24-   f32    Hp*Wp*d values, token-major
==========  =====  ========================================

Tokens are stored row-major over the patch grid (token 0 is the top-left
patch, then left to right, top to bottom), and each token's d values are
contiguous. Masks are binary PGM (P5) at patch resolution with the label
value stored as the pixel intensity, so they stay viewable in any image
tool. Everything here is pure and deterministic: the same FixtureSpec
always produces the same bytes.
"""

from __future__ import annotations

import os
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadHeader,
    BadMagic,
    InvalidSpec,
    IoFailure,
    LabelOverflow,
    NonFiniteValue,
    TruncatedFile,
)
from .seeding import stage_rng

MAGIC = b"SSAM"
VERSION = 1
HEADER_SIZE = 24
_HEADER = struct.Struct("<4sIIIII")


@dataclass(frozen=True)
class PatchGrid:
    """Geometry of a patch-tokenized image: M x N pixels cut into P x P patches."""

    image_height: int
    image_width: int
    patch_size: int
    grid_rows: int
    grid_cols: int

    def __post_init__(self):
        m, n, p = self.image_height, self.image_width, self.patch_size
        if p <= 0 or m <= 0 or n <= 0:
            raise InvalidSpec(f"grid dimensions must be positive, got {m}x{n}, P={p}")
        if m % p or n % p:
            raise InvalidSpec(f"image {m}x{n} is not a multiple of patch size {p}")
        if self.grid_rows != m // p or self.grid_cols != n // p:
            raise InvalidSpec(
                f"grid {self.grid_rows}x{self.grid_cols} inconsistent with "
                f"image {m}x{n} at patch size {p}"
            )

    @classmethod
    def from_image(cls, image_height: int, image_width: int, patch_size: int) -> "PatchGrid":
        return cls(
            image_height,
            image_width,
            patch_size,
            image_height // patch_size,
            image_width // patch_size,
        )

    @classmethod
    def from_grid(cls, grid_rows: int, grid_cols: int, patch_size: int = 1) -> "PatchGrid":
        return cls(
            grid_rows * patch_size,
            grid_cols * patch_size,
            patch_size,
            grid_rows,
            grid_cols,
        )

    @property
    def n(self) -> int:
        """Number of patch tokens, Hp * Wp."""
        return self.grid_rows * self.grid_cols


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TokenFeatureMap:
    """Per-image grid of d-dimensional patch tokens.

    ``tokens`` is an (n, d) float32 array, row i being the token of patch i
    in row-major grid order. float32 is the canonical storage so files
    round-trip bit-exactly; numerical code upcasts to float64 on entry.
    """

    grid: PatchGrid
    tokens: np.ndarray

    def __post_init__(self):
        tokens = np.asarray(self.tokens, dtype=np.float32)
        if tokens.ndim != 2:
            raise InvalidSpec(f"tokens must be 2-D (n, d), got shape {tokens.shape}")
        if tokens.shape[0] != self.grid.n:
            raise InvalidSpec(
                f"token count {tokens.shape[0]} != grid patch count {self.grid.n}"
            )
        if not np.all(np.isfinite(tokens)):
            raise InvalidSpec("tokens contain non-finite values")
        object.__setattr__(self, "tokens", _freeze(tokens))

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]

    def tokens64(self) -> np.ndarray:
        """Tokens upcast to float64 for numerical work."""
        return self.tokens.astype(np.float64)


@dataclass(frozen=True)
class LabelMask:
    """Per-patch integer labels; label 0 is background for binary masks."""

    grid: PatchGrid
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or labels.shape[0] != self.grid.n:
            raise InvalidSpec(
                f"labels must be a flat array of {self.grid.n} entries, "
                f"got shape {labels.shape}"
            )
        if labels.min(initial=0) < 0:
            raise InvalidSpec("labels must be >= 0")
        object.__setattr__(self, "labels", _freeze(labels))

    def as_grid(self) -> np.ndarray:
        return self.labels.reshape(self.grid.grid_rows, self.grid.grid_cols)

    def to_pixels(self) -> np.ndarray:
        """Upsample to pixel resolution by nearest-neighbor patch replication."""
        p = self.grid.patch_size
        return np.kron(self.as_grid(), np.ones((p, p), dtype=np.int64))


@dataclass(frozen=True)
class FixtureSpec:
    """Recipe for a planted-structure token grid."""

    grid: PatchGrid
    dim: int
    block_count: int = 2
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.block_count < 2:
            raise InvalidSpec("block_count must be >= 2")
        if self.block_count > self.grid.n:
            raise InvalidSpec(
                f"block_count {self.block_count} exceeds patch count {self.grid.n}"
            )
        if self.block_count > self.dim:
            # prototypes are orthonormal basis vectors, so one dimension per block
            raise InvalidSpec(
                f"block_count {self.block_count} exceeds feature dim {self.dim}"
            )
        if not np.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise InvalidSpec("noise_sigma must be a finite nonnegative real")


# --- feature files ----------------------------------------------------------


def save_features(feature_map: TokenFeatureMap, path: str | Path) -> None:
    """Write the SSAM v1 binary file for `feature_map` (atomically)."""
    grid = feature_map.grid
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        grid.grid_rows,
        grid.grid_cols,
        feature_map.dim,
        grid.patch_size,
    )
    payload = np.ascontiguousarray(feature_map.tokens, dtype="<f4").tobytes()
    try:
        _atomic_write(Path(path), header + payload)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_features(path: str | Path) -> TokenFeatureMap:
    """Read an SSAM v1 file, rejecting bad magic, truncation and non-finite data."""
    data = Path(path).read_bytes()
    if len(data) < HEADER_SIZE:
        if data[:4] != MAGIC:
            raise BadMagic(f"not an SSAM file: magic {data[:4]!r}", offset=0)
        raise TruncatedFile(
            f"header needs {HEADER_SIZE} bytes, file has {len(data)}", offset=len(data)
        )
    magic, version, rows, cols, dim, patch = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagic(f"not an SSAM file: magic {magic!r}", offset=0)
    if version != VERSION:
        raise BadMagic(f"unsupported SSAM version {version}", offset=4)
    expected = HEADER_SIZE + rows * cols * dim * 4
    if len(data) < expected:
        raise TruncatedFile(
            f"payload needs {expected} bytes, file has {len(data)}", offset=len(data)
        )
    flat = np.frombuffer(data, dtype="<f4", count=rows * cols * dim, offset=HEADER_SIZE)
    finite = np.isfinite(flat)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise NonFiniteValue(
            f"non-finite value at payload index {bad}", offset=HEADER_SIZE + 4 * bad
        )
    grid = PatchGrid.from_grid(rows, cols, patch)
    return TokenFeatureMap(grid, flat.reshape(rows * cols, dim))


# --- mask files (binary PGM) ------------------------------------------------

_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def save_mask(mask: LabelMask, path: str | Path) -> None:
    """Write `mask` as a binary PGM (P5, maxval 255) at patch resolution."""
    labels = mask.labels
    if labels.max(initial=0) > 255:
        raise LabelOverflow(
            f"label {int(labels.max())} exceeds the 8-bit PGM payload"
        )
    grid = mask.grid
    header = f"P5\n{grid.grid_cols} {grid.grid_rows}\n255\n".encode()
    try:
        _atomic_write(Path(path), header + labels.astype(np.uint8).tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_mask(path: str | Path, patch_size: int = 1) -> LabelMask:
    """Read a binary PGM mask; `patch_size` sets the grid's pixel scale."""
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise BadHeader(f"not a binary PGM: starts with {data[:2]!r}")
    pos = 2
    fields = []
    for _ in range(3):
        m = _PGM_TOKEN.match(data, pos)
        if m is None:
            raise BadHeader("PGM header ended before width/height/maxval")
        fields.append(m.group(1))
        pos = m.end()
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise BadHeader(f"non-numeric PGM header fields {fields}") from exc
    if not (0 < maxval <= 255):
        raise BadHeader(f"maxval {maxval} outside 1..255")
    pos += 1  # single whitespace byte after maxval
    payload = data[pos : pos + width * height]
    if len(payload) != width * height:
        raise BadHeader(
            f"payload has {len(payload)} bytes, expected {width * height}"
        )
    labels = np.frombuffer(payload, dtype=np.uint8).astype(np.int64)
    return LabelMask(PatchGrid.from_grid(height, width, patch_size), labels)


# --- planted fixtures -------------------------------------------------------


def planted_blocks(
    grid: PatchGrid,
    dim: int,
    block_of_patch: np.ndarray,
    noise_sigma: float,
    seed: int,
) -> tuple[TokenFeatureMap, LabelMask]:
    """Build a token map whose block j carries the unit prototype e_j plus noise.

    `block_of_patch` assigns each patch its block id (0-based). Prototypes
    are orthonormal basis vectors, so with zero noise the pairwise token
    dot products are exactly 0 or 1.
    """
    block_of_patch = np.asarray(block_of_patch, dtype=np.int64)
    k = int(block_of_patch.max()) + 1
    if k > dim:
        raise InvalidSpec(f"{k} blocks need at least {k} feature dims, have {dim}")
    prototypes = np.eye(dim, dtype=np.float64)[:k]
    tokens = prototypes[block_of_patch]
    if noise_sigma > 0:
        rng = stage_rng(seed, "fixture-noise")
        tokens = tokens + noise_sigma * rng.standard_normal(tokens.shape)
    feature_map = TokenFeatureMap(grid, tokens.astype(np.float32))
    return feature_map, LabelMask(grid, block_of_patch)


def rectangular_split(grid: PatchGrid, axis: int, at: int) -> np.ndarray:
    """Block ids for a guillotine cut of the grid at row/col `at` along `axis`."""
    field = np.zeros((grid.grid_rows, grid.grid_cols), dtype=np.int64)
    if axis == 0:
        field[at:, :] = 1
    else:
        field[:, at:] = 1
    return field.ravel()


def synthesize_fixture(spec: FixtureSpec) -> tuple[TokenFeatureMap, LabelMask]:
    """Plant `spec.block_count` rectangular blocks with noisy prototype tokens.

    The partition is drawn from the seed by repeatedly guillotine-splitting
    the largest remaining rectangle, so blocks stay contiguous rectangles.
    Deterministic: the same spec always yields the same bytes.
    """
    rng = stage_rng(spec.seed, "fixture-split")
    rows, cols = spec.grid.grid_rows, spec.grid.grid_cols
    # rectangles as (r0, r1, c0, c1), half-open
    rects = [(0, rows, 0, cols)]
    while len(rects) < spec.block_count:
        rects.sort(key=lambda r: ((r[1] - r[0]) * (r[3] - r[2]), r), reverse=True)
        r0, r1, c0, c1 = rects.pop(0)
        h, w = r1 - r0, c1 - c0
        if h * w < 2:
            raise InvalidSpec("not enough patches left to split into blocks")
        split_rows = h >= w and h >= 2 or w < 2
        if split_rows:
            at = r0 + int(rng.integers(1, h))
            rects += [(r0, at, c0, c1), (at, r1, c0, c1)]
        else:
            at = c0 + int(rng.integers(1, w))
            rects += [(r0, r1, c0, at), (r0, r1, at, c1)]
    # block 0 is the largest rectangle (ties by position), so for two blocks
    # label 1 marks the smaller, object-like region
    by_size = sorted(rects, key=lambda r: (-(r[1] - r[0]) * (r[3] - r[2]), r))
    block_of_patch = np.empty((rows, cols), dtype=np.int64)
    for j, (r0, r1, c0, c1) in enumerate(by_size):
        block_of_patch[r0:r1, c0:c1] = j
    return planted_blocks(
        spec.grid, spec.dim, block_of_patch.ravel(), spec.noise_sigma, spec.seed
    )


# --- helpers ----------------------------------------------------------------


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def relabel_contiguous(labels: np.ndarray) -> np.ndarray:
    """Map labels onto 0..L-1 in order of first appearance."""
    labels = np.asarray(labels, dtype=np.int64)
    _, first_pos, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first_pos))
    return order[inverse]
