"""Grid scan orders and patch tiling for region rasters.

Three ways to linearize a patch grid into a sequence:

* ``scan1`` — plain row-major raster, every row left to right.
* ``scan2`` — boustrophedon: even rows left to right, odd rows right to
  left, so consecutive visits are always grid-adjacent.
* ``scan3`` — 2x2 blocks walked boustrophedon over block-rows; cells
  inside a block are visited row-major in the current travel direction.

``tile_region`` cuts an image into fixed-size patches in a given order,
mirror-padding the bottom/right boundary (edge pixel repeated) so every
patch has the full extent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Tuple

import numpy as np

from .errors import ValidationError

PATCH_SIDE = 256
SCAN_STRATEGIES = ("scan1", "scan2", "scan3")


class GridDims(NamedTuple):
    rows: int
    cols: int


@dataclass(frozen=True)
class ScanOrder:
    """A full-grid visit permutation under one strategy."""

    dims: GridDims
    strategy: str
    visits: Tuple[Tuple[int, int], ...]


@dataclass
class Patch:
    pixels: np.ndarray
    grid_pos: Tuple[int, int]
    sequence_pos: int


def grid_dims(height: int, width: int, patch_side: int = PATCH_SIDE) -> GridDims:
    """Ceiling-division grid shape covering a height x width raster."""
    if height < 1 or width < 1:
        raise ValidationError(f"image extent must be >= 1, got {height}x{width}")
    if patch_side < 1:
        raise ValidationError(f"patch_side must be >= 1, got {patch_side}")
    return GridDims(math.ceil(height / patch_side), math.ceil(width / patch_side))


def _scan1(rows: int, cols: int):
    for r in range(rows):
        for c in range(cols):
            yield (r, c)


def _scan2(rows: int, cols: int):
    for r in range(rows):
        span = range(cols) if r % 2 == 0 else range(cols - 1, -1, -1)
        for c in span:
            yield (r, c)


def _scan3(rows: int, cols: int):
    # Ragged edges degenerate to 1-wide / 1-tall blocks.
    for block_idx, r0 in enumerate(range(0, rows, 2)):
        r1 = min(r0 + 2, rows)
        rightward = block_idx % 2 == 0
        col_starts = range(0, cols, 2) if rightward else range(2 * ((cols - 1) // 2), -1, -2)
        for c0 in col_starts:
            c1 = min(c0 + 2, cols)
            for r in range(r0, r1):
                span = range(c0, c1) if rightward else range(c1 - 1, c0 - 1, -1)
                for c in span:
                    yield (r, c)


_GENERATORS = {"scan1": _scan1, "scan2": _scan2, "scan3": _scan3}


def scan_order(dims: GridDims, strategy: str) -> ScanOrder:
    """Visit order for every cell of ``dims`` under ``strategy``."""
    rows, cols = dims
    if rows < 1 or cols < 1:
        raise ValidationError(f"grid dims must be >= 1, got {rows}x{cols}")
    if strategy not in _GENERATORS:
        raise ValidationError(
            f"unknown scan strategy {strategy!r}; expected one of {SCAN_STRATEGIES}"
        )
    visits = tuple(_GENERATORS[strategy](rows, cols))
    return ScanOrder(dims=GridDims(rows, cols), strategy=strategy, visits=visits)


def continuity_cost(order: ScanOrder) -> float:
    """Mean Manhattan distance between consecutive visits (0 for one cell)."""
    v = order.visits
    if len(v) < 2:
        return 0.0
    total = sum(abs(a[0] - b[0]) + abs(a[1] - b[1]) for a, b in zip(v, v[1:]))
    return total / (len(v) - 1)


def pad_to_grid(image: np.ndarray, dims: GridDims, patch_side: int = PATCH_SIDE) -> np.ndarray:
    """Mirror-pad bottom/right so the raster tiles exactly into the grid.

    Uses edge-repeating reflection (numpy ``symmetric``): the first padded
    row/column duplicates the boundary pixel, then walks back inward.
    """
    h, w = image.shape[:2]
    pad_h = dims.rows * patch_side - h
    pad_w = dims.cols * patch_side - w
    if pad_h < 0 or pad_w < 0:
        raise ValidationError(f"grid {dims} too small for {h}x{w} image")
    pad = [(0, pad_h), (0, pad_w)] + [(0, 0)] * (image.ndim - 2)
    return np.pad(image, pad, mode="symmetric")


def tile_region(
    image: np.ndarray, order: ScanOrder, patch_side: int = PATCH_SIDE
) -> List[Patch]:
    """Cut ``image`` into patch_side squares emitted in ``order.visits``."""
    if image.ndim not in (2, 3):
        raise ValidationError(f"expected 2-D or 3-D raster, got ndim={image.ndim}")
    h, w = image.shape[:2]
    expected = grid_dims(h, w, patch_side)
    if order.dims != expected:
        raise ValidationError(
            f"scan order built for grid {tuple(order.dims)} but {h}x{w} image needs {tuple(expected)}"
        )
    padded = pad_to_grid(image, order.dims, patch_side)
    patches = []
    for seq, (r, c) in enumerate(order.visits):
        pixels = padded[
            r * patch_side : (r + 1) * patch_side,
            c * patch_side : (c + 1) * patch_side,
        ].copy()
        patches.append(Patch(pixels=pixels, grid_pos=(r, c), sequence_pos=seq))
    return patches
