"""Region masks and orientation normalization.

A region's polygon is rasterized into a binary mask (even-odd fill at
pixel centers, centers exactly on an edge counting as inside). The mask's
principal axis angle is read off the second central moments, and the
region is rotated so that axis lands on 90 degrees, cropped to the
rotated mask, and padded out to exact multiples of the patch side.

All pixel geometry lives in the image frame: x = column index, y = row
index (increasing downward), the pixel at index (row, col) having its
center at (col + 0.5, row + 0.5).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from .annotations import BoundingBox, RegionRecord, polygon_area, region_bounding_box
from .errors import DataError, ValidationError
from .scanning import PATCH_SIDE

# Below this eigenvalue spread the orientation is noise, not signal.
DEGENERATE_AXIS_RATIO = 1e-3


class DegenerateOrientationError(DataError):
    """Mask is isotropic; its major-axis angle is undefined."""


@dataclass
class RegionMask:
    bits: np.ndarray  # bool, shape (height, width)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def set_count(self) -> int:
        return int(self.bits.sum())


@dataclass
class NormalizedRegion:
    image: np.ndarray
    mask: RegionMask
    rotation_deg: float
    bbox: BoundingBox
    degenerate: bool = False


def rasterize_mask(record: RegionRecord, bbox: Optional[BoundingBox] = None) -> RegionMask:
    """Even-odd polygon fill over the bounding box, one bit per pixel.

    A pixel is set when its center is inside the polygon by the even-odd
    rule; centers exactly on an edge count as inside.
    """
    if bbox is None:
        bbox = region_bounding_box(record)
    height, width = bbox.height, bbox.width
    if height < 1 or width < 1:
        raise DataError(f"region {record.region_id}: polygon has zero area")

    # Vertices relative to the box origin.
    verts = np.array(
        [(x - bbox.min_x, y - bbox.min_y) for x, y in record.coordinates], dtype=np.float64
    )
    x1, y1 = verts[:, 0], verts[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)

    centers_x = np.arange(width) + 0.5
    centers_y = np.arange(height) + 0.5
    inside = np.zeros((height, width), dtype=bool)
    on_edge = np.zeros((height, width), dtype=bool)

    for ex1, ey1, ex2, ey2 in zip(x1, y1, x2, y2):
        # Crossing parity: the edge spans the scanline half-open in y.
        spans = (ey1 > centers_y) != (ey2 > centers_y)
        if spans.any():
            yc = centers_y[spans]
            xi = ex1 + (yc - ey1) * (ex2 - ex1) / (ey2 - ey1)
            inside[spans] ^= centers_x[None, :] < xi[:, None]
        # On-segment detection for the inclusive-boundary tie-break,
        # restricted to the edge's own pixel window.
        dx, dy = ex2 - ex1, ey2 - ey1
        length = math.hypot(dx, dy)
        if length == 0.0:
            continue
        ca = max(0, int(math.floor(min(ex1, ex2) - 1)))
        cb = min(width, int(math.ceil(max(ex1, ex2) + 1)))
        ra = max(0, int(math.floor(min(ey1, ey2) - 1)))
        rb = min(height, int(math.ceil(max(ey1, ey2) + 1)))
        if ca >= cb or ra >= rb:
            continue
        px = centers_x[None, ca:cb] - ex1
        py = centers_y[ra:rb, None] - ey1
        cross = px * dy - py * dx
        t = (px * dx + py * dy) / (length * length)
        on_edge[ra:rb, ca:cb] |= (
            (np.abs(cross) <= 1e-9 * max(1.0, length)) & (t >= 0.0) & (t <= 1.0)
        )

    if not inside.any() and polygon_area(record.coordinates) == 0.0:
        raise DataError(f"region {record.region_id}: polygon has zero area")
    bits = inside | on_edge
    if not bits.any():
        raise DataError(f"region {record.region_id}: polygon rasterizes to an empty mask")
    return RegionMask(bits=bits)


def axis_angle_distance(a: float, b: float) -> float:
    """Angular distance in degrees between two undirected axes (mod 180)."""
    d = abs(a - b) % 180.0
    return min(d, 180.0 - d)


def _central_moments(bits: np.ndarray) -> Tuple[float, float, float, float, float]:
    rows, cols = np.nonzero(bits)
    x = cols.astype(np.float64)
    y = rows.astype(np.float64)
    xbar, ybar = x.mean(), y.mean()
    mu20 = ((x - xbar) ** 2).mean()
    mu02 = ((y - ybar) ** 2).mean()
    mu11 = ((x - xbar) * (y - ybar)).mean()
    return xbar, ybar, mu20, mu02, mu11


def major_axis_angle(mask: RegionMask) -> float:
    """Major principal-axis angle in degrees from the x-axis, in (-90, 90].

    Derived from second central moments of the set pixels:
    angle = atan2(2*mu11, mu20 - mu02) / 2. Raises
    DegenerateOrientationError when the two eigenvalues agree to within
    DEGENERATE_AXIS_RATIO (no meaningful axis).
    """
    if not mask.bits.any():
        raise ValidationError("cannot orient an empty mask")
    _, _, mu20, mu02, mu11 = _central_moments(mask.bits)
    spread = math.hypot(mu20 - mu02, 2.0 * mu11)  # = lambda1 - lambda2
    total = mu20 + mu02  # = lambda1 + lambda2
    if total <= 0.0 or spread / total < DEGENERATE_AXIS_RATIO:
        raise DegenerateOrientationError("mask is isotropic: principal axes are indistinct")
    angle = 0.5 * math.degrees(math.atan2(2.0 * mu11, mu20 - mu02))
    if angle <= -90.0:
        angle += 180.0
    return angle


def _rotation_geometry(shape: Tuple[int, int], rotation_deg: float, center_yx: Tuple[float, float]):
    """Inverse-map matrix, offset, and output shape for a rotation about a point.

    Built for scipy's affine_transform, which maps output coordinates back
    to input coordinates. Pixel-center corner extents size the canvas, so
    a zero rotation is the exact identity.
    """
    h, w = shape
    theta = math.radians(rotation_deg)
    c, s = math.cos(theta), math.sin(theta)
    cy, cx = center_yx
    # Forward map in (y, x): y' = c*y + s*x, x' = -s*y + c*x (about center).
    corners = np.array([(y, x) for y in (0.0, h - 1.0) for x in (0.0, w - 1.0)])
    rel = corners - (cy, cx)
    fwd = np.stack([c * rel[:, 0] + s * rel[:, 1], -s * rel[:, 0] + c * rel[:, 1]], axis=1)
    fwd += (cy, cx)
    mins = fwd.min(axis=0)
    maxs = fwd.max(axis=0)
    out_h = int(math.ceil(maxs[0] - mins[0])) + 1
    out_w = int(math.ceil(maxs[1] - mins[1])) + 1
    inv = np.array([[c, -s], [s, c]])  # rotation by -theta in (y, x)
    # p_in = inv @ (p_out + mins - center) + center
    offset = inv @ (mins - np.array([cy, cx])) + np.array([cy, cx])
    return inv, offset, (out_h, out_w)


def normalize_rotation(
    image: np.ndarray, mask: RegionMask, patch_side: int = PATCH_SIDE
) -> NormalizedRegion:
    """Rotate a region upright and size it to whole patches.

    The rotation angle is 90 minus the mask's major-axis angle, applied
    about the mask centroid (bilinear for the image, nearest for the
    mask). The result is cropped to the rotated mask's bounding box, then
    each dimension is rounded up to a multiple of ``patch_side`` with the
    margin split evenly and mirror-filled on the image (zeros on the
    mask). Isotropic masks skip rotation and come back flagged.
    """
    if image.shape[:2] != mask.bits.shape:
        raise ValidationError(
            f"image {image.shape[:2]} and mask {mask.bits.shape} dimensions differ"
        )
    degenerate = False
    try:
        rotation = 90.0 - major_axis_angle(mask)
    except DegenerateOrientationError:
        rotation = 0.0
        degenerate = True

    rows, cols = np.nonzero(mask.bits)
    center_yx = (float(rows.mean()), float(cols.mean()))
    inv, offset, out_shape = _rotation_geometry(mask.bits.shape, rotation, center_yx)

    rotated_mask = ndimage.affine_transform(
        mask.bits.astype(np.uint8), inv, offset=offset, output_shape=out_shape,
        order=0, mode="constant", cval=0,
    ).astype(bool)
    if image.ndim == 2:
        rotated_image = ndimage.affine_transform(
            image.astype(np.float64), inv, offset=offset, output_shape=out_shape,
            order=1, mode="reflect",
        )
    else:
        channels = [
            ndimage.affine_transform(
                image[..., k].astype(np.float64), inv, offset=offset,
                output_shape=out_shape, order=1, mode="reflect",
            )
            for k in range(image.shape[2])
        ]
        rotated_image = np.stack(channels, axis=-1)
    rotated_image = np.clip(np.rint(rotated_image), 0, 255).astype(np.uint8)

    set_rows, set_cols = np.nonzero(rotated_mask)
    if set_rows.size == 0:
        raise DataError("rotation produced an empty mask")
    r0, r1 = int(set_rows.min()), int(set_rows.max()) + 1
    c0, c1 = int(set_cols.min()), int(set_cols.max()) + 1
    crop_image = rotated_image[r0:r1, c0:c1]
    crop_mask = rotated_mask[r0:r1, c0:c1]

    target_h = math.ceil(crop_mask.shape[0] / patch_side) * patch_side
    target_w = math.ceil(crop_mask.shape[1] / patch_side) * patch_side
    pad_top = (target_h - crop_mask.shape[0]) // 2
    pad_bottom = target_h - crop_mask.shape[0] - pad_top
    pad_left = (target_w - crop_mask.shape[1]) // 2
    pad_right = target_w - crop_mask.shape[1] - pad_left
    spatial = ((pad_top, pad_bottom), (pad_left, pad_right))
    final_image = np.pad(
        crop_image, spatial + ((0, 0),) * (crop_image.ndim - 2), mode="symmetric"
    )
    final_mask = np.pad(crop_mask, spatial, mode="constant", constant_values=False)

    return NormalizedRegion(
        image=final_image,
        mask=RegionMask(bits=final_mask),
        rotation_deg=rotation,
        bbox=BoundingBox(min_x=c0, min_y=r0, max_x=c1, max_y=r1),
        degenerate=degenerate,
    )
