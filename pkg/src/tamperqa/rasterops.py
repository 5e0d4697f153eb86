"""Binary-mask geometry: areas, centroids, components, grid cells, directions.

Masks are 2-D boolean numpy arrays indexed ``mask[y, x]``. Points are
``(x, y)`` tuples in pixel coordinates with y growing downward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import CoincidentPoints, DimensionMismatch, EmptyMask, NonBinaryMask, OutOfBounds

GRID_LABELS = (
    ("top-left", "top", "top-right"),
    ("left", "center", "right"),
    ("bottom-left", "bottom", "bottom-right"),
)
GRID_CELLS = tuple(label for row in GRID_LABELS for label in row)

# counter-clockwise from east, in the y-up frame
DIRECTIONS_CCW = (
    "east",
    "northeast",
    "north",
    "northwest",
    "west",
    "southwest",
    "south",
    "southeast",
)
DIRECTIONS = ("north", "northeast", "east", "southeast", "south", "southwest", "west", "northwest")
OPPOSITE = {d: DIRECTIONS[(i + 4) % 8] for i, d in enumerate(DIRECTIONS)}

_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class RegionStats:
    area_px: int
    bbox: tuple[int, int, int, int]  # min_x, min_y, max_x, max_y (inclusive)
    centroid: tuple[float, float]
    component_count: int


def as_mask(arr) -> np.ndarray:
    """Coerce a 0/1, bool or 0/255 array into a boolean mask.

    Raises NonBinaryMask for any other value.
    """
    arr = np.asarray(arr)
    if arr.ndim != 2 or arr.size == 0:
        raise DimensionMismatch(f"mask must be a non-empty 2-D array, got shape {arr.shape}")
    if arr.dtype == bool:
        return arr
    values = np.unique(arr)
    if not (set(values.tolist()) <= {0, 1} or set(values.tolist()) <= {0, 255}):
        raise NonBinaryMask(f"mask contains values outside {{0,1}} / {{0,255}}: {values[:8].tolist()}")
    return arr != 0


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} != {b.shape}")


def component_count(mask: np.ndarray) -> int:
    _, n = ndimage.label(mask, structure=_FOUR_CONNECTED)
    return int(n)


def region_stats(mask: np.ndarray) -> RegionStats:
    mask = as_mask(mask)
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        raise EmptyMask("mask has no set pixel")
    return RegionStats(
        area_px=int(xs.size),
        bbox=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
        centroid=(float(xs.mean()), float(ys.mean())),
        component_count=component_count(mask),
    )


def overlap_fraction(a: np.ndarray, b: np.ndarray) -> float:
    """|a ∩ b| / |a|. Pass the source mask as ``a``."""
    a = as_mask(a)
    b = as_mask(b)
    _same_shape(a, b)
    area = int(a.sum())
    if area == 0:
        raise EmptyMask("first mask is empty")
    return int(np.logical_and(a, b).sum()) / area


def touches_border(mask: np.ndarray) -> bool:
    mask = as_mask(mask)
    return bool(mask[0, :].any() or mask[-1, :].any() or mask[:, 0].any() or mask[:, -1].any())


def _check_point(point, image) -> None:
    x, y = point
    width, height = image
    if not (0 <= x < width and 0 <= y < height):
        raise OutOfBounds(f"point {point} outside image {width}x{height}")


def grid_cell(point: tuple[float, float], image: tuple[int, int]) -> str:
    """Label of the 3x3 grid cell containing ``point``."""
    _check_point(point, image)
    x, y = point
    width, height = image
    col = min(max(math.floor(3 * x / width), 0), 2)
    row = min(max(math.floor(3 * y / height), 0), 2)
    return GRID_LABELS[row][col]


def direction(src: tuple[float, float], dst: tuple[float, float]) -> str:
    """Compass label of ``dst`` as seen from ``src``.

    Eight 45-degree sectors centred on the compass axes. An angle lying
    exactly on a sector edge belongs to the clockwise-later sector.
    """
    dx = dst[0] - src[0]
    dy = dst[1] - src[1]
    if dx == 0 and dy == 0:
        raise CoincidentPoints(f"{src} == {dst}")
    return direction_from_angle(math.degrees(math.atan2(-dy, dx)))


def direction_from_angle(angle_deg: float) -> str:
    """Sector label for a counter-clockwise angle from east (y-up frame)."""
    # sector k spans (45k - 22.5, 45k + 22.5]
    return DIRECTIONS_CCW[math.ceil((angle_deg - 22.5) / 45.0) % 8]


def normalized_distance(a: tuple[float, float], b: tuple[float, float], image: tuple[int, int]) -> float:
    """Euclidean distance divided by the image diagonal sqrt(w² + h²).

    Pixel centres of opposite corners are (w-1, h-1) apart, so the maximum
    attainable value is slightly below 1 (511/512 for a 512x512 image).
    """
    _check_point(a, image)
    _check_point(b, image)
    width, height = image
    return math.hypot(a[0] - b[0], a[1] - b[1]) / math.hypot(width, height)
