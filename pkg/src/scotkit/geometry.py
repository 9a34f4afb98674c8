"""Quantized bounding-box arithmetic on the 1000x1000 canvas.

Boxes live on an integer grid with (0, 0) at the top-left and
(1000, 1000) at the bottom-right. For area and rasterization purposes a
box is closed-open: grid cell (x, y) belongs to the box iff
xmin <= x < xmax and ymin <= y < ymax, which makes the analytic area
identical to counting unit cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

CANVAS = 1000


class BoxError(ValueError):
    """Raised when box coordinates violate the canvas invariants."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned integer box with strictly positive area."""

    xmin: int
    ymin: int
    xmax: int
    ymax: int

    def __post_init__(self) -> None:
        for v in (self.xmin, self.ymin, self.xmax, self.ymax):
            if not isinstance(v, int) or isinstance(v, bool):
                raise BoxError(f"box coordinates must be integers, got {v!r}")
        if not (0 <= self.xmin < self.xmax <= CANVAS):
            raise BoxError(f"need 0 <= xmin < xmax <= {CANVAS}, got {self.as_list()}")
        if not (0 <= self.ymin < self.ymax <= CANVAS):
            raise BoxError(f"need 0 <= ymin < ymax <= {CANVAS}, got {self.as_list()}")

    @classmethod
    def from_list(cls, coords: Iterable[int]) -> "BBox":
        vals = list(coords)
        if len(vals) != 4:
            raise BoxError(f"box literal must have 4 coordinates, got {vals!r}")
        return cls(*vals)

    def as_list(self) -> list[int]:
        """Box literal form ``[xmin, ymin, xmax, ymax]``."""
        return [self.xmin, self.ymin, self.xmax, self.ymax]

    @property
    def width(self) -> int:
        return self.xmax - self.xmin

    @property
    def height(self) -> int:
        return self.ymax - self.ymin


def area(b: BBox) -> int:
    """Area in square canvas units."""
    return b.width * b.height


def intersection_area(a: BBox, b: BBox) -> int:
    """Area of the overlap region; 0 when disjoint."""
    w = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    h = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    if w <= 0 or h <= 0:
        return 0
    return w * h


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union. Exact on the integer grid (both terms are
    integers, so the quotient carries only one rounding)."""
    inter = intersection_area(a, b)
    if inter == 0:
        return 0.0
    union = area(a) + area(b) - inter
    return inter / union


def contains(outer: BBox, inner: BBox, margin: int = 0) -> bool:
    """True iff ``inner`` fits inside ``outer`` dilated by ``margin``."""
    if margin < 0:
        raise ValueError("margin must be >= 0")
    return (
        outer.xmin - margin <= inner.xmin
        and inner.xmax <= outer.xmax + margin
        and outer.ymin - margin <= inner.ymin
        and inner.ymax <= outer.ymax + margin
    )


def center(b: BBox) -> tuple[float, float]:
    """Box center (cx, cy); halves are exact in binary floating point."""
    return ((b.xmin + b.xmax) / 2, (b.ymin + b.ymax) / 2)


def _round_half_away(x: float) -> int:
    if x >= 0:
        return math.floor(x + 0.5)
    return math.ceil(x - 0.5)


def quantize(nx: float, ny: float, nx2: float, ny2: float) -> BBox:
    """Map normalized [0,1] corners onto the integer canvas.

    Each coordinate is rounded half away from zero to the 1000-unit grid
    and clamped into [0, 1000]. A degenerate axis (min >= max after
    rounding) is repaired by widening it to one unit.
    """

    def snap(v: float) -> int:
        return min(CANVAS, max(0, _round_half_away(v * CANVAS)))

    xmin, ymin, xmax, ymax = snap(nx), snap(ny), snap(nx2), snap(ny2)
    if xmin >= xmax:
        if xmin < CANVAS:
            xmax = xmin + 1
        else:
            xmin, xmax = CANVAS - 1, CANVAS
    if ymin >= ymax:
        if ymin < CANVAS:
            ymax = ymin + 1
        else:
            ymin, ymax = CANVAS - 1, CANVAS
    return BBox(xmin, ymin, xmax, ymax)
