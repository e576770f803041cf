"""2D primitives used by the positioning rules.

Coordinates are continuous pixel coordinates: x grows to the right, y grows
downwards, and the centre of pixel (i, j) sits at x=j, y=i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

PARALLEL_TOL = 1e-9


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite point ({self.x}, {self.y})")

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Segment:
    p0: Point
    p1: Point

    def __post_init__(self):
        if self.p0 == self.p1:
            raise GeometryError(f"zero-length segment at {self.p0}")

    @classmethod
    def from_coords(cls, x0: float, y0: float, x1: float, y1: float) -> "Segment":
        return cls(Point(float(x0), float(y0)), Point(float(x1), float(y1)))

    @property
    def length(self) -> float:
        return distance(self.p0, self.p1)

    def reversed(self) -> "Segment":
        return Segment(self.p1, self.p0)


@dataclass(frozen=True)
class Bounds:
    width: int
    height: int

    def __post_init__(self):
        if int(self.width) != self.width or int(self.height) != self.height:
            raise GeometryError("bounds must be integral")
        if self.width < 1 or self.height < 1:
            raise GeometryError(f"invalid bounds {self.width}x{self.height}")


def line_intersection(a: Segment, b: Segment) -> Optional[Point]:
    """Intersection of the infinite lines through ``a`` and ``b``.

    Returns None when the lines are parallel, using a tolerance scaled by the
    product of the segment lengths.
    """
    dax = a.p1.x - a.p0.x
    day = a.p1.y - a.p0.y
    dbx = b.p1.x - b.p0.x
    dby = b.p1.y - b.p0.y
    det = dax * dby - day * dbx
    if abs(det) < PARALLEL_TOL * a.length * b.length:
        return None
    ex = b.p0.x - a.p0.x
    ey = b.p0.y - a.p0.y
    t = (ex * dby - ey * dbx) / det
    u = (ex * day - ey * dax) / det
    # average the two parametrisations so the result is symmetric in (a, b)
    xa, ya = a.p0.x + t * dax, a.p0.y + t * day
    xb, yb = b.p0.x + u * dbx, b.p0.y + u * dby
    return Point(0.5 * (xa + xb), 0.5 * (ya + yb))


def point_in_bounds(p: Point, b: Bounds) -> bool:
    return 0.0 <= p.x <= b.width - 1 and 0.0 <= p.y <= b.height - 1


def distance(p: Point, q: Point) -> float:
    return math.hypot(q.x - p.x, q.y - p.y)


def perpendicular_distance(p: Point, s: Segment) -> float:
    """Distance from ``p`` to the infinite line through ``s``."""
    dx = s.p1.x - s.p0.x
    dy = s.p1.y - s.p0.y
    cross = dx * (p.y - s.p0.y) - dy * (p.x - s.p0.x)
    return abs(cross) / math.hypot(dx, dy)


def project_onto_line(p: Point, s: Segment) -> Point:
    """Foot of the perpendicular from ``p`` onto the line through ``s``."""
    dx = s.p1.x - s.p0.x
    dy = s.p1.y - s.p0.y
    t = ((p.x - s.p0.x) * dx + (p.y - s.p0.y) * dy) / (dx * dx + dy * dy)
    return Point(s.p0.x + t * dx, s.p0.y + t * dy)


def clip_ray_to_bounds(origin: Point, toward: Point, b: Bounds) -> Point:
    """Walk from ``origin`` toward ``toward`` and stop at ``toward`` or the image
    border, whichever comes first. ``origin`` must be inside ``b``."""
    dx = toward.x - origin.x
    dy = toward.y - origin.y
    t = 1.0
    for o, d, hi in ((origin.x, dx, b.width - 1), (origin.y, dy, b.height - 1)):
        if d > 0:
            t = min(t, (hi - o) / d)
        elif d < 0:
            t = min(t, (0.0 - o) / d)
    # clamp away rounding that would leave the stopping point a hair outside
    x = min(max(origin.x + t * dx, 0.0), float(b.width - 1))
    y = min(max(origin.y + t * dy, 0.0), float(b.height - 1))
    return Point(x, y)
