"""Radiopaque BB (nipple marker) detection.

Two-stage gradient Hough transform: edge pixels vote for centres along
their gradient direction, then each accepted centre gets the radius most
edge pixels agree on. False candidates are removed by requiring the centre
to be at the image maximum and its 3x3 neighbourhood to be flat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .geometry import Bounds, GeometryError, Point, Segment
from .imaging import GrayImage
from .kernels import hough_vote


@dataclass(frozen=True)
class Circle:
    center: Point
    radius: float
    score: float


@dataclass(frozen=True)
class BbParams:
    r_min: int = 10
    r_max: int = 20
    edge_gradient_threshold: float = 0.2
    accumulator_peak_threshold: float = 120.0  # true BBs score ~290+, clutter < 70
    min_center_separation: Optional[float] = None  # defaults to 2 * r_max
    uniformity_tolerance: float = 1e-3

    def __post_init__(self):
        if not 0 < self.r_min < self.r_max:
            raise ValueError(f"need 0 < r_min < r_max, got {self.r_min}, {self.r_max}")
        if not 0 < self.edge_gradient_threshold < 1:
            raise ValueError("edge_gradient_threshold must lie in (0, 1)")

    @property
    def separation(self) -> float:
        if self.min_center_separation is None:
            return 2.0 * self.r_max
        return self.min_center_separation


class BbPlacementError(GeometryError):
    """The BB sits on the chest-wall edge, so no CC PNL can be drawn."""


def gradients(px: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel derivatives (x, y) with edge replication."""
    gx = ndimage.sobel(px, axis=1, mode="nearest")
    gy = ndimage.sobel(px, axis=0, mode="nearest")
    return gx, gy


def hough_circles(img: GrayImage, p: BbParams = BbParams(), backend=None) -> list[Circle]:
    px = img.pixels
    h, w = px.shape
    gx, gy = gradients(px)
    mag = np.hypot(gx, gy)
    top = float(mag.max())
    if top <= 0.0:
        return []
    ys, xs = np.nonzero(mag > p.edge_gradient_threshold * top)
    if xs.size == 0:
        return []
    m = mag[ys, xs]
    # vote toward the brighter side: the BB is the hyper-intense object
    ux = gx[ys, xs] / m
    uy = gy[ys, xs] / m
    xs = xs.astype(np.float64)
    ys = ys.astype(np.float64)
    acc = hough_vote(xs, ys, ux, uy, p.r_min, p.r_max, h, w, backend=backend)
    acc = ndimage.uniform_filter(acc, size=3, mode="constant") * 9.0

    local = ndimage.maximum_filter(acc, size=5, mode="constant")
    peaks = np.argwhere((acc == local) & (acc >= p.accumulator_peak_threshold))
    order = np.argsort(-acc[peaks[:, 0], peaks[:, 1]], kind="stable")

    chosen: list[tuple[float, float, float]] = []
    sep2 = p.separation ** 2
    for k in order:
        iy, ix = peaks[k]
        if any((ix - cx) ** 2 + (iy - cy) ** 2 < sep2 for cx, cy, _ in chosen):
            continue
        chosen.append((float(ix), float(iy), float(acc[iy, ix])))

    out = []
    for ix, iy, score in chosen:
        cx, cy = _refine_center(acc, int(ix), int(iy))
        r = _estimate_radius(xs, ys, ux, uy, m, cx, cy, p)
        if r is None:
            continue
        out.append(Circle(Point(cx, cy), r, score))
    return out


def _refine_center(acc: np.ndarray, ix: int, iy: int) -> tuple[float, float]:
    h, w = acc.shape
    y0, y1 = max(iy - 1, 0), min(iy + 2, h)
    x0, x1 = max(ix - 1, 0), min(ix + 2, w)
    win = acc[y0:y1, x0:x1]
    tot = win.sum()
    if tot <= 0:
        return float(ix), float(iy)
    yy, xx = np.mgrid[y0:y1, x0:x1]
    return float((win * xx).sum() / tot), float((win * yy).sum() / tot)


def _estimate_radius(xs, ys, ux, uy, mag, cx, cy, p: BbParams) -> Optional[float]:
    """Magnitude-weighted mode of edge distances among pixels whose gradient
    points at the centre."""
    dx = cx - xs
    dy = cy - ys
    d = np.hypot(dx, dy)
    near = (d >= p.r_min - 1.5) & (d <= p.r_max + 1.5)
    if not near.any():
        return None
    cosang = (dx[near] * ux[near] + dy[near] * uy[near]) / np.maximum(d[near], 1e-12)
    ok = cosang > 0.9
    if not ok.any():
        return None
    dist = d[near][ok]
    wts = mag[near][ok]
    bins = np.arange(p.r_min - 1.5, p.r_max + 2.0, 1.0)
    hist, _ = np.histogram(dist, bins=bins, weights=wts)
    k = int(np.argmax(hist))
    lo, hi = bins[k], bins[k + 1]
    sel = (dist >= lo - 0.5) & (dist < hi + 0.5)
    r = float(np.average(dist[sel], weights=wts[sel]))
    return min(max(r, float(p.r_min)), float(p.r_max))


def is_uniform_center(px: np.ndarray, c: Point, tol: float) -> bool:
    """All 9 pixels of the 3x3 block around the centre pixel match it within tol."""
    h, w = px.shape
    ix, iy = int(math.floor(c.x + 0.5)), int(math.floor(c.y + 0.5))
    if ix < 1 or iy < 1 or ix > w - 2 or iy > h - 2:
        return False
    block = px[iy - 1:iy + 2, ix - 1:ix + 2]
    return bool(np.all(np.abs(block - px[iy, ix]) <= tol))


def filter_bb(img: GrayImage, candidates: list[Circle], p: BbParams = BbParams()) -> Optional[Circle]:
    px = img.pixels
    peak = float(px.max())
    best = None
    for cand in candidates:
        ix, iy = int(math.floor(cand.center.x + 0.5)), int(math.floor(cand.center.y + 0.5))
        if not (0 <= ix < img.width and 0 <= iy < img.height):
            continue
        if abs(px[iy, ix] - peak) > p.uniformity_tolerance:
            continue
        if not is_uniform_center(px, cand.center, p.uniformity_tolerance):
            continue
        if best is None or cand.score > best.score:
            best = cand
    return best


def detect_bb(img: GrayImage, p: BbParams = BbParams()) -> Optional[Circle]:
    return filter_bb(img, hough_circles(img, p), p)


def cc_pnl(dims: Bounds, bb: Circle, chest_wall: str) -> Segment:
    """Horizontal PNL from the BB centre to the chest-wall edge of the image."""
    if chest_wall not in ("Left", "Right"):
        raise ValueError(f"chest_wall must be 'Left' or 'Right', got {chest_wall!r}")
    x_end = 0.0 if chest_wall == "Left" else float(dims.width - 1)
    start = bb.center
    try:
        return Segment(start, Point(x_end, start.y))
    except GeometryError as exc:
        raise BbPlacementError(f"BB on chest wall edge at x={start.x}") from exc


def chest_wall_side(img: GrayImage, laterality: Optional[str] = None, mode: str = "auto") -> str:
    """Which vertical image edge the chest wall lies on.

    ``auto`` picks the side holding more tissue (the breast contour apex
    points away from the chest wall). ``laterality`` uses the display
    convention L -> Left, R -> Right.
    """
    if mode == "laterality":
        if laterality not in ("L", "R"):
            raise ValueError("laterality mode needs laterality L or R")
        return "Left" if laterality == "L" else "Right"
    if mode != "auto":
        raise ValueError(f"unknown chest wall mode {mode!r}")
    px = img.pixels
    half = img.width // 2
    left = float(px[:, :half].sum())
    right = float(px[:, img.width - half:].sum())
    if left == right and laterality in ("L", "R"):
        return "Left" if laterality == "L" else "Right"
    return "Left" if left >= right else "Right"
