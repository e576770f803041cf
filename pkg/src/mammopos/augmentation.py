"""Joint image + annotation augmentation: horizontal flips and rotations that
grow the canvas so no landmark is cropped. Translation and cropping are not
offered on purpose: both can push the PEC line or PNL out of frame."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .annotations import ViewAnnotation
from .geometry import Bounds, Point, Segment
from .imaging import GrayImage
from .kernels import affine_bilinear

_FLIP_LAT = {"L": "R", "R": "L"}


@dataclass(frozen=True)
class AugmentConfig:
    flip_probability: float = 0.5
    max_rotation_deg: float = 15.0
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError("flip_probability must lie in [0, 1]")
        if self.max_rotation_deg < 0:
            raise ValueError("max_rotation_deg must be >= 0")


def _map_annotation(ann: ViewAnnotation, fn, dims: Bounds, **changes) -> ViewAnnotation:
    def seg(s):
        return None if s is None else Segment(fn(s.p0), fn(s.p1))

    tag = None if ann.tag_box is None else (fn(ann.tag_box[0]), fn(ann.tag_box[1]))
    return replace(ann, pec=seg(ann.pec), pnl=seg(ann.pnl), tag_box=tag, dims=dims, **changes)


def hflip(img: GrayImage, ann: ViewAnnotation) -> tuple[GrayImage, ViewAnnotation]:
    """Mirror columns; x becomes (width-1)-x and laterality toggles.

    Flipping twice restores the input exactly whenever (width-1)-x is
    representable, which holds for any coordinate on a binary-fraction grid
    such as annotation-tool output; arbitrary doubles return within one ulp.
    """
    w = img.width
    out = img.with_pixels(img.pixels[:, ::-1])
    if out.meta.get("laterality") in _FLIP_LAT:
        out = GrayImage(out.pixels, out.bit_depth, out.spacing,
                        dict(out.meta, laterality=_FLIP_LAT[out.meta["laterality"]]))
    flipped = _map_annotation(ann, lambda p: Point((w - 1) - p.x, p.y), ann.dims,
                              laterality=_FLIP_LAT[ann.laterality])
    return out, flipped


def expanded_size(width: int, height: int, angle_deg: float) -> tuple[int, int]:
    th = math.radians(angle_deg)
    c, s = abs(math.cos(th)), abs(math.sin(th))
    # the 1e-9 slack keeps 0/90 degree rotations from growing by a pixel
    return (math.ceil(width * c + height * s - 1e-9), math.ceil(width * s + height * c - 1e-9))


def rotation_transform(dims: Bounds, angle_deg: float):
    """Return (forward point map, new bounds, inverse 2x3 pixel matrix).

    Rotation is about the image centre ``((W-1)/2, (H-1)/2)`` by ``angle_deg``
    in image coordinates (y down, so positive angles turn clockwise on
    screen); the result is re-centred on the enlarged canvas.
    """
    th = math.radians(angle_deg)
    c, s = math.cos(th), math.sin(th)
    new_w, new_h = expanded_size(dims.width, dims.height, angle_deg)
    cx, cy = (dims.width - 1) / 2.0, (dims.height - 1) / 2.0
    ncx, ncy = (new_w - 1) / 2.0, (new_h - 1) / 2.0

    def snap(v, hi):
        # corners at exact multiples of 90 degrees land on the border up to rounding
        if -1e-9 < v < 0.0:
            return 0.0
        if hi < v < hi + 1e-9:
            return float(hi)
        return v

    def forward(p: Point) -> Point:
        dx, dy = p.x - cx, p.y - cy
        return Point(snap(c * dx - s * dy + ncx, new_w - 1), snap(s * dx + c * dy + ncy, new_h - 1))

    # inverse: src = R^T (q - nc) + c
    inv = np.array([
        [c, s, cx - c * ncx - s * ncy],
        [-s, c, cy + s * ncx - c * ncy],
    ])
    return forward, Bounds(new_w, new_h), inv


def rotate_expand(img: GrayImage, ann: ViewAnnotation, angle_deg: float,
                  fill: float = 0.0) -> tuple[GrayImage, ViewAnnotation]:
    if img.bounds != ann.dims:
        raise ValueError("image and annotation dimensions differ")
    forward, new_dims, inv = rotation_transform(ann.dims, angle_deg)
    if angle_deg == 0:
        return img, ann
    px = affine_bilinear(img.pixels, new_dims.height, new_dims.width, inv, clamp=False, fill=fill)
    return img.with_pixels(px), _map_annotation(ann, forward, new_dims)


class Augmenter:
    """Seeded stream of random flips and rotations."""

    def __init__(self, cfg: AugmentConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.rng_seed)

    def draw(self) -> tuple[bool, float]:
        flip = bool(self.rng.random() < self.cfg.flip_probability)
        angle = float(self.rng.uniform(-self.cfg.max_rotation_deg, self.cfg.max_rotation_deg))
        return flip, angle

    def __call__(self, img: GrayImage, ann: ViewAnnotation) -> tuple[GrayImage, ViewAnnotation]:
        flip, angle = self.draw()
        if flip:
            img, ann = hflip(img, ann)
        if angle:
            img, ann = rotate_expand(img, ann, angle)
        return img, ann
