"""Synthetic MLO/CC phantom pairs with exact ground-truth geometry.

Phantoms are drawn in a canonical orientation (left breast, chest wall on the
left image edge) and mirrored for right breasts. Intensities: background
0.05, soft tissue 0.3-0.55, pectoral wedge ~0.72, non-BB content clipped at
0.92 and the BB saturated at 1.0, stored as 16-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .annotations import ViewAnnotation
from .augmentation import hflip
from .geometry import Bounds, Point, Segment, clip_ray_to_bounds, point_in_bounds
from .imaging import GrayImage
from .kernels import affine_bilinear

SCENARIOS = ("AdequateBoth", "MloPecShort", "CcTissueCut", "BbMissing")
# 0.07 mm/px detector spacing on ~3500 px wide images, shrunk to a 512 px canvas
DEFAULT_SPACING = 0.07 * 3500 / 512

EXPECTED = {
    "AdequateBoth": ("Adequate", "Adequate", "CorrectlyPositioned"),
    "MloPecShort": ("Inadequate", "Indeterminate", "MloInadequate"),
    "CcTissueCut": ("Adequate", "Inadequate", "CcInadequate"),
    "BbMissing": ("Adequate", "Indeterminate", "NoConclusion"),
}

_BG = 0.05
_PEC = 0.72
_TAG = 0.85
_CLIP = 0.92


class PhantomSpecError(ValueError):
    pass


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 0
    width: int = 512
    height: int = 512
    spacing: float = DEFAULT_SPACING
    scenario: str = "AdequateBoth"
    laterality: Optional[str] = None
    noise: float = 0.01
    bb_radius_range: tuple[int, int] = (10, 20)
    diff_threshold_mm: float = 10.0
    # explicit geometry; sampled from the seed when None
    pec_top_x: Optional[float] = None
    pec_chest_y: Optional[float] = None
    foot_fraction: Optional[float] = None
    d_mlo: Optional[float] = None
    d_diff_px: Optional[float] = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise PhantomSpecError(f"unknown scenario {self.scenario!r}")
        if self.laterality not in (None, "L", "R"):
            raise PhantomSpecError(f"bad laterality {self.laterality!r}")
        lo, hi = self.bb_radius_range
        if not 0 < lo <= hi:
            raise PhantomSpecError(f"bad BB radius range {self.bb_radius_range}")
        if self.width < 128 or self.height < 128:
            raise PhantomSpecError("phantom canvas must be at least 128x128")


@dataclass(frozen=True)
class PhantomCase:
    spec: PhantomSpec
    mlo_image: GrayImage
    mlo_annotation: ViewAnnotation
    cc_image: GrayImage
    cc_annotation: ViewAnnotation
    bb_radius: float
    cc_bb_center: Optional[Point]
    labels: dict = field(default_factory=dict)


# -- rendering helpers -------------------------------------------------------

def _grid(w, h):
    yy, xx = np.mgrid[0:h, 0:w]
    return xx.astype(np.float64), yy.astype(np.float64)


def _ellipse_alpha(xx, yy, cx, cy, ax, by):
    u = (xx - cx) / ax
    v = (yy - cy) / by
    f = np.sqrt(u * u + v * v)
    gnorm = np.sqrt((u / ax) ** 2 + (v / by) ** 2) / np.maximum(f, 1e-12)
    sd = (f - 1.0) / np.maximum(gnorm, 1e-12)
    return np.clip(0.5 - sd, 0.0, 1.0), f


def _disc_alpha(xx, yy, c: Point, r):
    d = np.hypot(xx - c.x, yy - c.y)
    return np.clip(r + 0.5 - d, 0.0, 1.0)


def _texture(rng, w, h, amp, cell=8):
    """Smooth low-frequency texture: blurred coarse noise, bilinearly upsampled."""
    cw, ch = -(-w // cell) + 1, -(-h // cell) + 1
    coarse = ndimage.gaussian_filter(rng.standard_normal((ch, cw)), sigma=1.5, mode="reflect")
    m = np.array([[1.0 / cell, 0.0, 0.0], [0.0, 1.0 / cell, 0.0]])
    t = affine_bilinear(coarse, h, w, m, clamp=True)
    t /= max(float(np.abs(t).max()), 1e-12)
    return amp * t


def _tissue(xx, yy, cx, cy, ax, by, rng, w, h):
    alpha, f = _ellipse_alpha(xx, yy, cx, cy, ax, by)
    inner = 0.30 + 0.25 * np.clip(1.0 - f * f, 0.0, 1.0) + _texture(rng, w, h, 0.04)
    return _BG * (1.0 - alpha) + inner * alpha


def _finish(img, rng, noise, bb: Optional[Point], r, xx, yy, spacing, view, lat):
    img = img + noise * rng.standard_normal(img.shape)
    img = np.clip(img, 0.0, _CLIP)
    if bb is not None:
        a = _disc_alpha(xx, yy, bb, r)
        img = img * (1.0 - a) + 1.0 * a
    px = np.rint(img * 65535.0)
    return GrayImage(px, bit_depth=16, spacing=spacing, meta={"view": view, "laterality": lat})


def _tag(w):
    return (Point(float(w - 90), 20.0), Point(float(w - 30), 50.0))


def _paint_tag(img, xx, yy, box):
    inside = (xx >= box[0].x) & (xx <= box[1].x) & (yy >= box[0].y) & (yy <= box[1].y)
    img[inside] = _TAG


# -- geometry sampling -------------------------------------------------------

def _sample_geometry(spec: PhantomSpec, rng):
    w, h = spec.width, spec.height
    thr_px = spec.diff_threshold_mm / spec.spacing
    short = spec.scenario == "MloPecShort"
    tag = _tag(w)
    for _ in range(500):
        r = float(rng.integers(spec.bb_radius_range[0], spec.bb_radius_range[1] + 1))
        tx = spec.pec_top_x if spec.pec_top_x is not None else rng.uniform(0.25, 0.5) * w
        if spec.pec_chest_y is not None:
            ly = spec.pec_chest_y
        elif short:
            ly = rng.uniform(0.25, 0.5) * h
        else:
            ly = rng.uniform(0.55, 0.9) * h
        if spec.foot_fraction is not None:
            t = spec.foot_fraction
        elif short:
            t = rng.uniform(1.25, 1.6)
        else:
            t = rng.uniform(0.3, 0.75)
        d_mlo = spec.d_mlo if spec.d_mlo is not None else rng.uniform(0.42, 0.62) * w
        if spec.d_diff_px is not None:
            delta = spec.d_diff_px
        elif spec.scenario == "CcTissueCut":
            delta = -rng.uniform(1.6, 3.0) * thr_px
        else:
            delta = rng.uniform(-0.5, 0.5) * thr_px
        cc_y = rng.uniform(0.4, 0.6) * h

        top = Point(tx, 0.0)
        chest = Point(0.0, ly)
        norm = math.hypot(tx, ly)
        nx, ny = ly / norm, tx / norm
        foot = Point(tx + t * (0.0 - tx), t * ly)
        nipple = Point(foot.x + d_mlo * nx, foot.y + d_mlo * ny)
        d_cc = d_mlo + delta
        margin = r + 8.0
        ok = (
            margin <= nipple.x <= w - 1 - margin
            and margin <= nipple.y <= h - 1 - margin
            and margin <= d_cc <= w - 1 - margin
            and not (tag[0].x - margin <= nipple.x <= tag[1].x + margin
                     and nipple.y <= tag[1].y + margin)
        )
        if ok:
            return dict(r=r, top=top, chest=chest, foot=foot, nipple=nipple,
                        d_mlo=d_mlo, d_cc=d_cc, cc_y=cc_y, tag=tag)
        if all(v is not None for v in (spec.pec_top_x, spec.pec_chest_y, spec.foot_fraction, spec.d_mlo)):
            break
    raise PhantomSpecError("infeasible phantom geometry for the requested parameters")


def generate_case(spec: PhantomSpec) -> PhantomCase:
    rng = np.random.default_rng(spec.seed)
    g = _sample_geometry(spec, rng)
    lat = spec.laterality or ("L" if rng.random() < 0.5 else "R")
    w, h = spec.width, spec.height
    dims = Bounds(w, h)
    xx, yy = _grid(w, h)
    nip = g["nipple"]
    r = g["r"]

    # MLO
    by = 1.15 * max(nip.y, h - nip.y)
    mlo = _tissue(xx, yy, 0.0, nip.y, max(nip.x, 1.0), by, rng, w, h)
    top, chest = g["top"], g["chest"]
    norm = math.hypot(top.x, chest.y)
    sd = ((xx - top.x) * chest.y + yy * top.x) / norm
    ap = np.clip(0.5 - sd, 0.0, 1.0)
    mlo = mlo * (1.0 - ap) + (_PEC + _texture(rng, w, h, 0.03)) * ap
    _paint_tag(mlo, xx, yy, g["tag"])
    mlo_img = _finish(mlo, rng, spec.noise, nip, r, xx, yy, spec.spacing, "MLO", "L")
    foot = g["foot"]
    pnl_end = foot if point_in_bounds(foot, dims) else clip_ray_to_bounds(nip, foot, dims)
    mlo_ann = ViewAnnotation(view="MLO", laterality="L", dims=dims,
                             pec=Segment(top, chest), pnl=Segment(nip, pnl_end), tag_box=g["tag"])

    # CC
    d_cc = g["d_cc"]
    cc_nip = Point(d_cc, g["cc_y"])
    cc_by = rng.uniform(0.38, 0.48) * h
    cc = _tissue(xx, yy, 0.0, cc_nip.y, d_cc, cc_by, rng, w, h)
    _paint_tag(cc, xx, yy, g["tag"])
    has_bb = spec.scenario != "BbMissing"
    cc_img = _finish(cc, rng, spec.noise, cc_nip if has_bb else None, r, xx, yy, spec.spacing, "CC", "L")
    cc_ann = ViewAnnotation(view="CC", laterality="L", dims=dims,
                            pnl=Segment(cc_nip, Point(0.0, cc_nip.y)), tag_box=g["tag"])

    if lat == "R":
        mlo_img, mlo_ann = hflip(mlo_img, mlo_ann)
        cc_img, cc_ann = hflip(cc_img, cc_ann)
        cc_nip = cc_ann.pnl.p0

    mlo_label, cc_label, conclusion = EXPECTED[spec.scenario]
    labels = {"mlo": mlo_label, "cc": cc_label, "conclusion": conclusion,
              "d_mlo": g["d_mlo"], "d_cc": d_cc}
    return PhantomCase(spec, mlo_img, mlo_ann, cc_img, cc_ann, r,
                       cc_nip if has_bb else None, labels)


def scenario_cycle(n: int, seed: int) -> list[PhantomSpec]:
    """``n`` specs cycling through every scenario with per-case seeds."""
    return [PhantomSpec(seed=seed * 100003 + i, scenario=SCENARIOS[i % len(SCENARIOS)])
            for i in range(n)]
