"""Positioning rules for one breast.

MLO: the extended PEC line and PNL must cross inside the image; the PNL
length d_mlo runs from the nipple to that crossing. CC: the horizontal PNL
from the BB to the chest wall gives d_cc, and the view passes when
|d_cc - d_mlo| is under the threshold (1 cm by default).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .bbdetect import BbPlacementError, Circle, cc_pnl
from .geometry import (Bounds, Point, Segment, distance, line_intersection,
                       perpendicular_distance, point_in_bounds)

ADEQUATE = "Adequate"
INADEQUATE = "Inadequate"
INDETERMINATE = "Indeterminate"

CORRECT = "CorrectlyPositioned"
CC_INADEQUATE = "CcInadequate"
MLO_INADEQUATE = "MloInadequate"
NO_CONCLUSION = "NoConclusion"

UNIT_MODES = ("physical", "pixel")


@dataclass(frozen=True)
class DecisionConfig:
    diff_threshold: float = 10.0  # mm in physical mode, px in pixel mode
    unit_mode: str = "physical"
    bb_distance_threshold: float = 50.0  # px

    def __post_init__(self):
        if self.unit_mode not in UNIT_MODES:
            raise ValueError(f"unit_mode must be one of {UNIT_MODES}, got {self.unit_mode!r}")
        if not (self.diff_threshold > 0 and self.bb_distance_threshold > 0):
            raise ValueError("thresholds must be positive")

    @property
    def unit(self) -> str:
        return "mm" if self.unit_mode == "physical" else "px"


@dataclass(frozen=True)
class MloAssessment:
    intersection: Optional[Point]
    in_bounds: bool
    d_mlo: Optional[float]
    verdict: str
    bb_distance: Optional[float] = None


@dataclass(frozen=True)
class CcAssessment:
    d_cc: Optional[float]
    d_diff: Optional[float]
    verdict: str
    diagnostic: Optional[str] = None


def assess_mlo(pec: Segment, pnl: Segment, dims: Bounds) -> MloAssessment:
    """Intersection rule; ``pnl.p0`` is taken as the nipple."""
    x = line_intersection(pec, pnl)
    if x is None:
        return MloAssessment(None, False, None, INADEQUATE)
    if not point_in_bounds(x, dims):
        return MloAssessment(x, False, None, INADEQUATE)
    return MloAssessment(x, True, distance(pnl.p0, x), ADEQUATE)


def check_bb_distance(pnl: Segment, bb: Optional[Circle], cfg: DecisionConfig) -> tuple[Optional[float], bool]:
    if bb is None:
        return None, True
    d = perpendicular_distance(bb.center, pnl)
    return d, d < cfg.bb_distance_threshold


def assess_pair(d_mlo: float, d_cc: float, spacing: Optional[float], cfg: DecisionConfig) -> CcAssessment:
    diff = abs(d_cc - d_mlo)
    if cfg.unit_mode == "physical":
        if spacing is None:
            return CcAssessment(d_cc, None, INDETERMINATE,
                                "pixel spacing unknown; cannot apply a physical threshold")
        diff = diff * spacing
    verdict = ADEQUATE if diff < cfg.diff_threshold else INADEQUATE
    return CcAssessment(d_cc, diff, verdict)


def _argmax(values: Sequence[Optional[float]]) -> Optional[int]:
    best = None
    for i, v in enumerate(values):
        if v is None:
            continue
        if best is None or v > values[best]:
            best = i
    return best


def select_views(mlos: Sequence[MloAssessment], cc_lengths: Sequence[Optional[float]]
                 ) -> tuple[Optional[int], Optional[int]]:
    """Longest-PNL adequate MLO and longest-PNL CC with a detected BB.
    Ties go to the lowest index."""
    mlo_lengths = [m.d_mlo if m.verdict == ADEQUATE else None for m in mlos]
    return _argmax(mlo_lengths), _argmax(list(cc_lengths))


# -- per-breast composition ------------------------------------------------------

@dataclass(frozen=True)
class MloView:
    name: str
    pec: Segment
    pnl: Segment
    dims: Bounds
    spacing: Optional[float] = None
    bb: Optional[Circle] = None


@dataclass(frozen=True)
class CcView:
    name: str
    dims: Bounds
    bb: Optional[Circle]
    chest_wall: str
    spacing: Optional[float] = None


@dataclass(frozen=True)
class MloRow:
    name: str
    assessment: MloAssessment
    bb_ok: bool = True


@dataclass(frozen=True)
class CcRow:
    name: str
    d_cc: Optional[float]
    note: Optional[str] = None


@dataclass(frozen=True)
class BreastDecision:
    laterality: str
    mlo_rows: tuple[MloRow, ...]
    cc_rows: tuple[CcRow, ...]
    chosen_mlo: Optional[int]
    chosen_cc: Optional[int]
    pair: Optional[CcAssessment]
    mlo_verdict: str
    cc_verdict: str
    conclusion: str
    notes: tuple[str, ...] = field(default=())


def decide_breast(laterality: str, mlos: Sequence[MloView], ccs: Sequence[CcView],
                  cfg: DecisionConfig = DecisionConfig()) -> BreastDecision:
    notes = []
    mlo_rows = []
    for v in mlos:
        a = assess_mlo(v.pec, v.pnl, v.dims)
        dist, ok = check_bb_distance(v.pnl, v.bb, cfg)
        a = MloAssessment(a.intersection, a.in_bounds, a.d_mlo, a.verdict, dist)
        mlo_rows.append(MloRow(v.name, a, ok))
        if not ok:
            notes.append(f"BB distance {dist!r} px on {v.name} exceeds {cfg.bb_distance_threshold!r}; "
                         "predicted PNL may be wrong")
    cc_rows = []
    for v in ccs:
        if v.bb is None:
            cc_rows.append(CcRow(v.name, None, "BB not detected"))
            continue
        try:
            cc_rows.append(CcRow(v.name, cc_pnl(v.dims, v.bb, v.chest_wall).length))
        except BbPlacementError as exc:
            cc_rows.append(CcRow(v.name, None, str(exc)))

    assessments = [r.assessment for r in mlo_rows]
    i_mlo, i_cc = select_views(assessments, [r.d_cc for r in cc_rows])
    if not mlos:
        mlo_verdict = INDETERMINATE
    else:
        mlo_verdict = ADEQUATE if i_mlo is not None else INADEQUATE

    pair = None
    if not mlos:
        cc_verdict, conclusion = INDETERMINATE, NO_CONCLUSION
        notes.append("no MLO view recorded")
    elif i_cc is None:
        cc_verdict, conclusion = INDETERMINATE, NO_CONCLUSION
    elif i_mlo is None:
        cc_verdict, conclusion = INDETERMINATE, MLO_INADEQUATE
    else:
        mv, cv = mlos[i_mlo], ccs[i_cc]
        d_mlo = assessments[i_mlo].d_mlo
        d_cc = cc_rows[i_cc].d_cc
        spacing = mv.spacing
        if (cfg.unit_mode == "physical" and spacing is not None and cv.spacing is not None
                and not math.isclose(spacing, cv.spacing, rel_tol=1e-12)):
            d_cc = d_cc * cv.spacing / spacing
            notes.append(f"CC length converted from {cv.spacing!r} to {spacing!r} mm/px")
        elif spacing is None:
            spacing = cv.spacing
        pair = assess_pair(d_mlo, d_cc, spacing, cfg)
        cc_verdict = pair.verdict
        if pair.verdict == ADEQUATE:
            conclusion = CORRECT
        elif pair.verdict == INADEQUATE:
            conclusion = CC_INADEQUATE
        else:
            conclusion = NO_CONCLUSION
            notes.append(pair.diagnostic)
    return BreastDecision(laterality, tuple(mlo_rows), tuple(cc_rows), i_mlo, i_cc, pair,
                          mlo_verdict, cc_verdict, conclusion, tuple(notes))


@dataclass(frozen=True)
class StudyDecision:
    subject: str
    config: DecisionConfig
    breasts: tuple[BreastDecision, ...]


def decide_study(subject: str, views: dict, cfg: DecisionConfig = DecisionConfig()) -> StudyDecision:
    """``views`` maps laterality to ``(mlo_views, cc_views)``."""
    breasts = []
    for lat in ("L", "R"):
        mlos, ccs = views.get(lat, ((), ()))
        if mlos or ccs:
            breasts.append(decide_breast(lat, mlos, ccs, cfg))
    if not breasts:
        raise ValueError(f"study {subject!r} has no recognisable views")
    return StudyDecision(subject, cfg, tuple(breasts))
