"""Plain-text technologist report and its JSON sidecar.

Grammar (one item per line, breasts in L, R order)::

    Report for Subject <id>
    Thresholds and parameters
    Threshold for perpendicular distance from BB in pixels: <t>
    Threshold for PNL length difference in <unit>: <t>
    <Left|Right> Breast
    -----
    MLO Lengths
    -----
    FILENAME | PNL length | Distance from BB | Intersection
    <name> | <d_mlo|-> | <dist|-> | <inside|outside|parallel>
    CC Lengths
    -----
    FILENAME | PNL length
    <name> | <d_cc|-> [| <note>]
    <===== Decision =====>
    MAX FILENAME (MLO) <name> <d_mlo>      or  No correct MLO recorded
    MAX FILENAME (CC) <name> <d_cc>        or  No correct CC recorded
    [Decision based on the following file
     MLO <name>
     CC <name>
     Difference in PNL lengths is <d_diff> <unit>]
    Decision: <...>                        or  No conclusion can be made
    [Note: <text>]...
    =====

Numbers use the shortest decimal that round-trips (``repr``), with
integral values printed without a trailing ``.0``.
"""

from __future__ import annotations

import json
from typing import Optional

from .decision import (CC_INADEQUATE, CORRECT, MLO_INADEQUATE, NO_CONCLUSION,
                       BreastDecision, CcAssessment, CcRow, DecisionConfig, MloAssessment,
                       MloRow, StudyDecision)
from .geometry import Point

SIDECAR_VERSION = 1

_DECISION_LINES = {
    CORRECT: "Decision: Correctly Positioned",
    CC_INADEQUATE: "Decision: CC Inadequately Positioned",
    MLO_INADEQUATE: "Decision: MLO Inadequately Positioned",
    NO_CONCLUSION: "No conclusion can be made",
}


def fmt(v: Optional[float]) -> str:
    if v is None:
        return "-"
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _intersection_status(a: MloAssessment) -> str:
    if a.intersection is None:
        return "parallel"
    return "inside" if a.in_bounds else "outside"


def _render_breast(b: BreastDecision, cfg: DecisionConfig) -> list[str]:
    side = "Left" if b.laterality == "L" else "Right"
    out = [f"{side} Breast", "-----", "MLO Lengths", "-----",
           "FILENAME | PNL length | Distance from BB | Intersection"]
    for r in b.mlo_rows:
        a = r.assessment
        out.append(f"{r.name} | {fmt(a.d_mlo)} | {fmt(a.bb_distance)} | {_intersection_status(a)}")
    out += ["CC Lengths", "-----", "FILENAME | PNL length"]
    for r in b.cc_rows:
        line = f"{r.name} | {fmt(r.d_cc)}"
        if r.note:
            line += f" | {r.note}"
        out.append(line)
    out.append("<===== Decision =====>")
    if b.chosen_mlo is not None:
        r = b.mlo_rows[b.chosen_mlo]
        out.append(f"MAX FILENAME (MLO) {r.name} {fmt(r.assessment.d_mlo)}")
    else:
        out.append("No correct MLO recorded")
    if b.chosen_cc is not None:
        r = b.cc_rows[b.chosen_cc]
        out.append(f"MAX FILENAME (CC) {r.name} {fmt(r.d_cc)}")
    else:
        out.append("No correct CC recorded")
    if b.pair is not None and b.pair.d_diff is not None:
        out += ["Decision based on the following file",
                f"MLO {b.mlo_rows[b.chosen_mlo].name}",
                f"CC {b.cc_rows[b.chosen_cc].name}",
                f"Difference in PNL lengths is {fmt(b.pair.d_diff)} {cfg.unit}"]
    out.append(_DECISION_LINES[b.conclusion])
    out += [f"Note: {n}" for n in b.notes]
    out.append("=====")
    return out


def render_report(study: StudyDecision) -> str:
    if not study.breasts:
        raise ValueError("nothing to report")
    cfg = study.config
    lines = [
        f"Report for Subject {study.subject}",
        "Thresholds and parameters",
        f"Threshold for perpendicular distance from BB in pixels: {fmt(cfg.bb_distance_threshold)}",
        f"Threshold for PNL length difference in {cfg.unit}: {fmt(cfg.diff_threshold)}",
    ]
    for b in study.breasts:
        lines += _render_breast(b, cfg)
    return "\n".join(lines) + "\n"


# -- sidecar -----------------------------------------------------------------------

def _pt(p: Optional[Point]):
    return None if p is None else [p.x, p.y]


def study_to_dict(study: StudyDecision) -> dict:
    cfg = study.config
    breasts = []
    for b in study.breasts:
        breasts.append({
            "laterality": b.laterality,
            "mlo": [{"name": r.name,
                     "intersection": _pt(r.assessment.intersection),
                     "in_bounds": r.assessment.in_bounds,
                     "d_mlo": r.assessment.d_mlo,
                     "bb_distance": r.assessment.bb_distance,
                     "verdict": r.assessment.verdict,
                     "bb_ok": r.bb_ok} for r in b.mlo_rows],
            "cc": [{"name": r.name, "d_cc": r.d_cc, "note": r.note} for r in b.cc_rows],
            "chosen_mlo": b.chosen_mlo,
            "chosen_cc": b.chosen_cc,
            "pair": None if b.pair is None else {
                "d_cc": b.pair.d_cc, "d_diff": b.pair.d_diff,
                "verdict": b.pair.verdict, "diagnostic": b.pair.diagnostic},
            "mlo_verdict": b.mlo_verdict,
            "cc_verdict": b.cc_verdict,
            "conclusion": b.conclusion,
            "notes": list(b.notes),
        })
    return {
        "format": "mammopos-report",
        "version": SIDECAR_VERSION,
        "subject": study.subject,
        "config": {"diff_threshold": cfg.diff_threshold, "unit_mode": cfg.unit_mode,
                   "bb_distance_threshold": cfg.bb_distance_threshold},
        "breasts": breasts,
    }


def study_from_dict(d: dict) -> StudyDecision:
    if d.get("format") != "mammopos-report" or d.get("version") != SIDECAR_VERSION:
        raise ValueError("not a mammopos report sidecar (or unsupported version)")
    cfg = DecisionConfig(**d["config"])
    breasts = []
    for b in d["breasts"]:
        mlo_rows = tuple(
            MloRow(m["name"],
                   MloAssessment(None if m["intersection"] is None else Point(*m["intersection"]),
                                 m["in_bounds"], m["d_mlo"], m["verdict"], m["bb_distance"]),
                   m["bb_ok"])
            for m in b["mlo"])
        cc_rows = tuple(CcRow(c["name"], c["d_cc"], c["note"]) for c in b["cc"])
        p = b["pair"]
        pair = None if p is None else CcAssessment(p["d_cc"], p["d_diff"], p["verdict"], p["diagnostic"])
        breasts.append(BreastDecision(b["laterality"], mlo_rows, cc_rows, b["chosen_mlo"],
                                      b["chosen_cc"], pair, b["mlo_verdict"], b["cc_verdict"],
                                      b["conclusion"], tuple(b["notes"])))
    return StudyDecision(d["subject"], cfg, tuple(breasts))


def dumps_sidecar(study: StudyDecision) -> str:
    return json.dumps(study_to_dict(study), indent=2, sort_keys=True) + "\n"


def loads_sidecar(text: str) -> StudyDecision:
    return study_from_dict(json.loads(text))
