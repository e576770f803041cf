"""LabelMe-compatible annotation documents for MLO and CC views.

Shapes are identified by label: ``pec`` (line, MLO only), ``pnl`` (line) and
``tag`` (rectangle, the view-marker ROI). The first PNL point is the nipple.
View type and laterality are stored as extra top-level keys, which LabelMe
preserves on load/save.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

from .geometry import Bounds, GeometryError, Point, Segment, point_in_bounds

log = logging.getLogger(__name__)

LABELME_VERSION = "5.0.1"
VIEWS = ("MLO", "CC")
LATERALITIES = ("L", "R")
_SHAPE_TYPES = {"pec": "line", "pnl": "line", "tag": "rectangle"}


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class ViewAnnotation:
    view: str
    laterality: str
    dims: Bounds
    pnl: Segment
    pec: Optional[Segment] = None
    tag_box: Optional[tuple[Point, Point]] = None
    image_path: Optional[str] = None
    ignored_labels: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        validate(self)

    @property
    def nipple(self) -> Point:
        return self.pnl.p0

    def points(self) -> list[tuple[str, Point]]:
        pts = [("pnl", self.pnl.p0), ("pnl", self.pnl.p1)]
        if self.pec is not None:
            pts += [("pec", self.pec.p0), ("pec", self.pec.p1)]
        if self.tag_box is not None:
            pts += [("tag", self.tag_box[0]), ("tag", self.tag_box[1])]
        return pts


def validate(ann: ViewAnnotation) -> None:
    if ann.view not in VIEWS:
        raise AnnotationError(f"unknown view {ann.view!r}")
    if ann.laterality not in LATERALITIES:
        raise AnnotationError(f"unknown laterality {ann.laterality!r}")
    if ann.view == "CC" and ann.pec is not None:
        raise AnnotationError("pec: CC views must not carry a PEC line")
    if ann.view == "MLO" and ann.pec is None:
        raise AnnotationError("pec: missing on MLO view")
    for label, p in ann.points():
        if not point_in_bounds(p, ann.dims):
            raise AnnotationError(
                f"{label}: point ({p.x}, {p.y}) outside image {ann.dims.width}x{ann.dims.height}"
            )


def _points(shape: dict, label: str, n: int) -> list[Point]:
    pts = shape.get("points")
    if not isinstance(pts, list) or len(pts) != n:
        raise AnnotationError(f"{label}: expected exactly {n} points")
    try:
        return [Point(float(x), float(y)) for x, y in pts]
    except (TypeError, ValueError, GeometryError) as exc:
        raise AnnotationError(f"{label}: malformed points ({exc})") from exc


def parse_annotation(doc) -> ViewAnnotation:
    """Validate a LabelMe document (dict, JSON text or bytes)."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise AnnotationError(f"malformed document: {exc}") from exc
    if not isinstance(doc, dict):
        raise AnnotationError("malformed document: top level must be an object")
    try:
        dims = Bounds(int(doc["imageWidth"]), int(doc["imageHeight"]))
    except (KeyError, TypeError, ValueError, GeometryError) as exc:
        raise AnnotationError(f"malformed document: bad image dimensions ({exc})") from exc
    shapes = doc.get("shapes")
    if not isinstance(shapes, list):
        raise AnnotationError("malformed document: 'shapes' must be a list")

    found: dict[str, list[Point]] = {}
    ignored = []
    for shape in shapes:
        if not isinstance(shape, dict):
            raise AnnotationError("malformed document: shape entries must be objects")
        label = shape.get("label")
        if label not in _SHAPE_TYPES:
            ignored.append(str(label))
            continue
        if label in found:
            raise AnnotationError(f"{label}: duplicated shape")
        stype = shape.get("shape_type", _SHAPE_TYPES[label])
        if stype != _SHAPE_TYPES[label]:
            raise AnnotationError(f"{label}: expected shape_type {_SHAPE_TYPES[label]!r}, got {stype!r}")
        found[label] = _points(shape, label, 2)
    if ignored:
        log.warning("ignored %d shape(s) with unknown labels: %s", len(ignored), ", ".join(ignored))

    view = doc.get("view")
    if view is None:
        view = "MLO" if "pec" in found else "CC"
    laterality = doc.get("laterality")
    if laterality is None:
        raise AnnotationError("malformed document: missing 'laterality'")
    if "pnl" not in found:
        raise AnnotationError("pnl: missing")

    def seg(label):
        if label not in found:
            return None
        try:
            return Segment(*found[label])
        except GeometryError as exc:
            raise AnnotationError(f"{label}: {exc}") from exc

    tag = tuple(found["tag"]) if "tag" in found else None
    return ViewAnnotation(
        view=view,
        laterality=laterality,
        dims=dims,
        pnl=seg("pnl"),
        pec=seg("pec"),
        tag_box=tag,
        image_path=doc.get("imagePath") or None,
        ignored_labels=tuple(ignored),
    )


def _shape(label: str, pts) -> dict:
    return {
        "label": label,
        "points": [[p.x, p.y] for p in pts],
        "group_id": None,
        "shape_type": _SHAPE_TYPES[label],
        "flags": {},
    }


def to_document(ann: ViewAnnotation) -> dict:
    shapes = []
    if ann.pec is not None:
        shapes.append(_shape("pec", (ann.pec.p0, ann.pec.p1)))
    shapes.append(_shape("pnl", (ann.pnl.p0, ann.pnl.p1)))
    if ann.tag_box is not None:
        shapes.append(_shape("tag", ann.tag_box))
    doc = {
        "version": LABELME_VERSION,
        "flags": {},
        "shapes": shapes,
        "view": ann.view,
        "laterality": ann.laterality,
        "imageData": None,
        "imageHeight": ann.dims.height,
        "imageWidth": ann.dims.width,
    }
    if ann.image_path:
        doc["imagePath"] = ann.image_path
    return doc


def serialize_annotation(ann: ViewAnnotation) -> str:
    return json.dumps(to_document(ann), indent=2, sort_keys=True) + "\n"


def load_annotation(path) -> ViewAnnotation:
    with open(path, "rb") as fh:
        return parse_annotation(fh.read())


def save_annotation(ann: ViewAnnotation, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_annotation(ann))
