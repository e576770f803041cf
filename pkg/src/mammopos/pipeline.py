"""Study directories in, decisions out.

A study is one directory per subject. View identity comes from the file
name (``..._LMLO...``, ``..._RCC_2...``) unless the image's ``.meta`` sidecar
sets ``view`` / ``laterality``. MLO line endpoints come either from the
view's annotation file (passthrough) or from a trained regressor.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .annotations import load_annotation, save_annotation
from .bbdetect import BbParams, chest_wall_side, detect_bb
from .decision import CcView, DecisionConfig, MloView, StudyDecision, decide_study
from .imaging import GrayImage, load_image, normalize, read_sidecar, save_image, sidecar_path
from .phantom import PhantomCase, PhantomSpec, generate_case
from .predictor import RegressorModel, passthrough_predictor, predict_native

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".pgm")
ANNOTATION_SUFFIX = ".json"
MANIFEST_NAME = "manifest.csv"
TRAIN_MANIFEST_NAME = "train_manifest.txt"
MANIFEST_FIELDS = ("subject", "scenario", "laterality", "seed", "mlo", "cc", "conclusion",
                   "d_mlo", "d_cc", "bb_radius", "bb_x", "bb_y")

_VIEW_RE = re.compile(r"(?:^|[_\-. ])(L|R)[_\-]?(MLO|CC)(?=$|[_\-. ])", re.IGNORECASE)


class StudyError(ValueError):
    pass


@dataclass(frozen=True)
class ViewFile:
    path: Path
    view: str
    laterality: str

    @property
    def name(self) -> str:
        return self.path.stem


def classify(path: Path, meta: dict) -> Optional[tuple[str, str]]:
    """(view, laterality) from sidecar keys, else from the file name."""
    view = meta.get("view")
    lat = meta.get("laterality")
    m = _VIEW_RE.search(path.stem)
    if m:
        lat = lat or m.group(1).upper()
        view = view or m.group(2).upper()
    if view in ("MLO", "CC") and lat in ("L", "R"):
        return view, lat
    return None


def discover(study_dir) -> list[ViewFile]:
    d = Path(study_dir)
    if not d.is_dir():
        raise StudyError(f"{d}: not a directory")
    views = []
    for p in sorted(d.iterdir()):
        if p.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        side = sidecar_path(p)
        meta = read_sidecar(side) if side.exists() else {}
        vl = classify(p, meta)
        if vl is None:
            log.warning("%s: cannot tell view/laterality; skipped", p.name)
            continue
        views.append(ViewFile(p, *vl))
    if not views:
        raise StudyError(f"{d}: no recognisable MLO/CC views")
    return views


@dataclass(frozen=True)
class AssessConfig:
    decision: DecisionConfig = field(default_factory=DecisionConfig)
    bb: BbParams = field(default_factory=BbParams)
    chest_wall_mode: str = "auto"


def _mlo_lines(vf: ViewFile, img: GrayImage, model: Optional[RegressorModel]):
    if model is None:
        ann_path = vf.path.with_suffix(ANNOTATION_SUFFIX)
        if not ann_path.exists():
            raise StudyError(f"{vf.path.name}: passthrough mode needs {ann_path.name}")
        ann = load_annotation(ann_path)
        if ann.dims != img.bounds:
            raise StudyError(f"{ann_path.name}: annotation is for {ann.dims.width}x{ann.dims.height}, "
                             f"image is {img.width}x{img.height}")
        ev = passthrough_predictor(ann)
    else:
        ev = predict_native(model, img)
    return ev.pec, ev.pnl


def assess_study(study_dir, model: Optional[RegressorModel] = None,
                 cfg: AssessConfig = AssessConfig(), subject: Optional[str] = None) -> StudyDecision:
    """Run the positioning rules on every breast in a study directory.

    ``model=None`` means passthrough: MLO lines are read from annotations.
    """
    study_dir = Path(study_dir)
    views: dict = {"L": ([], []), "R": ([], [])}
    for vf in discover(study_dir):
        img = load_image(vf.path)
        norm = normalize(img)
        bb = detect_bb(norm, cfg.bb)
        if vf.view == "MLO":
            pec, pnl = _mlo_lines(vf, img, model)
            views[vf.laterality][0].append(MloView(vf.name, pec, pnl, img.bounds, img.spacing, bb))
        else:
            side = chest_wall_side(norm, vf.laterality, cfg.chest_wall_mode)
            views[vf.laterality][1].append(CcView(vf.name, img.bounds, bb, side, img.spacing))
    views = {k: (tuple(m), tuple(c)) for k, (m, c) in views.items()}
    return decide_study(subject or study_dir.name, views, cfg.decision)


# -- phantom datasets --------------------------------------------------------------

def subject_name(i: int) -> str:
    return f"Mammo_{i:04d}"


def write_case(case: PhantomCase, root, subject: str, image_format: str = "pgm") -> dict:
    """Write both views of a phantom case into ``root/subject`` and return its manifest row."""
    d = Path(root) / subject
    d.mkdir(parents=True, exist_ok=True)
    lat = case.mlo_annotation.laterality
    for view, img, ann in (("MLO", case.mlo_image, case.mlo_annotation),
                           ("CC", case.cc_image, case.cc_annotation)):
        stem = f"{subject}_{lat}{view}"
        img_path = d / f"{stem}.{image_format}"
        save_image(img, img_path)
        save_annotation(replace(ann, image_path=img_path.name), d / f"{stem}.json")
    bb = case.cc_bb_center
    return {
        "subject": subject, "scenario": case.spec.scenario, "laterality": lat,
        "seed": case.spec.seed, "mlo": case.labels["mlo"], "cc": case.labels["cc"],
        "conclusion": case.labels["conclusion"], "d_mlo": repr(case.labels["d_mlo"]),
        "d_cc": repr(case.labels["d_cc"]), "bb_radius": repr(case.bb_radius),
        "bb_x": "" if bb is None else repr(bb.x), "bb_y": "" if bb is None else repr(bb.y),
    }


def generate_dataset(specs: list[PhantomSpec], root, image_format: str = "pgm") -> list[dict]:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rows = [write_case(generate_case(s), root, subject_name(i), image_format)
            for i, s in enumerate(specs)]
    write_manifest(rows, root / MANIFEST_NAME)
    write_train_manifest(rows, root / TRAIN_MANIFEST_NAME, image_format)
    return rows


def write_manifest(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=MANIFEST_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def read_manifest(path) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    missing = set(MANIFEST_FIELDS) - set(rows[0].keys() if rows else MANIFEST_FIELDS)
    if missing:
        raise StudyError(f"{path}: manifest lacks columns {sorted(missing)}")
    return rows


def write_train_manifest(rows: list[dict], path, image_format: str = "pgm") -> None:
    """List the MLO (image, annotation) pairs of generated cases, tab separated,
    with paths relative to the manifest's directory."""
    lines = ["# image\tannotation"]
    for r in rows:
        stem = f"{r['subject']}/{r['subject']}_{r['laterality']}MLO"
        lines.append(f"{stem}.{image_format}\t{stem}.json")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_train_manifest(path) -> list[tuple[Path, Path]]:
    """(image, annotation) paths from a training manifest.

    One pair per line separated by a tab, comma or whitespace; blank lines
    and ``#`` comments are skipped; relative paths resolve against the
    manifest's directory.
    """
    path = Path(path)
    base = path.parent
    pairs = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        sep = "\t" if "\t" in line else ("," if "," in line else None)
        parts = [x.strip() for x in line.split(sep)]
        if len(parts) != 2:
            raise StudyError(f"{path}:{n}: expected 'image annotation', got {line!r}")
        pairs.append(tuple(base / part for part in parts))
    return pairs


def subject_dirs(root) -> list[Path]:
    root = Path(root)
    return sorted(p for p in root.iterdir() if p.is_dir())


def training_pairs(root, adequate_only: bool = False) -> list:
    """(image, annotation) for every annotated MLO below ``root``.

    ``root`` may also be a training manifest file listing the pairs.
    """
    root = Path(root)
    if root.is_file():
        if adequate_only:
            raise StudyError("adequate-only selection needs a dataset directory, not a manifest")
        out = []
        for img_path, ann_path in read_train_manifest(root):
            ann = load_annotation(ann_path)
            if ann.view != "MLO":
                raise StudyError(f"{ann_path}: training needs MLO annotations, got {ann.view}")
            out.append((load_image(img_path), ann))
        return out
    keep = None
    if adequate_only:
        man = root / MANIFEST_NAME
        if not man.exists():
            raise StudyError(f"{root}: adequate-only training needs {MANIFEST_NAME}")
        keep = {r["subject"] for r in read_manifest(man) if r["mlo"] == "Adequate"}
    pairs = []
    for sd in subject_dirs(root):
        if keep is not None and sd.name not in keep:
            continue
        for vf in discover(sd):
            ann_path = vf.path.with_suffix(ANNOTATION_SUFFIX)
            if vf.view != "MLO" or not ann_path.exists():
                continue
            pairs.append((load_image(vf.path), load_annotation(ann_path)))
    return pairs
