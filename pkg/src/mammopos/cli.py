"""Command-line entry point.

Subcommands: gen-phantoms, train, assess, eval, report. Settings resolve as
command-line flag > ``--config`` file > built-in default. Config files are
JSON objects or ``key = value`` lines using the flag names with dashes
replaced by underscores.
"""

from __future__ import annotations

import argparse
import functools
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

log = logging.getLogger("mammopos")

# every tunable flag with its default; ``None`` means "no default"
DEFAULTS = {
    # gen-phantoms
    "n": 200, "seed": 0, "width": 512, "height": 512, "format": "pgm", "noise": 0.01,
    # train
    "epochs": 150, "batch_size": 12, "learning_rate": 1e-4, "validation_fraction": 0.2,
    "augment": True, "adequate_only": False, "head": "softargmax",
    # assess
    "predictor": "passthrough", "checkpoint": None, "jobs": 1,
    "diff_threshold": 10.0, "unit_mode": "physical", "bb_distance_threshold": 50.0,
    "r_min": 10, "r_max": 20, "edge_gradient_threshold": 0.2, "accumulator_peak_threshold": 120.0,
    "uniformity_tolerance": 1e-3, "chest_wall": "auto",
    # eval
    "bb_tolerance": 3.0, "bin_width": 1.0,
}
_BOOL_KEYS = {"augment", "adequate_only"}


class ConfigError(ValueError):
    pass


def _coerce(key: str, value):
    default = DEFAULTS[key]
    if key in _BOOL_KEYS:
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if default is None or isinstance(default, str):
        return str(value)
    try:
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"{key}: must be finite")
    return v


def load_config(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{p}: {exc.strerror or exc}") from exc
    if text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    else:
        raw = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{p}:{n}: expected 'key = value'")
            k, v = line.split("=", 1)
            raw[k.strip()] = v.strip()
    out = {}
    for k, v in raw.items():
        key = k.replace("-", "_")
        if key not in DEFAULTS:
            raise ConfigError(f"{p}: unknown setting {k!r}")
        out[key] = _coerce(key, v)
    return out


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over config over defaults."""
    cfg = load_config(args.config) if args.config else {}
    merged = dict(DEFAULTS)
    merged.update(cfg)
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None:
            merged[k] = v
    return merged


# -- subcommands -------------------------------------------------------------------

def _decision_config(s):
    from .decision import DecisionConfig
    return DecisionConfig(s["diff_threshold"], s["unit_mode"], s["bb_distance_threshold"])


def _bb_params(s):
    from .bbdetect import BbParams
    return BbParams(int(s["r_min"]), int(s["r_max"]), s["edge_gradient_threshold"],
                    s["accumulator_peak_threshold"], None, s["uniformity_tolerance"])


def cmd_gen_phantoms(args, s) -> int:
    from .phantom import SCENARIOS, PhantomSpec, generate_case
    from .pipeline import (MANIFEST_NAME, TRAIN_MANIFEST_NAME, subject_name, write_case, write_manifest,
                           write_train_manifest)
    scenarios = args.scenario or list(SCENARIOS)
    for sc in scenarios:
        if sc not in SCENARIOS:
            raise ConfigError(f"unknown scenario {sc!r}; choose from {', '.join(SCENARIOS)}")
    if s["format"] not in ("png", "pgm"):
        raise ConfigError("format must be png or pgm")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(int(s["n"])):
        spec = PhantomSpec(seed=int(s["seed"]) * 100003 + i, width=int(s["width"]),
                           height=int(s["height"]), noise=s["noise"],
                           scenario=scenarios[i % len(scenarios)])
        rows.append(write_case(generate_case(spec), out, subject_name(i), s["format"]))
    write_manifest(rows, out / MANIFEST_NAME)
    write_train_manifest(rows, out / TRAIN_MANIFEST_NAME, s["format"])
    print(f"wrote {len(rows)} cases to {out}")
    return 0


def cmd_train(args, s) -> int:
    from .predictor import Architecture, TrainConfig, save_checkpoint, train, write_history
    from .pipeline import training_pairs
    pairs = training_pairs(args.data, adequate_only=s["adequate_only"])
    if not pairs:
        raise ConfigError(f"{args.data}: no annotated MLO views to train on")
    cfg = TrainConfig(batch_size=int(s["batch_size"]), learning_rate=s["learning_rate"],
                      epochs=int(s["epochs"]), seed=int(s["seed"]),
                      validation_fraction=s["validation_fraction"], augment=s["augment"],
                      arch=Architecture(head=s["head"]))

    def progress(r):
        print(f"epoch {r.epoch}: train {r.train_loss:.6g} val {r.val_loss} err {r.val_endpoint_error}",
              flush=True)

    model, history = train(pairs, cfg, progress=progress)
    ckpt = Path(args.checkpoint)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, ckpt)
    hist = Path(args.history) if args.history else ckpt.with_name(ckpt.stem + "_history.csv")
    write_history(history, hist)
    print(f"checkpoint {ckpt}, history {hist}")
    return 0


def _study_dirs(root: Path) -> list[Path]:
    from .pipeline import IMAGE_SUFFIXES
    if not root.is_dir():
        raise ConfigError(f"{root}: not a directory")
    if any(p.suffix.lower() in IMAGE_SUFFIXES for p in root.iterdir()):
        return [root]
    return sorted(p for p in root.iterdir() if p.is_dir())


@functools.lru_cache(maxsize=4)
def _cached_model(path: str):
    from .predictor import load_checkpoint
    return load_checkpoint(path)


def _assess_one(job):
    study, out, checkpoint, acfg = job
    from .pipeline import assess_study
    from .report import dumps_sidecar, render_report
    model = _cached_model(str(checkpoint)) if checkpoint else None
    decision = assess_study(study, model, acfg)
    (out / f"{decision.subject}.txt").write_text(render_report(decision), encoding="utf-8")
    (out / f"{decision.subject}.json").write_text(dumps_sidecar(decision), encoding="utf-8")
    return decision.subject


def cmd_assess(args, s) -> int:
    from .pipeline import AssessConfig
    if s["predictor"] not in ("passthrough", "trained"):
        raise ConfigError("predictor must be passthrough or trained")
    checkpoint = None
    if s["predictor"] == "trained":
        if not s["checkpoint"]:
            raise ConfigError("trained predictor needs --checkpoint")
        checkpoint = Path(s["checkpoint"])
        if not checkpoint.is_file():
            raise ConfigError(f"{checkpoint}: checkpoint not found")
    acfg = AssessConfig(_decision_config(s), _bb_params(s), s["chest_wall"])
    studies = _study_dirs(Path(args.study))
    if not studies:
        raise ConfigError(f"{args.study}: no study directories")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(st, out, checkpoint, acfg) for st in studies]
    if int(s["jobs"]) > 1:
        with ProcessPoolExecutor(int(s["jobs"])) as ex:
            done = list(ex.map(_assess_one, jobs))
    else:
        done = [_assess_one(j) for j in jobs]
    print(f"assessed {len(done)} studies into {out}")
    return 0


def cmd_eval(args, s) -> int:
    from .evaluation import (confusion, detection_rate, endpoint_errors, percent,
                             write_histogram_csv, write_metrics, write_metrics_csv)
    from .pipeline import MANIFEST_NAME, read_manifest
    from .report import loads_sidecar
    data = Path(args.data)
    manifest = data / MANIFEST_NAME
    if not manifest.is_file():
        raise ConfigError(f"{manifest}: manifest not found")
    rows = read_manifest(manifest)
    reports = Path(args.reports)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    mlo_pred, mlo_true, cc_pred, cc_true = [], [], [], []
    agree = 0
    bb_total = bb_hit = 0
    lines = ["subject,scenario,expected,got,match"]
    for r in rows:
        side = reports / f"{r['subject']}.json"
        if not side.is_file():
            raise ConfigError(f"{side}: report sidecar missing")
        study = loads_sidecar(side.read_text(encoding="utf-8"))
        b = next((b for b in study.breasts if b.laterality == r["laterality"]), None)
        if b is None:
            raise ConfigError(f"{side}: no {r['laterality']} breast in report")
        mlo_pred.append(b.mlo_verdict)
        mlo_true.append(r["mlo"])
        cc_pred.append(b.cc_verdict)
        cc_true.append(r["cc"])
        got = (b.mlo_verdict, b.cc_verdict, b.conclusion)
        want = (r["mlo"], r["cc"], r["conclusion"])
        agree += got == want
        lines.append(f"{r['subject']},{r['scenario']},{'/'.join(want)},{'/'.join(got)},{int(got == want)}")
        if r["bb_x"]:
            bb_total += 1
            d_cc = [c.d_cc for c in b.cc_rows if c.d_cc is not None]
            bb_hit += any(abs(d - float(r["d_cc"])) <= s["bb_tolerance"] for d in d_cc)
    (out / "agreement.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    matrices = {"MLO": confusion(mlo_pred, mlo_true), "CC": confusion(cc_pred, cc_true)}
    rates = {"scenario agreement": (agree, len(rows))}
    if bb_total:
        rates["BB detection"] = (bb_hit, bb_total)
    extra = {}
    if s["checkpoint"]:
        from .predictor import forward, load_checkpoint, target_vector, to_input_frame
        from .pipeline import training_pairs
        model = load_checkpoint(s["checkpoint"])
        size = model.arch.input_size
        preds, truths = [], []
        for img, ann in training_pairs(data):
            small, a = to_input_frame(img, ann, size)
            preds.append(forward(model, small))
            truths.append(target_vector(a))
        res = endpoint_errors(preds, truths)
        write_histogram_csv(res, out / "endpoint_error_hist.csv", s["bin_width"])
        ov = res.overall()
        extra = {"endpoint error mean px": repr(ov.mean), "endpoint error median px": repr(ov.median)}
    write_metrics(out / "metrics.txt", matrices, rates, extra)
    write_metrics_csv(out / "metrics.csv", matrices)
    print(f"scenario agreement {agree}/{len(rows)} = {percent(detection_rate(agree, len(rows))):.2f}%")
    return 0


def cmd_report(args, s) -> int:
    from .report import loads_sidecar, render_report
    p = Path(args.sidecar)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{p}: {exc.strerror or exc}") from exc
    try:
        study = loads_sidecar(text)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{p}: malformed report sidecar ({exc})") from exc
    rendered = render_report(study)
    if args.out:
        Path(args.out).write_text(rendered, encoding="utf-8")
    else:
        sys.stdout.write(rendered)
    return 0


# -- argument parsing --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mammopos", description="Mammogram positioning checks.")
    ap.add_argument("--config", help="JSON or key = value settings file")
    ap.add_argument("--log-level", default="WARNING")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-phantoms", help="write a labelled phantom dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--width", type=int)
    g.add_argument("--height", type=int)
    g.add_argument("--noise", type=float)
    g.add_argument("--format", choices=("png", "pgm"))
    g.add_argument("--scenario", action="append", help="restrict to these scenarios (repeatable)")
    g.set_defaults(func=cmd_gen_phantoms)

    t = sub.add_parser("train", help="fit the PEC/PNL regressor")
    t.add_argument("--data", required=True,
                   help="dataset root (one directory per subject) or a training manifest file")
    t.add_argument("--checkpoint", required=True)
    t.add_argument("--history", help="history CSV (default: next to the checkpoint)")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--learning-rate", dest="learning_rate", type=float)
    t.add_argument("--validation-fraction", dest="validation_fraction", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--head", choices=("softargmax", "fc"))
    t.add_argument("--no-augment", dest="augment", action="store_const", const=False)
    t.add_argument("--adequate-only", dest="adequate_only", action="store_const", const=True,
                   help="train only on MLOs labelled Adequate in the manifest")
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("assess", help="decide positioning for one study or a directory of studies")
    a.add_argument("--study", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--predictor", choices=("passthrough", "trained"))
    a.add_argument("--checkpoint")
    a.add_argument("--jobs", type=int)
    a.add_argument("--diff-threshold", dest="diff_threshold", type=float)
    a.add_argument("--unit-mode", dest="unit_mode", choices=("physical", "pixel"))
    a.add_argument("--bb-distance-threshold", dest="bb_distance_threshold", type=float)
    a.add_argument("--r-min", dest="r_min", type=int)
    a.add_argument("--r-max", dest="r_max", type=int)
    a.add_argument("--edge-gradient-threshold", dest="edge_gradient_threshold", type=float)
    a.add_argument("--accumulator-peak-threshold", dest="accumulator_peak_threshold", type=float)
    a.add_argument("--uniformity-tolerance", dest="uniformity_tolerance", type=float)
    a.add_argument("--chest-wall", dest="chest_wall", choices=("auto", "laterality"))
    a.set_defaults(func=cmd_assess)

    e = sub.add_parser("eval", help="score report sidecars against a phantom manifest")
    e.add_argument("--data", required=True)
    e.add_argument("--reports", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--checkpoint", help="also measure endpoint errors of this model")
    e.add_argument("--bb-tolerance", dest="bb_tolerance", type=float)
    e.add_argument("--bin-width", dest="bin_width", type=float)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="re-render a text report from its JSON sidecar")
    r.add_argument("--sidecar", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    from .annotations import AnnotationError
    from .geometry import GeometryError
    from .imaging import ImageError
    from .pipeline import StudyError
    from .predictor import CheckpointError, ContractError

    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve(args)
        return args.func(args, settings)
    except (ConfigError, StudyError, CheckpointError, ContractError, AnnotationError,
            GeometryError, ImageError, OSError) as exc:
        print(f"mammopos {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"mammopos {args.command}: invalid setting: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
