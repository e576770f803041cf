"""PEC line / PNL endpoint regression.

A small convolutional regressor maps a normalised 250x250 MLO image to eight
numbers: both endpoints of the PEC line followed by both endpoints of the
PNL. Training minimises the Log-Cosh loss with Adam and keeps the parameters
from the epoch with the lowest validation loss.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from .annotations import ViewAnnotation
from .augmentation import AugmentConfig, Augmenter
from .geometry import Bounds, Point, Segment, perpendicular_distance
from .imaging import GrayImage, normalize, rescale_point, resample

log = logging.getLogger(__name__)

INPUT_SIZE = 250
CHECKPOINT_FORMAT = "mammopos-regressor/1"
LOG2 = math.log(2.0)


class ContractError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


# -- loss ---------------------------------------------------------------------

def log_cosh(d):
    """Elementwise log(cosh(d)), evaluated as |d| + log(1 + e^(-2|d|)) - log 2."""
    a = np.abs(np.asarray(d, dtype=np.float64))
    return a + np.log1p(np.exp(-2.0 * a)) - LOG2


def log_cosh_loss(y_true, y_pred) -> float:
    yt = np.asarray(y_true, dtype=np.float64)
    yp = np.asarray(y_pred, dtype=np.float64)
    if yt.shape != yp.shape:
        raise ValueError(f"shape mismatch {yt.shape} vs {yp.shape}")
    return float(np.sum(log_cosh(yt - yp)))


def loss_gradient(y_true, y_pred) -> np.ndarray:
    """d loss / d y_pred = -tanh(y_true - y_pred)."""
    yt = np.asarray(y_true, dtype=np.float64)
    yp = np.asarray(y_pred, dtype=np.float64)
    if yt.shape != yp.shape:
        raise ValueError(f"shape mismatch {yt.shape} vs {yp.shape}")
    return -np.tanh(yt - yp)


def torch_log_cosh_loss(y_true: torch.Tensor, y_pred: torch.Tensor) -> torch.Tensor:
    """Per-sample sum of log cosh residuals, averaged over the batch."""
    a = torch.abs(y_true - y_pred)
    per = a + nn.functional.softplus(-2.0 * a) - LOG2
    return per.sum(dim=-1).mean()


# -- endpoint vectors -----------------------------------------------------------

@dataclass(frozen=True)
class EndpointVector:
    """(pec.p0, pec.p1, pnl.p0, pnl.p1) as eight x/y scalars."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) != 8:
            raise ValueError(f"need 8 values, got {len(vals)}")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite endpoint vector {vals}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_segments(cls, pec: Segment, pnl: Segment) -> "EndpointVector":
        return cls((pec.p0.x, pec.p0.y, pec.p1.x, pec.p1.y,
                    pnl.p0.x, pnl.p0.y, pnl.p1.x, pnl.p1.y))

    def points(self) -> list[Point]:
        v = self.values
        return [Point(v[i], v[i + 1]) for i in range(0, 8, 2)]

    @property
    def pec(self) -> Segment:
        p = self.points()
        return Segment(p[0], p[1])

    @property
    def pnl(self) -> Segment:
        p = self.points()
        return Segment(p[2], p[3])

    def rescaled(self, src: Bounds, dst: Bounds) -> "EndpointVector":
        pts = [rescale_point(p, src, dst) for p in self.points()]
        return EndpointVector(tuple(c for p in pts for c in p.as_tuple()))


def passthrough_predictor(ann: ViewAnnotation) -> EndpointVector:
    """Ground-truth endpoints of an annotated MLO view."""
    if ann.pec is None:
        raise ContractError(f"{ann.view} annotation has no PEC line")
    return EndpointVector.from_segments(ann.pec, ann.pnl)


def target_vector(ann: ViewAnnotation) -> EndpointVector:
    """Ground-truth endpoints in pixels with the PEC endpoints ordered top first,
    the order the regressor is trained to produce."""
    pec = ann.pec
    if pec is None:
        raise ContractError("training needs MLO annotations with a PEC line")
    if pec.p1.y < pec.p0.y:
        pec = pec.reversed()
    return EndpointVector.from_segments(pec, ann.pnl)


def training_target(ann: ViewAnnotation) -> np.ndarray:
    """Endpoint vector in [0, 1] units of the annotation's (square) frame."""
    return np.array(target_vector(ann).values) / ann.dims.width


# -- model ----------------------------------------------------------------------

_ACTIVATIONS = {"relu": nn.ReLU, "tanh": nn.Tanh, "gelu": nn.GELU}
HEADS = ("softargmax", "fc")


@dataclass(frozen=True)
class Architecture:
    """Network descriptor stored in checkpoints.

    ``channels`` are stride-2 conv stages. With the ``softargmax`` head,
    ``context`` adds dilated stride-1 convs at the final resolution and each
    line head turns two heatmaps into expected (x, y) positions; with ``fc``
    the features are flattened into a dense hidden layer.
    """

    input_size: int = INPUT_SIZE
    channels: tuple[int, ...] = (16, 32, 64)
    context: tuple[int, ...] = (1, 2, 4, 8)
    hidden: int = 64
    activation: str = "relu"
    head: str = "softargmax"
    separate_heads: bool = False
    coord_channels: bool = True
    group_norm: bool = True

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        object.__setattr__(self, "context", tuple(int(c) for c in self.context))
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if not self.channels:
            raise ValueError("need at least one conv stage")

    @property
    def feature_size(self) -> int:
        size = self.input_size
        for _ in self.channels:
            size = (size + 1) // 2
        return size

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Architecture":
        return cls(**json.loads(text))


def _block(arch: Architecture, c_in: int, c_out: int, stride: int, dilation: int = 1) -> list[nn.Module]:
    layers: list[nn.Module] = [nn.Conv2d(c_in, c_out, kernel_size=3, stride=stride,
                                         padding=dilation, dilation=dilation)]
    if arch.group_norm:
        layers.append(nn.GroupNorm(min(4, c_out), c_out))
    layers.append(_ACTIVATIONS[arch.activation]())
    return layers


def _trunk(arch: Architecture) -> nn.Sequential:
    layers: list[nn.Module] = []
    c_in = 3 if arch.coord_channels else 1
    for c in arch.channels:
        layers += _block(arch, c_in, c, 2)
        c_in = c
    if arch.head == "softargmax":
        for d in arch.context:
            layers += _block(arch, c_in, c_in, 1, d)
    return nn.Sequential(*layers)


class SoftArgmaxHead(nn.Module):
    """Two heatmaps -> two expected (x, y) positions, in [0, 1] image units.

    Heatmap cells are spread evenly from the first to the last pixel centre,
    so points on the image border are exactly reachable.
    """

    def __init__(self, arch: Architecture):
        super().__init__()
        c = arch.channels[-1]
        self.conv = nn.Sequential(*_block(arch, c, arch.hidden, 1),
                                  nn.Conv2d(arch.hidden, 2, kernel_size=1))
        s = arch.feature_size
        n = arch.input_size
        pos = torch.linspace(0.0, (n - 1) / n, s, dtype=torch.float64)
        self.register_buffer("pos", pos.float(), persistent=False)

    def forward(self, f: torch.Tensor) -> torch.Tensor:
        logits = self.conv(f)
        n, k, h, w = logits.shape
        prob = torch.softmax(logits.reshape(n, k, h * w), dim=-1).reshape(n, k, h, w)
        pos = self.pos.to(f.dtype)
        x = (prob.sum(dim=2) * pos).sum(dim=-1)
        y = (prob.sum(dim=3) * pos).sum(dim=-1)
        return torch.stack([x, y], dim=-1).reshape(n, 4)


class FcHead(nn.Module):
    def __init__(self, arch: Architecture):
        super().__init__()
        n_in = arch.channels[-1] * arch.feature_size ** 2
        self.net = nn.Sequential(nn.Flatten(), nn.Linear(n_in, arch.hidden),
                                 _ACTIVATIONS[arch.activation](), nn.Linear(arch.hidden, 4))

    def forward(self, f: torch.Tensor) -> torch.Tensor:
        return self.net(f)


class Regressor(nn.Module):
    """Conv trunk + two 4-output heads (PEC, PNL).

    With ``separate_heads`` each line gets its own trunk, i.e. two fully
    independent networks of the same architecture.
    """

    def __init__(self, arch: Architecture):
        super().__init__()
        self.arch = arch
        head = SoftArgmaxHead if arch.head == "softargmax" else FcHead
        self.trunk = _trunk(arch)
        self.pnl_trunk = _trunk(arch) if arch.separate_heads else None
        self.pec_head = head(arch)
        self.pnl_head = head(arch)
        s = arch.input_size
        ramp = torch.linspace(0.0, 1.0, s)
        self.register_buffer("coords", torch.stack(torch.meshgrid(ramp, ramp, indexing="xy")),
                             persistent=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.arch.coord_channels:
            grid = self.coords.to(x.dtype).expand(x.shape[0], -1, -1, -1)
            x = torch.cat([x, grid], dim=1)
        f = self.trunk(x)
        g = self.pnl_trunk(x) if self.pnl_trunk is not None else f
        return torch.cat([self.pec_head(f), self.pnl_head(g)], dim=1)


@dataclass
class RegressorModel:
    arch: Architecture
    net: Regressor

    @classmethod
    def create(cls, arch: Architecture = Architecture(), seed: int = 0,
               dtype: torch.dtype = torch.float32) -> "RegressorModel":
        torch.manual_seed(seed)
        net = Regressor(arch).to(dtype)
        net.eval()
        return cls(arch, net)


def _check_input(img: GrayImage, size: int) -> None:
    if (img.width, img.height) != (size, size):
        raise ContractError(f"expected {size}x{size} input, got {img.width}x{img.height}")
    px = img.pixels
    if px.min() < 0.0 or px.max() > 1.0:
        raise ContractError("input intensities must lie in [0, 1]")


def order_pnl(pec: Segment, pnl: Segment) -> Segment:
    """Put the nipple (the endpoint farther from the PEC line) first."""
    if perpendicular_distance(pnl.p1, pec) > perpendicular_distance(pnl.p0, pec):
        return pnl.reversed()
    return pnl


def _to_vector(raw: np.ndarray, size: int) -> EndpointVector:
    v = [float(c) * size for c in raw]
    pec = Segment(Point(v[0], v[1]), Point(v[2], v[3]))
    pnl = order_pnl(pec, Segment(Point(v[4], v[5]), Point(v[6], v[7])))
    return EndpointVector.from_segments(pec, pnl)


def forward(model: RegressorModel, img: GrayImage) -> EndpointVector:
    """Predict endpoints (pixels in the input's coordinate frame)."""
    size = model.arch.input_size
    _check_input(img, size)
    dtype = next(model.net.parameters()).dtype
    x = torch.tensor(img.pixels, dtype=dtype)[None, None]
    model.net.eval()
    with torch.no_grad():
        raw = model.net(x)[0].numpy()
    return _to_vector(raw, size)


def prepare(img: GrayImage, size: int = INPUT_SIZE) -> GrayImage:
    """Normalise then resample to the network input size."""
    return normalize(resample(img, size, size))


def predict_native(model: RegressorModel, img: GrayImage) -> EndpointVector:
    """Predict on a full-resolution image and map endpoints back to it."""
    size = model.arch.input_size
    small = prepare(img, size)
    ev = forward(model, small)
    return ev.rescaled(Bounds(size, size), img.bounds)


# -- checkpoints ----------------------------------------------------------------

def save_checkpoint(model: RegressorModel, path) -> None:
    arrays = {f"param/{k}": v.detach().cpu().numpy() for k, v in model.net.state_dict().items()}
    arrays["__format__"] = np.array(CHECKPOINT_FORMAT)
    arrays["__arch__"] = np.array(model.arch.to_json())
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path, expected: Optional[Architecture] = None) -> RegressorModel:
    try:
        with np.load(path, allow_pickle=False) as data:
            fmt = str(data["__format__"])
            arch = Architecture.from_json(str(data["__arch__"]))
            params = {k[len("param/"):]: data[k] for k in data.files if k.startswith("param/")}
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from exc
    if fmt != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: unsupported checkpoint format {fmt!r}")
    if expected is not None and expected != arch:
        raise CheckpointError(f"{path}: architecture mismatch: {arch} != {expected}")
    first = next(iter(params.values()))
    dtype = torch.float64 if first.dtype == np.float64 else torch.float32
    model = RegressorModel.create(arch, dtype=dtype)
    state = {k: torch.as_tensor(v) for k, v in params.items()}
    try:
        model.net.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: parameters do not match architecture ({exc})") from exc
    return model


# -- training -------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 12
    learning_rate: float = 1e-4
    epochs: int = 150
    seed: int = 0
    validation_fraction: float = 0.2
    augment: bool = True
    flip_probability: float = 0.5
    max_rotation_deg: float = 15.0
    arch: Architecture = field(default_factory=Architecture)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: Optional[float]
    val_endpoint_error: Optional[float]


def to_input_frame(img: GrayImage, ann: ViewAnnotation, size: int):
    small = prepare(img, size)
    src, dst = ann.dims, Bounds(size, size)

    def pt(p):
        # the ratio mapping can push last-column points half a pixel past the border
        q = rescale_point(p, src, dst)
        return Point(min(max(q.x, 0.0), size - 1.0), min(max(q.y, 0.0), size - 1.0))

    def seg(s):
        return None if s is None else Segment(pt(s.p0), pt(s.p1))

    tag = None if ann.tag_box is None else tuple(pt(p) for p in ann.tag_box)
    return small, replace(ann, dims=dst, pec=seg(ann.pec), pnl=seg(ann.pnl), tag_box=tag)


def split_indices(n: int, fraction: float, seed: int) -> tuple[list[int], list[int]]:
    order = np.random.default_rng(seed).permutation(n).tolist()
    n_val = int(round(fraction * n))
    if fraction > 0 and n > 1:
        n_val = min(max(n_val, 1), n - 1)
    return sorted(order[n_val:]), sorted(order[:n_val])


def _batch(samples, size):
    x = np.stack([s[0].pixels for s in samples])[:, None]
    y = np.stack([training_target(s[1]) for s in samples])
    return torch.as_tensor(x, dtype=torch.float32), torch.as_tensor(y, dtype=torch.float32)


def _evaluate(net, samples, size, batch_size):
    if not samples:
        return None, None
    net.eval()
    tot_loss = 0.0
    errs = []
    with torch.no_grad():
        for i in range(0, len(samples), batch_size):
            x, y = _batch(samples[i:i + batch_size], size)
            pred = net(x)
            a = torch.abs(y - pred)
            per = (a + nn.functional.softplus(-2.0 * a) - LOG2).sum(dim=1)
            tot_loss += float(per.sum())
            d = (pred - y).numpy().reshape(-1, 4, 2) * size
            errs.append(np.hypot(d[..., 0], d[..., 1]).ravel())
    return tot_loss / len(samples), float(np.concatenate(errs).mean())


def train(dataset: Sequence[tuple[GrayImage, ViewAnnotation]], cfg: TrainConfig = TrainConfig(),
          progress=None) -> tuple[RegressorModel, list[EpochRecord]]:
    """Fit a regressor; returns the lowest-validation-loss model and the history."""
    if len(dataset) == 0:
        raise ValueError("empty training set")
    if len(dataset) < cfg.batch_size:
        raise ValueError(f"dataset of {len(dataset)} is smaller than one batch ({cfg.batch_size})")
    size = cfg.arch.input_size
    prepared = [to_input_frame(img, ann, size) for img, ann in dataset]
    train_idx, val_idx = split_indices(len(prepared), cfg.validation_fraction, cfg.seed)
    train_set = [prepared[i] for i in train_idx]
    val_set = [prepared[i] for i in val_idx]

    model = RegressorModel.create(cfg.arch, seed=cfg.seed)
    net = model.net
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    aug = Augmenter(AugmentConfig(cfg.flip_probability, cfg.max_rotation_deg, cfg.seed))
    order_rng = np.random.default_rng(cfg.seed + 1)
    torch.manual_seed(cfg.seed)

    history: list[EpochRecord] = []
    best_loss = math.inf
    best_state = copy.deepcopy(net.state_dict())
    for epoch in range(1, cfg.epochs + 1):
        net.train()
        order = order_rng.permutation(len(train_set))
        running = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = []
            for k in order[start:start + cfg.batch_size]:
                img, ann = train_set[k]
                if cfg.augment:
                    img, ann = aug(img, ann)
                    if img.bounds != Bounds(size, size):
                        img, ann = to_input_frame(img, ann, size)
                batch.append((img, ann))
            x, y = _batch(batch, size)
            opt.zero_grad()
            loss = torch_log_cosh_loss(y, net(x))
            loss.backward()
            opt.step()
            running += float(loss.detach()) * len(batch)
        train_loss = running / len(train_set)
        val_loss, val_err = _evaluate(net, val_set, size, cfg.batch_size)
        history.append(EpochRecord(epoch, train_loss, val_loss, val_err))
        score = val_loss if val_loss is not None else train_loss
        if score < best_loss:
            best_loss = score
            best_state = copy.deepcopy(net.state_dict())
        if progress is not None:
            progress(history[-1])
        log.info("epoch %d train %.6g val %s err %s", epoch, train_loss, val_loss, val_err)
    net.load_state_dict(best_state)
    net.eval()
    return model, history


def evaluate_model(model: RegressorModel, dataset) -> tuple[float, float]:
    """(mean loss, mean endpoint error px) on the 250x250 frame, no augmentation."""
    size = model.arch.input_size
    prepared = [to_input_frame(img, ann, size) for img, ann in dataset]
    return _evaluate(model.net, prepared, size, 32)


def write_history(history: Sequence[EpochRecord], path) -> None:
    lines = ["epoch,train_loss,val_loss,val_endpoint_error_px"]
    for r in history:
        lines.append(",".join("" if v is None else repr(v) for v in
                              (r.epoch, r.train_loss, r.val_loss, r.val_endpoint_error)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
