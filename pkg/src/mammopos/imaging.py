"""Grayscale image buffer, raster I/O, normalisation and resampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from .geometry import Bounds, Point
from .kernels import affine_bilinear

SIDECAR_SUFFIX = ".meta"


class ImageError(Exception):
    """Base class for raster loading failures."""


class UnreadableImageError(ImageError):
    pass


class ImageFormatError(ImageError):
    pass


class ColorImageError(ImageError):
    pass


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Immutable single-channel raster.

    ``pixels`` is a read-only float64 array of shape (height, width). Values
    are raw intensities as loaded (0..255 or 0..65535) until normalised.
    """

    pixels: np.ndarray
    bit_depth: int = 8
    spacing: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.array(self.pixels, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"expected non-empty 2D pixel array, got shape {arr.shape}")
        if self.bit_depth not in (8, 16):
            raise ValueError(f"unsupported bit depth {self.bit_depth}")
        if self.spacing is not None and not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def bounds(self) -> Bounds:
        return Bounds(self.width, self.height)

    def with_pixels(self, pixels: np.ndarray) -> "GrayImage":
        return GrayImage(pixels, self.bit_depth, self.spacing, self.meta)

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return (
            self.bit_depth == other.bit_depth
            and self.spacing == other.spacing
            and self.meta == other.meta
            and np.array_equal(self.pixels, other.pixels)
        )


def sidecar_path(image_path) -> Path:
    p = Path(image_path)
    return p.with_suffix(SIDECAR_SUFFIX)


def read_sidecar(path) -> dict:
    """Parse a ``key = value`` metadata file. ``#`` starts a comment."""
    meta = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":"
        if sep not in line:
            raise ImageFormatError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split(sep, 1))
        meta[key] = value
    if "spacing_mm_per_px" in meta:
        meta["spacing_mm_per_px"] = float(meta["spacing_mm_per_px"])
    return meta


def write_sidecar(path, meta: dict) -> None:
    lines = [f"{k} = {meta[k]!r}" if isinstance(meta[k], float) else f"{k} = {meta[k]}"
             for k in sorted(meta)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_image(path) -> GrayImage:
    """Load an 8/16-bit grayscale PNG or PGM plus its optional sidecar."""
    path = Path(path)
    if not path.is_file():
        raise UnreadableImageError(f"no such file: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("RGB", "RGBA", "P", "CMYK", "YCbCr", "LA", "HSV", "LAB"):
                raise ColorImageError(f"{path}: colour image (mode {mode}) not supported")
            if mode in ("L", "1"):
                bit_depth = 8
                arr = np.asarray(im.convert("L"), dtype=np.float64)
            elif mode.startswith("I;16") or mode == "I":
                arr = np.asarray(im, dtype=np.float64)
                bit_depth = 16
                if arr.size and (arr.min() < 0 or arr.max() > 65535):
                    raise ImageFormatError(f"{path}: values outside 16-bit range")
            else:
                raise ImageFormatError(f"{path}: unsupported image mode {mode}")
    except ImageError:
        raise
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: unrecognised raster format") from exc
    except (OSError, SyntaxError, ValueError) as exc:
        raise ImageFormatError(f"{path}: {exc}") from exc

    meta = {}
    spacing = None
    side = sidecar_path(path)
    if side.is_file():
        meta = read_sidecar(side)
        spacing = meta.pop("spacing_mm_per_px", None)
    return GrayImage(arr, bit_depth=bit_depth, spacing=spacing, meta=meta)


def save_image(img: GrayImage, path, bit_depth: Optional[int] = None, write_meta: bool = True) -> None:
    """Write raw intensities as PNG/PGM, rounded and clipped to ``bit_depth``."""
    path = Path(path)
    depth = bit_depth or img.bit_depth
    top = 255 if depth == 8 else 65535
    data = np.clip(np.rint(img.pixels), 0, top).astype(np.uint8 if depth == 8 else np.uint16)
    if path.suffix.lower() == ".png":
        # lossless either way; level 1 is several times faster than the default
        Image.fromarray(data).save(path, compress_level=1)
    else:
        Image.fromarray(data).save(path)
    if write_meta:
        meta = dict(img.meta)
        if img.spacing is not None:
            meta["spacing_mm_per_px"] = float(img.spacing)
        if meta:
            write_sidecar(sidecar_path(path), meta)


def normalize(img: GrayImage) -> GrayImage:
    """Per-image min-max scaling into [0, 1]; constant images become zeros."""
    px = img.pixels
    lo = float(px.min())
    hi = float(px.max())
    if hi > lo:
        out = (px - lo) / (hi - lo)
    else:
        out = np.zeros_like(px)
    return img.with_pixels(out)


def resample(img: GrayImage, width: int, height: int) -> GrayImage:
    """Bilinear resample to exactly ``width`` x ``height``.

    Output pixel (x, y) samples the source at ``(x * W/width, y * H/height)``,
    the same mapping :func:`rescale_point` applies to coordinates. Spacing is
    rescaled when the aspect ratio is preserved, and dropped otherwise.
    """
    if width < 1 or height < 1:
        raise ValueError(f"invalid target size {width}x{height}")
    if (width, height) == (img.width, img.height):
        return img
    sx = img.width / width
    sy = img.height / height
    m = np.array([[sx, 0.0, 0.0], [0.0, sy, 0.0]])
    out = affine_bilinear(img.pixels, height, width, m, clamp=True)
    spacing = None
    if img.spacing is not None and math.isclose(sx, sy, rel_tol=1e-9):
        spacing = img.spacing * sx
    return GrayImage(out, img.bit_depth, spacing, img.meta)


def rescale_point(p: Point, src: Bounds, dst: Bounds) -> Point:
    return Point(p.x * dst.width / src.width, p.y * dst.height / src.height)
