"""Backend selection for the hot loops.

The compiled Cython module is used when it was built; otherwise the numpy
fallback is used. Set ``MAMMOPOS_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("MAMMOPOS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels


def get_impl(backend: str | None = None):
    if backend is None:
        return _impl
    if backend == "python":
        return _pykernels
    if backend == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {backend!r}")


def hough_vote(xs, ys, ux, uy, r_min: int, r_max: int, height: int, width: int,
               backend: str | None = None) -> np.ndarray:
    """Accumulate centre votes: each edge pixel votes at ``p + r*u`` for every
    integer radius in ``[r_min, r_max]``."""
    arrs = [np.ascontiguousarray(a, dtype=np.float64) for a in (xs, ys, ux, uy)]
    return get_impl(backend).hough_vote(*arrs, int(r_min), int(r_max), int(height), int(width))


def affine_bilinear(src, out_h: int, out_w: int, matrix, clamp: bool = False,
                    fill: float = 0.0, backend: str | None = None) -> np.ndarray:
    """Sample ``src`` bilinearly at ``matrix @ [x, y, 1]`` for every output pixel.

    ``matrix`` maps output (x, y) to source (x, y). Out-of-range samples are
    clamped to the border when ``clamp`` is set, otherwise replaced by ``fill``.
    """
    src = np.ascontiguousarray(src, dtype=np.float64)
    m = np.ascontiguousarray(matrix, dtype=np.float64).reshape(2, 3)
    return get_impl(backend).affine_bilinear(src, int(out_h), int(out_w), m, bool(clamp), float(fill))
