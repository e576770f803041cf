"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``."""

import numpy as np


def hough_vote(xs, ys, ux, uy, r_min, r_max, height, width):
    radii = np.arange(r_min, r_max + 1, dtype=np.float64)
    cx = xs[:, None] + radii[None, :] * ux[:, None]
    cy = ys[:, None] + radii[None, :] * uy[:, None]
    ix = np.floor(cx + 0.5).astype(np.int64).ravel()
    iy = np.floor(cy + 0.5).astype(np.int64).ravel()
    ok = (ix >= 0) & (ix < width) & (iy >= 0) & (iy < height)
    flat = np.bincount(iy[ok] * width + ix[ok], minlength=height * width)
    return flat.reshape(height, width).astype(np.float64)


def affine_bilinear(src, out_h, out_w, m, clamp, fill):
    h, w = src.shape
    jj, ii = np.meshgrid(np.arange(out_w, dtype=np.float64),
                         np.arange(out_h, dtype=np.float64))
    sx = m[0, 0] * jj + m[0, 1] * ii + m[0, 2]
    sy = m[1, 0] * jj + m[1, 1] * ii + m[1, 2]
    xmax, ymax = float(w - 1), float(h - 1)
    if clamp:
        sx = np.clip(sx, 0.0, xmax)
        sy = np.clip(sy, 0.0, ymax)
        outside = None
    else:
        outside = (sx < 0.0) | (sx > xmax) | (sy < 0.0) | (sy > ymax)
        sx = np.where(outside, 0.0, sx)
        sy = np.where(outside, 0.0, sy)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.minimum(x0, w - 2 if w > 1 else 0)
    y0 = np.minimum(y0, h - 2 if h > 1 else 0)
    x1 = x0 + 1 if w > 1 else x0
    y1 = y0 + 1 if h > 1 else y0
    fx = sx - x0
    fy = sy - y0
    a = src[y0, x0]
    b = src[y0, x1]
    c = src[y1, x0]
    d = src[y1, x1]
    out = (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d)
    if outside is not None:
        out[outside] = fill
    return out
