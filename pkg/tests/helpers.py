"""Shared synthetic fixtures for the test suite."""

import numpy as np

from mammopos.imaging import GrayImage


def grid(w, h):
    yy, xx = np.mgrid[0:h, 0:w]
    return xx.astype(float), yy.astype(float)


def disc_alpha(xx, yy, cx, cy, r):
    """Anti-aliased coverage of a disc, saturating at 1 inside r - 0.5."""
    return np.clip(r + 0.5 - np.hypot(xx - cx, yy - cy), 0.0, 1.0)


def disc_image(w, h, discs, background=0.1):
    """``discs`` is a list of (cx, cy, r, intensity)."""
    xx, yy = grid(w, h)
    px = np.full((h, w), float(background))
    for cx, cy, r, v in discs:
        a = disc_alpha(xx, yy, cx, cy, r)
        px = px * (1 - a) + v * a
    return GrayImage(px)


def adversarial_fixtures(n=50, seed=0, size=200):
    """BB look-alikes that must never pass the centre filter.

    Cycles through: rings with a dark centre, saturated discs with a dim
    pixel beside the centre, smooth Gaussian blobs peaking at the centre,
    and saturated discs with a noisy interior.
    """
    rng = np.random.default_rng(seed)
    xx, yy = grid(size, size)
    out = []
    for i in range(n):
        r = float(rng.integers(10, 21))
        cx, cy = rng.uniform(40, size - 40, 2)
        px = np.full((size, size), 0.1)
        kind = i % 4
        if kind == 0:
            rim = disc_alpha(xx, yy, cx, cy, r) - disc_alpha(xx, yy, cx, cy, r - 4)
            px = px * (1 - rim) + 1.0 * rim
        elif kind == 1:
            a = disc_alpha(xx, yy, cx, cy, r)
            px = px * (1 - a) + 1.0 * a
            ix, iy = int(np.floor(cx + 0.5)), int(np.floor(cy + 0.5))
            px[iy, ix + 1] = 0.9
            px[iy + 1, ix] = 0.9
            px[iy, ix - 1] = 0.9
            px[iy - 1, ix] = 0.9
        elif kind == 2:
            sigma = r / 2.0
            px = 0.1 + 0.9 * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sigma ** 2))
        else:
            a = disc_alpha(xx, yy, cx, cy, r)
            inner = 1.0 - 0.05 * rng.random((size, size))
            px = px * (1 - a) + inner * a
        out.append((GrayImage(px), (cx, cy, r, kind)))
    return out


def tiny_arch(head="softargmax", size=10):
    """Smooth (tanh) network small enough for exhaustive finite differences."""
    from mammopos.predictor import Architecture
    return Architecture(input_size=size, channels=(2,), context=(1,), hidden=3,
                        activation="tanh", head=head)


def model_gradient_error(seed, head="softargmax", h=1e-6):
    """Norm-wise relative error between autograd and central differences over
    every parameter of a float64 tiny model."""
    import torch

    from mammopos.predictor import RegressorModel, torch_log_cosh_loss

    arch = tiny_arch(head)
    net = RegressorModel.create(arch, seed=seed, dtype=torch.float64).net
    rng = np.random.default_rng(seed)
    x = torch.tensor(rng.random((2, 1, arch.input_size, arch.input_size)))
    y = torch.tensor(rng.random((2, 8)))

    def loss():
        return torch_log_cosh_loss(y, net(x))

    net.zero_grad()
    loss().backward()
    params = list(net.parameters())
    analytic = np.concatenate([p.grad.numpy().ravel() for p in params])
    numeric = []
    with torch.no_grad():
        for p in params:
            flat = p.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                up = loss().item()
                flat[i] = orig - h
                down = loss().item()
                flat[i] = orig
                numeric.append((up - down) / (2 * h))
    numeric = np.array(numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    return float(np.linalg.norm(analytic - numeric) / scale), analytic.size


def loss_gradient_error(seed, h=1e-5):
    """Worst componentwise relative error of loss_gradient vs central differences."""
    from mammopos.predictor import log_cosh_loss, loss_gradient

    rng = np.random.default_rng(seed)
    yt = rng.uniform(-5, 5, 8)
    yp = rng.uniform(-5, 5, 8)
    analytic = loss_gradient(yt, yp)
    numeric = np.array([(log_cosh_loss(yt, yp + h * e) - log_cosh_loss(yt, yp - h * e)) / (2 * h)
                        for e in np.eye(8)])
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))


def raster_crossing(a, b, width, height, step=0.1):
    """Brute-force in-bounds crossing test for the infinite lines through
    segments ``a`` and ``b``.

    Each line is marched at ``step`` px; samples outside the image are
    dropped, and the other line's side function is evaluated at the rest. A
    crossing is reported when that function changes sign along either march.
    Uses no line-intersection formula, only side-of-line tests.
    """
    def march(s, t):
        dx, dy = s.p1.x - s.p0.x, s.p1.y - s.p0.y
        norm = np.hypot(dx, dy)
        ux, uy = dx / norm, dy / norm
        reach = np.hypot(s.p0.x - width / 2, s.p0.y - height / 2) + np.hypot(width, height)
        k = np.arange(-reach, reach + step, step)
        xs, ys = s.p0.x + k * ux, s.p0.y + k * uy
        inside = (xs >= 0) & (xs <= width - 1) & (ys >= 0) & (ys <= height - 1)
        if not inside.any():
            return False
        tx, ty = t.p1.x - t.p0.x, t.p1.y - t.p0.y
        side = (tx * (ys[inside] - t.p0.y) - ty * (xs[inside] - t.p0.x)) / np.hypot(tx, ty)
        if np.all(np.abs(side) < 1e-9):  # collinear: no single crossing
            return False
        return bool(side.min() <= 0.0 <= side.max())

    return march(a, b) or march(b, a)


def exact_intersection(a, b):
    """Rational intersection of the lines through ``a`` and ``b`` (None if parallel)."""
    from fractions import Fraction as F
    ax0, ay0, ax1, ay1 = map(F, (a.p0.x, a.p0.y, a.p1.x, a.p1.y))
    bx0, by0, bx1, by1 = map(F, (b.p0.x, b.p0.y, b.p1.x, b.p1.y))
    det = (ax1 - ax0) * (by1 - by0) - (ay1 - ay0) * (bx1 - bx0)
    if det == 0:
        return None
    t = ((bx0 - ax0) * (by1 - by0) - (by0 - ay0) * (bx1 - bx0)) / det
    return float(ax0 + t * (ax1 - ax0)), float(ay0 + t * (ay1 - ay0))


def distance_to_box_boundary(x, y, width, height):
    """Distance from (x, y) to the border of [0, W-1] x [0, H-1]."""
    x1, y1 = width - 1, height - 1
    if 0 <= x <= x1 and 0 <= y <= y1:
        return min(x, y, x1 - x, y1 - y)
    dx = max(0 - x, 0, x - x1)
    dy = max(0 - y, 0, y - y1)
    return float(np.hypot(dx, dy))


def random_line_pair(rng):
    """Random small grid and two segments with endpoints inside it; a third of
    the cases snap to integer pixels to hit exact alignments."""
    from mammopos.geometry import Segment

    w, h = int(rng.integers(3, 25)), int(rng.integers(3, 25))
    snap = rng.random() < 1 / 3
    segs = []
    for _ in range(2):
        while True:
            c = rng.uniform(0, 1, 4) * [w - 1, h - 1, w - 1, h - 1]
            if snap:
                c = np.round(c)
            if np.hypot(c[2] - c[0], c[3] - c[1]) >= 1.0:
                break
        segs.append(Segment.from_coords(*c))
    return w, h, segs[0], segs[1]


def oracle_sweep(n, seed):
    """Run assess_mlo against the raster oracle; return (disagreements, worst
    boundary distance among them)."""
    from mammopos.decision import ADEQUATE, assess_mlo
    from mammopos.geometry import Bounds

    rng = np.random.default_rng(seed)
    bad = []
    for _ in range(n):
        w, h, pec, pnl = random_line_pair(rng)
        ours = assess_mlo(pec, pnl, Bounds(w, h)).verdict == ADEQUATE
        if ours != raster_crossing(pec, pnl, w, h):
            x = exact_intersection(pec, pnl)
            d = float("inf") if x is None else distance_to_box_boundary(x[0], x[1], w, h)
            bad.append(d)
    return len(bad), max(bad, default=0.0)
