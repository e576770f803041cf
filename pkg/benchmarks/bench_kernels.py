"""Time the compiled and numpy kernel backends on phantom-sized inputs.

    python benchmarks/bench_kernels.py [--repeat N]

Both backends are also checked for identical output before timing.
"""

import argparse
import timeit

import numpy as np

from mammopos import kernels
from mammopos.bbdetect import BbParams, gradients
from mammopos.imaging import normalize
from mammopos.phantom import PhantomSpec, generate_case


def hough_inputs():
    img = normalize(generate_case(PhantomSpec(seed=3)).cc_image)
    gx, gy = gradients(img.pixels)
    mag = np.hypot(gx, gy)
    ys, xs = np.nonzero(mag > 0.2 * mag.max())
    m = mag[ys, xs]
    p = BbParams()
    return (xs.astype(np.float64), ys.astype(np.float64), gx[ys, xs] / m, gy[ys, xs] / m,
            p.r_min, p.r_max, img.height, img.width)


def bilinear_inputs():
    src = np.random.default_rng(0).random((512, 512))
    c, s = np.cos(0.2), np.sin(0.2)
    m = np.array([[c, -s, 40.0], [s, c, -30.0]])
    return src, 560, 560, m


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    try:
        kernels.get_impl("cython")
    except ImportError:
        print("compiled backend not built; run `pip install -e . --no-build-isolation` first")
        return 1

    cases = {
        "hough_vote": (kernels.hough_vote, hough_inputs(), {}),
        "affine_bilinear": (kernels.affine_bilinear, bilinear_inputs(), {"fill": 0.0}),
    }
    print(f"{'kernel':<16} {'python ms':>10} {'cython ms':>10} {'speedup':>8}")
    for name, (fn, a, kw) in cases.items():
        ref = fn(*a, **kw, backend="python")
        fast = fn(*a, **kw, backend="cython")
        if not np.array_equal(ref, fast):
            raise SystemExit(f"{name}: backends disagree (max diff {np.abs(ref - fast).max()})")
        t = {}
        for be in ("python", "cython"):
            t[be] = min(timeit.repeat(lambda: fn(*a, **kw, backend=be), number=1, repeat=args.repeat))
        print(f"{name:<16} {t['python'] * 1e3:>10.2f} {t['cython'] * 1e3:>10.2f} "
              f"{t['python'] / t['cython']:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
