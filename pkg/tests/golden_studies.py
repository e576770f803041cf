"""Hand-built studies frozen as report golden files.

Regenerate the files with ``MAMMOPOS_REGEN_GOLDEN=1 pytest tests/test_report.py``
and review the diff before committing.
"""

from mammopos.bbdetect import Circle
from mammopos.decision import CcView, DecisionConfig, MloView, decide_study
from mammopos.geometry import Bounds, Point, Segment

B = Bounds(250, 250)


def seg(*c):
    return Segment.from_coords(*c)


def bb(x, y, r=14.0):
    return Circle(Point(x, y), r, 300.0)


def two_breast_pixel_study():
    """Left breast: PEC meets the PNL outside the image and no BB on the CC.
    Right breast: two MLOs (one non-intersecting) and two CCs, longest taken."""
    left = (
        [MloView("Mammo_133_LMLO_P_1", seg(249, 0, 300, 249), seg(40, 120, 230, 120), B,
                 bb=bb(52, 158.4))],
        [CcView("Mammo_133_LCC_P_1", B, None, "Right")],
    )
    right = (
        [MloView("Mammo_133_RMLO_P_1", seg(200, 0, 200, 249), seg(60, 0, 60, 249), B),
         MloView("Mammo_133_RMLO_P_2", seg(161.6107898412449, 0, 161.6107898412449, 249),
                 seg(10, 100, 150, 100), B, bb=bb(20, 100 + 41.59424560626268))],
        [CcView("Mammo_133_RCC_P_1", B, bb(146.615, 125), "Left"),
         CcView("Mammo_133_RCC_P_2", B, bb(161.245, 120), "Left")],
    )
    return decide_study("Mammo_133", {"L": left, "R": right}, DecisionConfig(unit_mode="pixel"))


def physical_adequate_study():
    b = Bounds(512, 512)
    left = (
        [MloView("S7_LMLO", seg(400, 0, 300, 511), seg(60, 260, 340, 300), b, 0.48)],
        [CcView("S7_LCC", b, bb(300, 256), "Left", 0.48)],
    )
    return decide_study("S7", {"L": left}, DecisionConfig())


def mixed_failures_study():
    """Right CC misses the 1 cm rule; left MLO lines are parallel and the BB
    sits far from the PNL."""
    b = Bounds(512, 512)
    right = (
        [MloView("S9_RMLO", seg(100, 0, 100, 511), seg(450, 200, 120, 200), b, 0.07,
                 bb=bb(440, 200.5))],
        [CcView("S9_RCC", b, bb(350, 250), "Right", 0.07)],
    )
    left = (
        [MloView("S9_LMLO", seg(400, 0, 400, 511), seg(100, 0, 100, 511), b, 0.07,
                 bb=bb(160, 300))],
        [CcView("S9_LCC", b, bb(200, 250), "Left", 0.07),
         CcView("S9_LCC_2", b, bb(0, 250), "Left", 0.07)],
    )
    return decide_study("S9", {"R": right, "L": left}, DecisionConfig())


GOLDEN = {
    "two_breast_pixel": two_breast_pixel_study,
    "physical_adequate": physical_adequate_study,
    "mixed_failures": mixed_failures_study,
}
