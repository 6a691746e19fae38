import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from samtrack import oracles
from samtrack.errors import EmptyMaskError
from samtrack.geometry import centroid, convex_hull, mask_to_boxes, min_area_rect, rotated_area
from samtrack.mask import MaskPair


def test_centroid_examples():
    assert centroid(np.ones((9, 13))) == (4.0, 6.0)
    m = np.zeros((8, 12))
    m[3, 7] = 0.9
    assert centroid(m) == (3.0, 7.0)
    m = np.zeros((2, 12))
    m[0, 0] = m[0, 10] = 1.0
    assert centroid(m) == (0.0, 5.0)
    r = np.zeros((20, 20))
    r[3:8, 5:16] = 1.0
    assert centroid(MaskPair.from_fg(r)) == (5.0, 10.0)
    with pytest.raises(EmptyMaskError):
        centroid(np.full((4, 4), 0.5))


def test_axis_rectangle_boxes():
    m = np.zeros((30, 40))
    m[5:15, 8:30] = 1.0
    axis, rot = mask_to_boxes(m)
    assert axis == (8.0, 5.0, 22.0, 10.0)
    cx, cy, w, h, th = rot
    assert th in (0.0, math.pi / 2)
    assert (cx, cy) == pytest.approx((18.5, 9.5))
    assert sorted((w, h)) == pytest.approx([10.0, 22.0])


def test_single_pixel():
    m = np.zeros((5, 5))
    m[2, 3] = 1
    axis, rot = mask_to_boxes(m)
    assert axis == (3.0, 2.0, 1.0, 1.0)
    assert rot == (3.0, 2.0, 1.0, 1.0, 0.0)


def test_empty_mask():
    with pytest.raises(EmptyMaskError):
        mask_to_boxes(np.zeros((4, 4)))


def _rotated_rect(h, w, cx, cy, a, b, theta):
    yy, xx = np.mgrid[:h, :w]
    u = (xx - cx) * math.cos(theta) + (yy - cy) * math.sin(theta)
    v = -(xx - cx) * math.sin(theta) + (yy - cy) * math.cos(theta)
    return ((np.abs(u) <= a) & (np.abs(v) <= b)).astype(float)


def test_diagonal_rectangle_vs_sweep():
    m = _rotated_rect(80, 80, 40, 40, 25, 8, math.pi / 4)
    pts = np.argwhere(m > 0.5)[:, ::-1].astype(float)
    _, _, w, h, _ = min_area_rect(pts)
    sweep = oracles.min_area_rect_sweep(pts)
    assert abs(w * h - sweep) / sweep <= 0.01
    assert w * h <= sweep + 1e-9


def test_hull_degenerate_inputs():
    assert len(convex_hull([[1, 2]])) == 1
    assert len(convex_hull([[0, 0], [1, 1], [2, 2], [3, 3]])) == 2
    sq = convex_hull([[0, 0], [0, 1], [1, 0], [1, 1], [0.5, 0.5]])
    assert len(sq) == 4


@given(st.integers(0, 2**31))
def test_box_nesting_and_containment(seed):
    from samtrack.tensor import SplitMix64
    r = SplitMix64(seed)
    m = _rotated_rect(48, 48, 16 + 16 * r.uniform(), 16 + 16 * r.uniform(), 3 + 8 * r.uniform(),
                      1 + 6 * r.uniform(), math.pi * r.uniform())
    if m.sum() == 0:
        return
    axis, rot = mask_to_boxes(m)
    assert rotated_area(rot) <= axis[2] * axis[3] + 1e-9 + (axis[2] + axis[3])
    cx, cy, w, h, th = rot
    assert 0 <= th < math.pi / 2
    pts = np.argwhere(m > 0.5)[:, ::-1]
    u = (pts[:, 0] - cx) * math.cos(th) + (pts[:, 1] - cy) * math.sin(th)
    v = -(pts[:, 0] - cx) * math.sin(th) + (pts[:, 1] - cy) * math.cos(th)
    assert np.all(np.abs(u) <= (w - 1) / 2 + 1e-6) and np.all(np.abs(v) <= (h - 1) / 2 + 1e-6)
