import numpy as np
import pytest
from numpy.testing import assert_allclose

from cuboidpose import (
    CameraIntrinsics,
    DepthImage,
    MaskImage,
    deproject_all,
    deproject_mask,
    fit_obb,
    inverse_project,
    project,
    sample_depth_window,
)
from cuboidpose.errors import (
    BehindCamera,
    DimensionMismatch,
    InvalidDepth,
    OutOfBounds,
)

WIDE = CameraIntrinsics(fx=600.0, fy=600.0, cx=320.0, cy=240.0, width=1280, height=720)


def flat_depth(intr, value):
    return DepthImage(np.full((intr.height, intr.width), value))


def test_inverse_project_principal_point():
    p = inverse_project(WIDE, flat_depth(WIDE, 1.0), (320, 240))
    assert_allclose(p, [0.0, 0.0, 1.0], atol=1e-12)


def test_inverse_project_off_axis():
    p = inverse_project(WIDE, flat_depth(WIDE, 1.0), (920, 240))
    assert_allclose(p, [1.0, 0.0, 1.0], atol=1e-12)
    p = inverse_project(WIDE, flat_depth(WIDE, 2.0), (320, 540))
    assert_allclose(p, [0.0, 1.0, 2.0], atol=1e-12)


def test_project_principal_point():
    (x, y), d = project(WIDE, [0.0, 0.0, 1.0])
    assert (x, y) == pytest.approx((320.0, 240.0))
    assert d == pytest.approx(1.0)


def test_project_off_axis():
    (x, y), _ = project(WIDE, [1.0, 0.0, 1.0])
    assert x == pytest.approx(920.0)
    assert y == pytest.approx(240.0)


def test_project_inverse_round_trip():
    """Pixel -> point -> pixel is exact for every valid pixel/depth pair."""
    rng = np.random.default_rng(1)
    depth = DepthImage(rng.uniform(0.4, 3.0, size=(WIDE.height, WIDE.width)))
    xs = rng.integers(0, WIDE.width, 200)
    ys = rng.integers(0, WIDE.height, 200)
    for x, y in zip(xs, ys):
        p = inverse_project(WIDE, depth, (x, y))
        (px, py), d = project(WIDE, p)
        assert abs(px - x) < 1e-9 and abs(py - y) < 1e-9
        assert abs(d - depth.data[y, x]) < 1e-12


def test_point_scales_linearly_with_depth():
    p1 = inverse_project(WIDE, flat_depth(WIDE, 1.0), (500, 100))
    p2 = inverse_project(WIDE, flat_depth(WIDE, 2.0), (500, 100))
    assert_allclose(p2, 2.0 * p1, atol=1e-12)


def test_inverse_project_errors():
    depth = flat_depth(WIDE, 1.0)
    with pytest.raises(OutOfBounds):
        inverse_project(WIDE, depth, (-1, 0))
    with pytest.raises(OutOfBounds):
        inverse_project(WIDE, depth, (WIDE.width, 0))
    hole = flat_depth(WIDE, 1.0)
    hole.data[240, 320] = 0.0
    with pytest.raises(InvalidDepth):
        inverse_project(WIDE, hole, (320, 240))


def test_project_behind_camera():
    with pytest.raises(BehindCamera):
        project(WIDE, [0.0, 0.0, -1.0])
    with pytest.raises(BehindCamera):
        project(WIDE, [0.1, 0.1, 0.0])


def test_dimension_mismatch():
    small = DepthImage(np.ones((10, 10)))
    with pytest.raises(DimensionMismatch):
        inverse_project(WIDE, small, (5, 5))
    with pytest.raises(DimensionMismatch):
        deproject_mask(WIDE, flat_depth(WIDE, 1.0), MaskImage(np.zeros((10, 10), np.uint8)))


def test_deproject_empty_mask(intr640):
    mask = MaskImage(np.zeros((intr640.height, intr640.width), np.uint8))
    cloud = deproject_mask(intr640, DepthImage(np.ones((480, 640))), mask)
    assert len(cloud) == 0


def test_deproject_single_pixel(intr640):
    mask = MaskImage(np.zeros((480, 640), np.uint8))
    mask.data[240, 320] = 255
    cloud = deproject_mask(intr640, DepthImage(np.full((480, 640), 1.5)), mask)
    assert len(cloud) == 1
    assert_allclose(cloud.points[0], [0.0, 0.0, 1.5], atol=1e-12)


def test_deproject_counts_valid_pixels(frontal):
    """Every masked pixel with depth produces exactly one point."""
    mask = frontal.gt.face_mask
    n_valid = int(np.count_nonzero((mask.data != 0) & (frontal.depth.data > 0)))
    cloud = deproject_mask(frontal.intr, frontal.depth, mask)
    assert len(cloud) == n_valid


def test_deproject_skips_depth_holes(frontal):
    depth = DepthImage(frontal.depth.data.copy())
    ys, xs = np.nonzero(frontal.gt.face_mask.data)
    depth.data[ys[:50], xs[:50]] = 0.0
    cloud = deproject_mask(frontal.intr, depth, frontal.gt.face_mask)
    assert len(cloud) == frontal.gt.face_mask.count() - 50


def test_deprojected_face_matches_dimensions(frontal):
    """The rendered face deprojects to a 0.30 x 0.20 planar patch."""
    cloud = deproject_mask(frontal.intr, frontal.depth, frontal.gt.face_mask)
    obb = fit_obb(cloud)
    # one pixel at 1 m with f = 600 is 1.67 mm; allow two
    px = 2.0 * 1.0 / 600.0
    assert abs(obb.half_extents[0] - 0.15) < px
    assert abs(obb.half_extents[1] - 0.10) < px
    assert obb.half_extents[2] < 1e-6


def test_deproject_all(intr640):
    depth = DepthImage(np.ones((480, 640)))
    depth.data[0, :] = 0.0
    cloud = deproject_all(intr640, depth)
    assert len(cloud) == 480 * 640 - 640


def test_sample_depth_window_plain():
    depth = DepthImage(np.full((20, 20), 1.234))
    assert sample_depth_window(depth, (10, 10)) == pytest.approx(1.234)


def test_sample_depth_window_skips_holes():
    depth = DepthImage(np.full((20, 20), 2.0))
    depth.data[10, 10] = 0.0
    assert sample_depth_window(depth, (10, 10)) == pytest.approx(2.0)


def test_sample_depth_window_rejects_far_outlier():
    # a 200 mm jump inside the window stays outside the consensus band
    depth = DepthImage(np.full((20, 20), 1.0))
    depth.data[9, 9] = 1.2
    assert sample_depth_window(depth, (10, 10)) == pytest.approx(1.0)


def test_sample_depth_window_empty():
    depth = DepthImage(np.zeros((20, 20)))
    with pytest.raises(InvalidDepth):
        sample_depth_window(depth, (10, 10))


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=0.0, fy=600.0, cx=320.0, cy=240.0, width=640, height=480)
