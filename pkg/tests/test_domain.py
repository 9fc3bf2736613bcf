import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gprsurvey.domain import (
    AScan,
    BScan,
    CrossSectionMask,
    MigrationImage,
    PipeSpec,
    PointCloud,
    Pose,
    ScanFrame,
    SlabModel,
    apply_normalization,
    denormalize_cloud,
    normalize_cloud,
    wrap_angle,
)


@pytest.mark.parametrize(
    "theta, expected",
    [(0.0, 0.0), (math.pi, math.pi), (-math.pi, math.pi), (3 * math.pi, math.pi), (2 * math.pi + 0.5, 0.5), (-0.5, -0.5)],
)
def test_wrap_angle(theta, expected):
    assert wrap_angle(theta) == pytest.approx(expected, abs=1e-12)


@given(st.floats(-100, 100))
def test_wrap_angle_range(theta):
    w = wrap_angle(theta)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(theta), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(theta), abs_tol=1e-9)


def test_ascan_validation():
    a = AScan(np.arange(4.0), dt=0.5, t0=1.0)
    np.testing.assert_allclose(a.times, [1.0, 1.5, 2.0, 2.5])
    with pytest.raises(ValueError):
        AScan(np.array([1.0]), dt=1.0)
    with pytest.raises(ValueError):
        AScan(np.zeros(4), dt=0.0)
    with pytest.raises(ValueError):
        AScan(np.array([0.0, np.nan]), dt=1.0)
    with pytest.raises(ValueError):
        a.samples[0] = 3.0


def test_pose_heading_normalized():
    assert Pose(0, 0, heading=3 * math.pi).heading == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        Pose(float("nan"), 0)


def _poses(n, t0=0.0):
    return [Pose(0.005 * i, 0.0, 0.0, 0.0, t0 + 0.01 * i) for i in range(n)]


def test_bscan_rejects_mismatched_counts():
    data = np.zeros((8, 3))
    with pytest.raises(ValueError, match="mismatch"):
        BScan.from_array(data, 1e-10, _poses(2), 0.005)


def test_bscan_rejects_mixed_traces():
    traces = (AScan(np.zeros(8), 1e-10), AScan(np.zeros(9), 1e-10))
    with pytest.raises(ValueError):
        BScan(traces, tuple(_poses(2)), 0.005)
    traces = (AScan(np.zeros(8), 1e-10), AScan(np.zeros(8), 2e-10))
    with pytest.raises(ValueError):
        BScan(traces, tuple(_poses(2)), 0.005)


def test_bscan_rejects_nonmonotone_time():
    poses = _poses(3)
    poses[2] = Pose(0.01, 0, 0, 0, -1.0)
    with pytest.raises(ValueError, match="monotone"):
        BScan.from_array(np.zeros((4, 3)), 1e-10, poses, 0.005)


def test_bscan_array_roundtrip(rng):
    data = rng.normal(size=(16, 5))
    b = BScan.from_array(data, 1e-11, _poses(5), 0.005, t0=2e-11)
    assert (b.n_samples, b.n_traces) == (16, 5)
    np.testing.assert_array_equal(b.as_array(), data)
    sub = b.subset([0, 4])
    np.testing.assert_array_equal(sub.as_array(), data[:, [0, 4]])
    assert sub.t0 == 2e-11
    with pytest.raises(ValueError, match="monotone"):
        b.subset([4, 0])


def test_pipe_geometry():
    p = PipeSpec((0.1, 0.0, -0.05), (0.0, 1.0, 0.0), 0.01, 0.25)
    d, s = p.axis_distance(np.array([[0.1, 0.1, 0.0], [0.13, 0.3, -0.05]]))
    np.testing.assert_allclose(d, [0.05, math.hypot(0.03, 0.05)])
    np.testing.assert_allclose(s, [0.1, 0.25])
    np.testing.assert_allclose(p.surface_distance(np.array([[0.1, 0.1, 0.0]])), [0.04])
    assert p.contains(np.array([[0.105, 0.1, -0.05]]))[0]
    assert not p.contains(np.array([[0.1, 0.3, -0.05]]))[0]
    assert p.slope == math.inf
    assert PipeSpec((0.1, 0.05, -0.05), (0.6, 0.8, 0.0), 0.01, 0.1).slope == pytest.approx(4 / 3)
    assert p.lateral_area == pytest.approx(2 * math.pi * 0.01 * 0.25)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(radius=0.0),
        dict(length=-1.0),
        dict(direction=(0.0, 2.0, 0.0)),
    ],
)
def test_pipe_invariants(kwargs):
    base = dict(anchor=(0.1, 0.0, -0.05), direction=(0.0, 1.0, 0.0), radius=0.01, length=0.2)
    base.update(kwargs)
    with pytest.raises(ValueError):
        PipeSpec(**base)


def test_slab_rejects_pipes_outside():
    pipe = PipeSpec((0.1, 0.0, -0.05), (0.0, 1.0, 0.0), 0.01, 0.3)
    with pytest.raises(ValueError, match="outside"):
        SlabModel((0.35, 0.25, 0.25), pipes=(pipe,))
    with pytest.raises(ValueError):
        SlabModel((0.35, 0.25, 0.25), rel_permittivity=0.5)
    with pytest.raises(ValueError):
        SlabModel((0.35, 0.0, 0.25))


def test_scan_frame():
    frame = ScanFrame.from_poses([Pose(1.0, 1.0), Pose(1.0, 3.0)])
    assert frame.direction == pytest.approx((0.0, 1.0))
    assert frame.lateral(1.0, 2.5) == pytest.approx(1.5)
    np.testing.assert_allclose(frame.point(1.5, 0.2), [1.0, 2.5, -0.2])


def test_image_types_validate():
    with pytest.raises(ValueError):
        MigrationImage(np.array([[-1.0]]), 1.0, 1.0)
    with pytest.raises(ValueError):
        MigrationImage(np.array([[np.inf]]), 1.0, 1.0)
    with pytest.raises(ValueError):
        CrossSectionMask(np.array([[0, 2]]), 1.0, 1.0)
    m = CrossSectionMask(np.array([[0, 1]]), 1.0, 1.0)
    assert m.grid.dtype == np.uint8


def test_point_cloud_validates():
    assert len(PointCloud(np.zeros((0, 3)))) == 0
    with pytest.raises(ValueError):
        PointCloud(np.array([[0.0, np.nan, 0.0]]))
    with pytest.raises(ValueError):
        PointCloud(np.zeros((4, 2)))


def test_normalize_two_points():
    cloud = PointCloud(np.array([[0.0, 0.0, 0.0], [2.0, 1.0, -1.0]]))
    out, center, scale = normalize_cloud(cloud)
    np.testing.assert_allclose(out.points.mean(axis=0), 0.0, atol=1e-15)
    np.testing.assert_allclose(out.points.var(axis=0, ddof=1), 1.0)
    assert center[0] == 1.0


def test_normalize_idempotent(rng):
    once, _, _ = normalize_cloud(PointCloud(rng.normal(size=(50, 3)) * 3 + 1))
    twice, center, scale = normalize_cloud(once)
    np.testing.assert_allclose(twice.points, once.points, atol=1e-12)
    np.testing.assert_allclose(center, 0.0, atol=1e-12)
    np.testing.assert_allclose(scale, 1.0, atol=1e-12)


def test_normalize_statistics_second_pass(rng):
    pts = rng.uniform(-5, 5, size=(1000, 3)) * [1.0, 0.1, 7.0]
    out, _, _ = normalize_cloud(PointCloud(pts))
    # independent two-pass statistics with plain Python sums
    for axis in range(3):
        col = out.points[:, axis].tolist()
        mean = math.fsum(col) / len(col)
        var = math.fsum((v - mean) ** 2 for v in col) / (len(col) - 1)
        assert abs(mean) < 1e-12
        assert var == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("axis, name", [(0, "x"), (1, "y"), (2, "z")])
def test_normalize_degenerate_axis(axis, name):
    pts = np.random.default_rng(0).normal(size=(10, 3))
    pts[:, axis] = 4.0
    with pytest.raises(ValueError, match=name):
        normalize_cloud(PointCloud(pts))


@given(arrays(np.float64, (12, 3), elements=st.floats(-1e3, 1e3)))
def test_normalize_roundtrip(pts):
    if np.any(np.ptp(pts, axis=0) < 1e-3):
        return
    out, center, scale = normalize_cloud(PointCloud(pts))
    back = denormalize_cloud(out, center, scale)
    np.testing.assert_allclose(back.points, pts, atol=1e-9)
    np.testing.assert_allclose(apply_normalization(PointCloud(pts), center, scale).points, out.points, atol=1e-12)
