import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.distance import pdist

from gprsurvey.domain import CrossSectionMask, PipeSpec, PointCloud, Pose
from gprsurvey.pointcloud import (
    _block_assignment,
    _pad_to,
    chamfer_distance,
    distance_to_pipes,
    earth_movers,
    emd,
    ifps,
    ifps_indices,
    l1_centroid,
    register_masks,
)


def chamfer_oracle(a, b):
    def one_way(p, q):
        return sum(min(math.dist(x, y) for y in q) for x in p) / len(p)

    return one_way(a.tolist(), b.tolist()) + one_way(b.tolist(), a.tolist())


def emd_oracle(a, b):
    best = math.inf
    for perm in itertools.permutations(range(len(b))):
        best = min(best, sum(math.dist(a[i], b[j]) for i, j in enumerate(perm)))
    return best / len(a)


def ifps_oracle(points, k, start=0):
    """Greedy trace by explicit set distances."""
    chosen = [start]
    while len(chosen) < k:
        best, best_d = None, -1.0
        for i in range(len(points)):
            d = min(math.dist(points[i], points[c]) for c in chosen)
            if d > best_d:
                best, best_d = i, d
        chosen.append(best)
    return chosen


class TestRegister:
    def _line(self, y=0.0, n=5, spacing=0.01):
        return [Pose(i * spacing, y, timestamp=i) for i in range(n)]

    def test_empty_masks(self):
        mask = CrossSectionMask(np.zeros((4, 5)), 0.01, 0.002)
        assert len(register_masks([mask], [self._line()])) == 0

    def test_single_pixel(self):
        grid = np.zeros((6, 5), dtype=np.uint8)
        grid[0, 3] = 1
        grid[4, 1] = 1
        mask = CrossSectionMask(grid, 0.01, 0.002)
        cloud = register_masks([mask], [self._line(y=0.2)])
        pts = sorted(map(tuple, cloud.points))
        assert pts == pytest.approx([(0.01, 0.2, -0.008), (0.03, 0.2, 0.0)])

    def test_two_lines_over_pipe(self):
        grid = np.zeros((10, 5), dtype=np.uint8)
        grid[5:7, 2] = 1
        masks = [CrossSectionMask(grid, 0.01, 0.002)] * 2
        cloud = register_masks(masks, [self._line(0.05), self._line(0.15)])
        ys = cloud.points[:, 1]
        c0 = cloud.points[ys < 0.1].mean(axis=0)
        c1 = cloud.points[ys > 0.1].mean(axis=0)
        assert abs((c1 - c0)[1] - 0.1) <= 0.01
        assert abs((c1 - c0)[0]) <= 0.01

    def test_count_mismatch(self):
        mask = CrossSectionMask(np.zeros((2, 2)), 1.0, 1.0)
        with pytest.raises(ValueError):
            register_masks([mask, mask], [self._line()])


class TestIFPS:
    def test_three_points(self):
        pts = np.array([[0.0, 0, 0], [0.4, 0, 0], [1.0, 0, 0]])
        assert sorted(ifps_indices(pts, 2).tolist()) == [0, 2]

    def test_collinear_order(self):
        pts = np.array([[x, 0.0, 0.0] for x in (0, 0.25, 0.5, 0.75, 1.0)])
        assert pts[ifps_indices(pts, 3), 0].tolist() == [0.0, 1.0, 0.5]

    def test_whole_cloud(self, rng):
        pts = rng.random((30, 3))
        idx = ifps_indices(pts, 30)
        assert sorted(idx.tolist()) == list(range(30))

    def test_ties_lowest_index(self):
        pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [-1.0, 0, 0]])
        assert ifps_indices(pts, 2).tolist() == [0, 1]

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_greedy_oracle(self, seed):
        pts = np.random.default_rng(seed).random((40, 3))
        assert ifps_indices(pts, 12).tolist() == ifps_oracle(pts.tolist(), 12)

    def test_rejects_k(self):
        with pytest.raises(ValueError):
            ifps(PointCloud(np.zeros((3, 3))), 4)

    def test_spread_beats_random(self, rng):
        pts = rng.random((1000, 3))
        sub = ifps(PointCloud(pts), 100).points
        minima = [pdist(pts[rng.choice(1000, 100, replace=False)]).min() for _ in range(100)]
        assert pdist(sub).min() >= np.median(minima)


class TestChamfer:
    def test_identical(self, rng):
        a = rng.random((10, 3))
        assert chamfer_distance(a, a) == 0.0

    def test_unit(self):
        assert chamfer_distance(np.array([[0.0, 0, 0]]), np.array([[1.0, 0, 0]])) == 2.0

    @pytest.mark.parametrize("seed", range(3))
    def test_brute_force(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.random((20, 3)), r.random((30, 3))
        assert chamfer_distance(a, b) == pytest.approx(chamfer_oracle(a, b), abs=1e-12)

    def test_empty(self):
        with pytest.raises(ValueError, match="empty"):
            chamfer_distance(np.zeros((0, 3)), np.zeros((2, 3)))

    @given(arrays(np.float64, (6, 3), elements=st.floats(-5, 5)), arrays(np.float64, (4, 3), elements=st.floats(-5, 5)))
    def test_symmetric(self, a, b):
        assert chamfer_distance(a, b) == pytest.approx(chamfer_distance(b, a), abs=1e-12)


class TestEMD:
    def test_identical(self, rng):
        a = rng.random((10, 3))
        assert emd(a, a) == 0.0

    def test_unit(self):
        assert emd(np.array([[0.0, 0, 0]]), np.array([[1.0, 0, 0]])) == 1.0

    @pytest.mark.parametrize("seed", range(3))
    def test_brute_force_8(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.random((8, 3)), r.random((8, 3))
        res = earth_movers(a, b)
        assert res.exact
        assert res.value == pytest.approx(emd_oracle(a, b), abs=1e-12)

    def test_padding(self):
        small = np.array([[0.0, 0, 0], [1.0, 0, 0]])
        large = np.array([[0.0, 0, 0], [1.0, 0, 0], [1.0, 0.5, 0]])
        padded = _pad_to(small, large)
        assert padded.shape == (3, 3)
        assert padded[2].tolist() == [1.0, 0.0, 0.0]
        assert emd(small, large) == pytest.approx(0.5 / 3)

    def test_block_assignment_is_permutation_and_near_optimal(self, rng):
        a, b = rng.normal(size=(600, 3)), rng.normal(size=(600, 3)) + 0.3
        m = _block_assignment(a, b, leaf=128)
        assert sorted(m.tolist()) == list(range(600))
        approx = np.linalg.norm(a - b[m], axis=1).mean()
        exact = earth_movers(a, b, exact_limit=1000).value
        assert exact <= approx <= 1.05 * exact

    def test_large_flagged_approximate(self, rng):
        a = rng.random((300, 3))
        res = earth_movers(a, a + 0.01)
        assert not res.exact
        assert res.value == pytest.approx(0.01 * math.sqrt(3), rel=1e-9)

    @given(arrays(np.float64, (5, 3), elements=st.floats(-5, 5)), arrays(np.float64, (5, 3), elements=st.floats(-5, 5)))
    def test_bounded_by_identity_matching(self, a, b):
        assert emd(a, b) <= np.linalg.norm(a - b, axis=1).mean() + 1e-12
        assert emd(a, b) >= 0.5 * chamfer_distance(a, b) - 1e-12


class TestL1:
    def test_identical(self, rng):
        a = rng.random((20, 3))
        assert l1_centroid(a, a) == 0.0

    def test_spheres(self, rng):
        u = rng.normal(size=(20000, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        v = rng.normal(size=(20000, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        assert l1_centroid(u, 2 * v) == pytest.approx(1.0, abs=0.02)

    @given(arrays(np.float64, (7, 3), elements=st.floats(-5, 5)), st.tuples(*[st.floats(-100, 100)] * 3))
    def test_translation_invariant(self, a, shift):
        b = a[::-1] * 1.5
        assert l1_centroid(a + np.array(shift), b) == pytest.approx(l1_centroid(a, b), abs=1e-9)


def test_distance_to_pipes():
    pipes = [
        PipeSpec((0.1, 0.0, -0.05), (0.0, 1.0, 0.0), 0.01, 0.2),
        PipeSpec((0.3, 0.0, -0.05), (0.0, 1.0, 0.0), 0.02, 0.2),
    ]
    d = distance_to_pipes(np.array([[0.1, 0.1, 0.0], [0.3, 0.1, -0.1]]), pipes)
    np.testing.assert_allclose(d, [0.04, 0.03])
    assert np.isinf(distance_to_pipes(np.zeros((1, 3)), []))[0]
