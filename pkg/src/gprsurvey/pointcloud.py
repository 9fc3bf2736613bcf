"""From cross-section masks to 3D clouds, farthest point sampling and cloud metrics."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from .domain import CrossSectionMask, PipeSpec, PointCloud, Pose

log = logging.getLogger(__name__)

IFPS_POINTS = 1500
EXACT_EMD_LIMIT = 256


def register_masks(
    masks: Sequence[CrossSectionMask],
    poses_per_mask: Sequence[Sequence[Pose]],
    v: float | None = None,
) -> PointCloud:
    """Lift every foreground pixel into 3D.

    Column ``i`` of a mask is placed at the pose interpolated at fractional
    index ``i * (P - 1) / (N - 1)`` of its scan line (exactly pose ``i`` when the
    mask has one column per trace); row ``j`` maps to z = -(origin_z + j * dz).
    ``v`` is accepted for symmetry with the imaging calls: the masks already
    carry metric depth spacing.
    """
    if len(masks) != len(poses_per_mask):
        raise ValueError(f"{len(masks)} masks but {len(poses_per_mask)} pose sequences")
    chunks = []
    for k, (mask, poses) in enumerate(zip(masks, poses_per_mask)):
        if len(poses) < 2:
            raise ValueError(f"mask {k}: need at least 2 poses, got {len(poses)}")
        rows, cols = np.nonzero(mask.grid)
        if rows.size == 0:
            continue
        n_cols = mask.grid.shape[1]
        xy = np.array([[p.x, p.y] for p in poses])
        frac = np.arange(len(poses)) if n_cols == 1 else np.linspace(0, len(poses) - 1, n_cols)
        at = frac[cols]
        x = np.interp(at, np.arange(len(poses)), xy[:, 0])
        y = np.interp(at, np.arange(len(poses)), xy[:, 1])
        z = -(mask.origin[1] + rows * mask.dz)
        chunks.append(np.stack([x, y, z], axis=1))
    if not chunks:
        return PointCloud(np.zeros((0, 3)))
    return PointCloud(np.concatenate(chunks))


def ifps_indices(points: np.ndarray, k: int, start_index: int = 0) -> np.ndarray:
    """Greedy farthest point order; ties go to the lowest index."""
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    if n == 0:
        raise ValueError("empty cloud")
    if k > n:
        raise ValueError(f"cannot sample {k} points from {n}")
    chosen = np.empty(k, dtype=int)
    chosen[0] = start_index
    dist = np.linalg.norm(pts - pts[start_index], axis=1)
    for m in range(1, k):
        nxt = int(np.argmax(dist))
        chosen[m] = nxt
        np.minimum(dist, np.linalg.norm(pts - pts[nxt], axis=1), out=dist)
    return chosen


def ifps(cloud: PointCloud, k: int = IFPS_POINTS, start_index: int = 0) -> PointCloud:
    return PointCloud(cloud.points[ifps_indices(cloud.points, k, start_index)])


def _nonempty(*clouds):
    for c in clouds:
        if len(c) == 0:
            raise ValueError("empty point cloud")


def _pts(cloud) -> np.ndarray:
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)


def chamfer_distance(pred, truth) -> float:
    """Mean nearest-neighbor distance pred->truth plus truth->pred (unsquared)."""
    a, b = PointCloud(_pts(pred)), PointCloud(_pts(truth))
    _nonempty(a, b)
    d_ab, _ = cKDTree(b.points).query(a.points)
    d_ba, _ = cKDTree(a.points).query(b.points)
    return float(d_ab.mean() + d_ba.mean())


def _pad_to(small: np.ndarray, large: np.ndarray) -> np.ndarray:
    """Repeat points of ``small`` until it matches ``large`` in size.

    The extra copies are the nearest ``small`` points of the ``large`` points
    that are worst served (largest nearest-neighbor distance, ties by index).
    """
    extra = large.shape[0] - small.shape[0]
    d, idx = cKDTree(small).query(large)
    order = np.lexsort((np.arange(d.size), -d))[:extra]
    return np.concatenate([small, small[idx[order]]])


@dataclass(frozen=True)
class EmdResult:
    value: float
    exact: bool


def _balanced_groups(points: np.ndarray, leaf: int) -> list[np.ndarray]:
    """Recursive median split along the widest axis into groups of at most ``leaf`` indices."""
    stack, out = [np.arange(len(points))], []
    while stack:
        idx = stack.pop()
        if len(idx) <= leaf:
            out.append(idx)
            continue
        axis = int(np.argmax(np.ptp(points[idx], axis=0)))
        order = idx[np.argsort(points[idx, axis], kind="stable")]
        half = len(idx) // 2
        stack += [order[:half], order[half:]]
    return out


def _solve_block(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    rows, cols = linear_sum_assignment(np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2))
    out = np.empty(len(a), dtype=int)
    out[rows] = cols
    return out


def _block_assignment(a: np.ndarray, b: np.ndarray, leaf: int = EXACT_EMD_LIMIT, rounds: int = 8, seed: int = 0) -> np.ndarray:
    """Approximate minimum-cost matching for large equal-size clouds.

    Both clouds are split together by balanced bisection along the widest
    axis and each block is matched exactly. Refinement rounds then regroup the
    matched pairs by their midpoints in a randomly rotated frame and re-solve
    every group exactly, which never increases the total cost.
    """
    n = len(a)
    match = np.empty(n, dtype=int)
    stack = [(np.arange(n), np.arange(n))]
    while stack:
        ia, ib = stack.pop()
        if len(ia) <= leaf:
            match[ia] = ib[_solve_block(a[ia], b[ib])]
            continue
        axis = int(np.argmax(np.ptp(np.concatenate([a[ia], b[ib]]), axis=0)))
        oa = ia[np.argsort(a[ia, axis], kind="stable")]
        ob = ib[np.argsort(b[ib, axis], kind="stable")]
        half = len(ia) // 2
        stack += [(oa[:half], ob[:half]), (oa[half:], ob[half:])]
    rng = np.random.default_rng(seed)
    for _ in range(rounds):
        rot = Rotation.random(random_state=rng).as_matrix()
        mid = 0.5 * (a + b[match]) @ rot.T
        for g in _balanced_groups(mid, leaf):
            match[g] = match[g][_solve_block(a[g], b[match[g]])]
    return match


def earth_movers(pred, truth, exact_limit: int = EXACT_EMD_LIMIT, rounds: int = 8) -> EmdResult:
    """Average matched distance under a one-to-one assignment.

    Up to ``exact_limit`` points the optimal assignment is solved exactly
    (Hungarian); above that :func:`_block_assignment` gives an upper bound and
    the result is flagged as approximate. Unequal clouds are padded, see
    :func:`_pad_to`.
    """
    a, b = _pts(pred), _pts(truth)
    _nonempty(PointCloud(a), PointCloud(b))
    if a.shape[0] < b.shape[0]:
        a = _pad_to(a, b)
    elif b.shape[0] < a.shape[0]:
        b = _pad_to(b, a)
    n = a.shape[0]
    if n <= exact_limit:
        cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
        rows, cols = linear_sum_assignment(cost)
        return EmdResult(float(cost[rows, cols].mean()), True)
    assign = _block_assignment(a, b, exact_limit, rounds)
    value = float(np.linalg.norm(a - b[assign], axis=1).mean())
    log.info("EMD over %d points uses the block-matching approximation", n)
    return EmdResult(value, False)


def emd(pred, truth) -> float:
    return earth_movers(pred, truth).value


def l1_centroid(cloud_pred, cloud_truth) -> float:
    """Difference of the clouds' mean distances to their own centroids."""
    a, b = _pts(cloud_pred), _pts(cloud_truth)
    _nonempty(PointCloud(a), PointCloud(b))
    spread_a = np.linalg.norm(a - a.mean(axis=0), axis=1).mean()
    spread_b = np.linalg.norm(b - b.mean(axis=0), axis=1).mean()
    return float(abs(spread_a - spread_b))


def distance_to_pipes(points: np.ndarray, pipes: Sequence[PipeSpec]) -> np.ndarray:
    """Distance from each point to the nearest pipe's lateral surface."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if not pipes:
        return np.full(pts.shape[0], np.inf)
    return np.min([p.surface_distance(pts) for p in pipes], axis=0)
