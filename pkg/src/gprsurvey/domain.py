"""Core data types shared by the survey, imaging and reconstruction code.

Conventions
-----------
* SI units everywhere (meters, seconds, radians).
* Slab frame: x along the slab length, y along its width, z up. The slab top
  surface is z = 0, so buried objects have negative z.
* Image grids are (rows, cols) = (depth, lateral). Row ``j`` sits at depth
  ``origin[1] + j * dz`` and column ``i`` at lateral coordinate
  ``origin[0] + i * dx`` along the scan line.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 2.998e8


def wrap_angle(theta: float) -> float:
    """Map an angle into (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AScan:
    """One radar trace: amplitude samples at ``t0 + j * dt``."""

    samples: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        samples = _frozen_array(self.samples)
        if samples.ndim != 1 or samples.size < 2:
            raise ValueError("an A-scan needs at least 2 samples")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("A-scan samples must be finite")
        object.__setattr__(self, "samples", samples)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class Pose:
    """Planar robot pose (x, y, heading) with a fixed antenna height z."""

    x: float
    y: float
    z: float = 0.0
    heading: float = 0.0
    timestamp: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "z", "heading", "timestamp"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"pose {name} must be finite")
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.x, self.y, self.z, self.heading, self.timestamp)


@dataclass(frozen=True)
class BScan:
    """A line of A-scans, each tagged with the pose it was recorded at."""

    traces: tuple[AScan, ...]
    poses: tuple[Pose, ...]
    spacing: float

    def __post_init__(self):
        traces = tuple(self.traces)
        poses = tuple(self.poses)
        if len(traces) == 0:
            raise ValueError("a B-scan needs at least one trace")
        if len(traces) != len(poses):
            raise ValueError(f"trace/pose count mismatch: {len(traces)} traces, {len(poses)} poses")
        first = traces[0]
        for k, tr in enumerate(traces):
            if len(tr) != len(first) or tr.dt != first.dt or tr.t0 != first.t0:
                raise ValueError(f"trace {k} does not share M, dt, t0 with trace 0")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        stamps = [p.timestamp for p in poses]
        if any(b < a for a, b in zip(stamps, stamps[1:])):
            raise ValueError("pose timestamps must be monotone within a survey")
        object.__setattr__(self, "traces", traces)
        object.__setattr__(self, "poses", poses)

    @classmethod
    def from_array(cls, data: np.ndarray, dt: float, poses: Sequence[Pose], spacing: float, t0: float = 0.0) -> "BScan":
        """Build from an (M, N) array whose columns are traces."""
        data = np.asarray(data, dtype=float)
        traces = tuple(AScan(data[:, i], dt, t0) for i in range(data.shape[1]))
        return cls(traces, tuple(poses), spacing)

    @property
    def n_traces(self) -> int:
        return len(self.traces)

    @property
    def n_samples(self) -> int:
        return len(self.traces[0])

    @property
    def dt(self) -> float:
        return self.traces[0].dt

    @property
    def t0(self) -> float:
        return self.traces[0].t0

    def as_array(self) -> np.ndarray:
        """(M, N) sample matrix, one column per trace."""
        return np.stack([tr.samples for tr in self.traces], axis=1)

    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.poses])

    def subset(self, indices: Sequence[int]) -> "BScan":
        idx = list(indices)
        return BScan(tuple(self.traces[i] for i in idx), tuple(self.poses[i] for i in idx), self.spacing)


class Material(str, Enum):
    PEC = "PEC"
    PVC = "PVC"
    COPPER = "copper"


@dataclass(frozen=True)
class PipeSpec:
    """Finite cylinder: axis runs from ``anchor`` to ``anchor + length * direction``."""

    anchor: np.ndarray
    direction: np.ndarray
    radius: float
    length: float
    material: Material = Material.PEC

    def __post_init__(self):
        anchor = _frozen_array(self.anchor)
        direction = np.array(self.direction, dtype=float)
        if anchor.shape != (3,) or direction.shape != (3,):
            raise ValueError("anchor and direction must be 3-vectors")
        norm = np.linalg.norm(direction)
        if not norm > 0:
            raise ValueError("pipe direction must be nonzero")
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"pipe direction must be a unit vector (norm {norm})")
        direction = _frozen_array(direction / norm)
        if not self.radius > 0:
            raise ValueError("pipe radius must be positive")
        if not self.length > 0:
            raise ValueError("pipe length must be positive")
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "direction", direction)
        object.__setattr__(self, "material", Material(self.material))

    @property
    def end(self) -> np.ndarray:
        return self.anchor + self.length * self.direction

    @property
    def slope(self) -> float:
        """Plan-view slope dy/dx of the axis (inf for pipes along y)."""
        dx, dy = self.direction[0], self.direction[1]
        return math.inf if dx == 0 else dy / dx

    @property
    def lateral_area(self) -> float:
        return 2.0 * math.pi * self.radius * self.length

    def axis_distance(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Distance from each point to the axis segment and the clamped axis parameter."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = pts - self.anchor
        s = rel @ self.direction
        s_clamped = np.clip(s, 0.0, self.length)
        closest = self.anchor + s_clamped[:, None] * self.direction
        return np.linalg.norm(pts - closest, axis=1), s_clamped

    def surface_distance(self, points: np.ndarray) -> np.ndarray:
        """Exact distance from each point to the lateral surface of the cylinder."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = pts - self.anchor
        s = rel @ self.direction
        radial = np.linalg.norm(rel - s[:, None] * self.direction, axis=1)
        overshoot = np.maximum(0.0, np.maximum(-s, s - self.length))
        return np.hypot(overshoot, radial - self.radius)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = pts - self.anchor
        s = rel @ self.direction
        radial = np.linalg.norm(rel - s[:, None] * self.direction, axis=1)
        return (radial <= self.radius) & (s >= 0.0) & (s <= self.length)

    def extent(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounds of the lateral surface."""
        ends = np.stack([self.anchor, self.end])
        half = self.radius * np.sqrt(np.clip(1.0 - self.direction**2, 0.0, None))
        return ends.min(axis=0) - half, ends.max(axis=0) + half


@dataclass(frozen=True)
class SlabModel:
    """Concrete slab occupying x in [0, L], y in [0, W], z in [-T, 0]."""

    dims: np.ndarray
    rel_permittivity: float = 7.0
    conductivity: float = 0.01
    rel_permeability: float = 1.0
    pipes: tuple[PipeSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        dims = _frozen_array(self.dims)
        if dims.shape != (3,) or not np.all(dims > 0):
            raise ValueError("slab dims must be three positive lengths")
        if not self.rel_permittivity >= 1:
            raise ValueError("relative permittivity must be >= 1")
        object.__setattr__(self, "dims", dims)
        pipes = tuple(self.pipes)
        lo_box, hi_box = self.bounds
        for k, pipe in enumerate(pipes):
            lo, hi = pipe.extent()
            if np.any(lo < lo_box - 1e-9) or np.any(hi > hi_box + 1e-9):
                raise ValueError(f"pipe {k} extends outside the slab")
        object.__setattr__(self, "pipes", pipes)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        L, W, T = self.dims
        return np.array([0.0, 0.0, -T]), np.array([L, W, 0.0])

    def inside(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        lo, hi = self.bounds
        pts = np.atleast_2d(points)
        return np.all((pts >= lo - tol) & (pts <= hi + tol), axis=1)


@dataclass(frozen=True)
class ScanFrame:
    """Vertical imaging plane under a straight scan line."""

    start: tuple[float, float] = (0.0, 0.0)
    direction: tuple[float, float] = (1.0, 0.0)

    def lateral(self, x: float, y: float) -> float:
        return (x - self.start[0]) * self.direction[0] + (y - self.start[1]) * self.direction[1]

    def point(self, lateral: np.ndarray, depth: np.ndarray) -> np.ndarray:
        lateral = np.asarray(lateral, dtype=float)
        depth = np.asarray(depth, dtype=float)
        x = self.start[0] + lateral * self.direction[0]
        y = self.start[1] + lateral * self.direction[1]
        return np.stack(np.broadcast_arrays(x, y, -depth), axis=-1)

    @classmethod
    def from_poses(cls, poses: Sequence[Pose]) -> "ScanFrame":
        p0, p1 = poses[0], poses[-1]
        dx, dy = p1.x - p0.x, p1.y - p0.y
        norm = math.hypot(dx, dy)
        if norm == 0:
            return cls((p0.x, p0.y), (1.0, 0.0))
        return cls((p0.x, p0.y), (dx / norm, dy / norm))


@dataclass(frozen=True)
class MigrationImage:
    """Non-negative energy map on a (depth, lateral) grid."""

    grid: np.ndarray
    dx: float
    dz: float
    origin: tuple[float, float] = (0.0, 0.0)
    frame: ScanFrame = ScanFrame()

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 2:
            raise ValueError("grid must be 2-D")
        if not np.all(np.isfinite(grid)) or np.any(grid < 0):
            raise ValueError("migration image entries must be finite and non-negative")
        if not (self.dx > 0 and self.dz > 0):
            raise ValueError("cell sizes must be positive")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    def depths(self) -> np.ndarray:
        return self.origin[1] + self.dz * np.arange(self.grid.shape[0])

    def laterals(self) -> np.ndarray:
        return self.origin[0] + self.dx * np.arange(self.grid.shape[1])

    def with_grid(self, grid: np.ndarray) -> "MigrationImage":
        return MigrationImage(grid, self.dx, self.dz, self.origin, self.frame)


@dataclass(frozen=True)
class CrossSectionMask:
    """Binary interpretation of one imaging plane (1 = inside a pipe)."""

    grid: np.ndarray
    dx: float
    dz: float
    origin: tuple[float, float] = (0.0, 0.0)
    frame: ScanFrame = ScanFrame()

    def __post_init__(self):
        grid = np.asarray(self.grid)
        if grid.ndim != 2:
            raise ValueError("grid must be 2-D")
        if not np.all((grid == 0) | (grid == 1)):
            raise ValueError("mask must be binary")
        object.__setattr__(self, "grid", grid.astype(np.uint8))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


def normalize_cloud(cloud: PointCloud) -> tuple[PointCloud, np.ndarray, np.ndarray]:
    """Shift and scale a cloud to zero mean and unit (n-1) variance per axis.

    Returns the normalized cloud with the ``center`` and ``scale`` needed by
    :func:`denormalize_cloud`.
    """
    pts = cloud.points
    if len(cloud) < 2:
        raise ValueError("need at least 2 points to normalize")
    center = pts.mean(axis=0)
    scale = pts.std(axis=0, ddof=1)
    for axis, s in zip("xyz", scale):
        if not s > 0:
            raise ValueError(f"degenerate {axis} axis: zero variance")
    return PointCloud((pts - center) / scale), center, scale


def denormalize_cloud(cloud: PointCloud, center: np.ndarray, scale: np.ndarray) -> PointCloud:
    return PointCloud(cloud.points * np.asarray(scale) + np.asarray(center))


def apply_normalization(cloud: PointCloud, center: np.ndarray, scale: np.ndarray) -> PointCloud:
    """Map a cloud into a frame computed from another cloud."""
    return PointCloud((cloud.points - np.asarray(center)) / np.asarray(scale))
