"""Synthetic GPR data: ray/Ricker B-scans, ground-truth masks and clouds, corruption."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np

from .domain import (
    SPEED_OF_LIGHT,
    BScan,
    CrossSectionMask,
    MigrationImage,
    PointCloud,
    Pose,
    ScanFrame,
    SlabModel,
)

DEFAULT_ATTENUATION = 2.0  # Np/m
MIN_SPREADING_DISTANCE = 0.01  # m
GT_CLOUD_POINTS = 8096


@dataclass(frozen=True)
class AntennaConfig:
    center_frequency: float = 2e9
    tx_rx_offset: float = 0.05
    time_window: float = 5e-9
    trace_spacing: float = 0.005
    samples_per_trace: int = 256

    def __post_init__(self):
        if not all(v > 0 for v in (self.center_frequency, self.tx_rx_offset, self.time_window, self.trace_spacing)):
            raise ValueError("antenna parameters must be positive")
        if self.samples_per_trace < 16:
            raise ValueError("need at least 16 samples per trace")

    @property
    def dt(self) -> float:
        return self.time_window / self.samples_per_trace


class NoiseKind(str, Enum):
    GAUSSIAN = "gaussian"
    SALT_PEPPER = "salt_pepper"
    SPECKLE = "speckle"


@dataclass(frozen=True)
class NoiseSpec:
    kind: NoiseKind
    level: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if not 0.0 <= self.level <= 1.0:
            raise ValueError(f"noise level must be in [0, 1], got {self.level}")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "NoiseSpec":
        """Parse ``kind:level`` as used on the command line."""
        kind, _, level = text.partition(":")
        return cls(NoiseKind(kind), float(level), seed)


def wave_velocity(slab: SlabModel) -> float:
    """EM propagation speed c / sqrt(eps_r) in a low-loss medium."""
    if slab.rel_permittivity < 1:
        raise ValueError("relative permittivity must be >= 1")
    return SPEED_OF_LIGHT / math.sqrt(slab.rel_permittivity)


def ricker(t: np.ndarray, center_frequency: float) -> np.ndarray:
    """Ricker wavelet with unit peak at t = 0."""
    a = (math.pi * center_frequency * np.asarray(t)) ** 2
    return (1.0 - 2.0 * a) * np.exp(-a)


def synthesize_bscan(
    slab: SlabModel,
    antenna: AntennaConfig,
    poses: Sequence[Pose],
    attenuation: float = DEFAULT_ATTENUATION,
    d_min: float = MIN_SPREADING_DISTANCE,
) -> BScan:
    """Ray-model B-scan over the slab's pipes.

    Each pipe contributes one Ricker wavelet per trace, delayed by the two-way
    travel time to the nearest point of its surface and scaled by geometric
    spreading and exponential attenuation. The antenna pair is treated as a
    single monostatic point at the pose.
    """
    poses = list(poses)
    if not poses:
        raise ValueError("no poses to synthesize")
    for k, pipe in enumerate(slab.pipes):
        lo, hi = pipe.extent()
        if hi[2] > 0:
            raise ValueError(f"pipe {k} intersects the slab surface")
    v = wave_velocity(slab)
    M = antenna.samples_per_trace
    dt = antenna.dt
    t = dt * np.arange(M)
    positions = np.array([p.position for p in poses])
    data = np.zeros((M, len(poses)))
    max_range = v * antenna.time_window / 2
    for pipe in slab.pipes:
        axis_d, _ = pipe.axis_distance(positions)
        d = np.maximum(axis_d - pipe.radius, 0.0)
        amp = np.exp(-attenuation * d) / np.maximum(d, d_min)
        delay = 2.0 * d / v
        visible = d <= max_range
        data[:, visible] += amp[visible] * ricker(t[:, None] - delay[visible], antenna.center_frequency)
    return BScan.from_array(data, dt, poses, antenna.trace_spacing)


def ground_truth_mask(
    slab: SlabModel,
    scan_line: Sequence[Pose],
    antenna: AntennaConfig,
    grid: tuple[float, float] | None = None,
    shape: tuple[int, int] | None = None,
) -> CrossSectionMask:
    """Rasterize the pipes' cross-sections in the vertical plane under a scan line.

    Pixel centers are tested for membership in each finite cylinder, which
    yields circles for perpendicular crossings and ellipses with semi-major
    axis r / |cos(gamma)| for oblique ones. ``grid`` defaults to the migration
    grid of a B-scan over the line: (trace spacing, v * dt / 2).
    """
    poses = list(scan_line)
    frame = ScanFrame.from_poses(poses)
    v = wave_velocity(slab)
    if grid is None:
        grid = (antenna.trace_spacing, v * antenna.dt / 2)
    dx, dz = grid
    if shape is None:
        line_len = frame.lateral(poses[-1].x, poses[-1].y)
        n_cols = int(round(line_len / dx)) + 1
        n_rows = int(round(v * antenna.time_window / 2 / dz))
        shape = (n_rows, n_cols)
    rows, cols = shape
    depth = dz * np.arange(rows)
    lateral = dx * np.arange(cols)
    pts = frame.point(lateral[None, :], depth[:, None]).reshape(-1, 3)
    mask = np.zeros(rows * cols, dtype=bool)
    for pipe in slab.pipes:
        mask |= pipe.contains(pts)
    return CrossSectionMask(mask.reshape(rows, cols).astype(np.uint8), dx, dz, (0.0, 0.0), frame)


def _allocate(total: int, weights: np.ndarray) -> np.ndarray:
    """Largest-remainder split of ``total`` proportional to ``weights``."""
    share = total * weights / weights.sum()
    counts = np.floor(share).astype(int)
    rest = total - counts.sum()
    order = np.argsort(-(share - counts), kind="stable")
    counts[order[:rest]] += 1
    return counts


def _orthonormal(direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([0.0, 0.0, 1.0]) if abs(direction[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(direction, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(direction, e1)


def ground_truth_cloud(slab: SlabModel, count: int = GT_CLOUD_POINTS, seed: int = 0) -> PointCloud:
    """Uniform samples on the pipes' lateral surfaces, split by surface area."""
    if not slab.pipes:
        raise ValueError("slab has no pipes")
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    counts = _allocate(count, np.array([p.lateral_area for p in slab.pipes]))
    chunks = []
    for pipe, n in zip(slab.pipes, counts):
        e1, e2 = _orthonormal(pipe.direction)
        s = rng.uniform(0.0, pipe.length, n)
        phi = rng.uniform(0.0, 2.0 * math.pi, n)
        radial = pipe.radius * (np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2)
        chunks.append(pipe.anchor + s[:, None] * pipe.direction + radial)
    return PointCloud(np.concatenate(chunks))


ImageLike = Union[MigrationImage, np.ndarray]


def _corrupt_array(arr: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    out = np.array(arr, dtype=float, copy=True)
    if spec.level == 0:
        return out
    if spec.kind is NoiseKind.GAUSSIAN:
        out += rng.normal(0.0, math.sqrt(spec.level), out.shape)
    elif spec.kind is NoiseKind.SALT_PEPPER:
        lo, hi = float(arr.min()), float(arr.max())
        u = rng.random(out.shape)
        out[u < spec.level / 2] = lo
        out[(u >= spec.level / 2) & (u < spec.level)] = hi
    elif spec.kind is NoiseKind.SPECKLE:
        out *= 1.0 + rng.normal(0.0, math.sqrt(spec.level), out.shape)
    else:  # pragma: no cover - NoiseKind is closed
        raise ValueError(f"unknown noise kind {spec.kind}")
    return out


def corrupt_image(img: ImageLike, spec: NoiseSpec) -> ImageLike:
    """Gaussian (additive, variance = level), salt & pepper (density = level) or
    speckle (multiplicative, variance = level) noise.

    A :class:`MigrationImage` is clipped back to non-negative values so the
    result is still a valid energy map; plain arrays are returned unclipped.
    """
    if not isinstance(spec, NoiseSpec):
        raise TypeError("spec must be a NoiseSpec")
    if isinstance(img, MigrationImage):
        return img.with_grid(np.clip(_corrupt_array(img.grid, spec), 0.0, None))
    return _corrupt_array(np.asarray(img, dtype=float), spec)


def corrupt_bscan(bscan: BScan, spec: NoiseSpec) -> BScan:
    """Apply image noise to the raw sample matrix, with levels relative to its peak amplitude."""
    data = bscan.as_array()
    peak = float(np.max(np.abs(data)))
    if peak == 0:
        peak = 1.0
    noisy = _corrupt_array(data / peak, spec) * peak
    return BScan.from_array(noisy, bscan.dt, bscan.poses, bscan.spacing, bscan.t0)


def corrupt_cloud(cloud: PointCloud, std: float, seed: int = 0) -> PointCloud:
    """Per-coordinate Gaussian jitter with standard deviation ``std``."""
    if std < 0:
        raise ValueError("std must be non-negative")
    if std == 0:
        return PointCloud(cloud.points.copy())
    rng = np.random.default_rng(seed)
    return PointCloud(cloud.points + rng.normal(0.0, std, cloud.points.shape))
