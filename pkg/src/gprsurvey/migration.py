"""Classical GPR imaging: windowing, sparse back projection, envelope, thresholding."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import AScan, BScan, CrossSectionMask, MigrationImage, Pose, ScanFrame

WINDOW = 1024
RESOLUTIONS = (256, 128, 64)
THRESHOLD = 0.45


def crop_bscan(bscan: BScan, window: int = WINDOW) -> list[BScan]:
    """Split a long B-scan into ceil(N / window) windows of exactly ``window`` traces.

    Start offsets are evenly spaced and the last window ends on the final
    trace, so consecutive windows may overlap.
    """
    n = bscan.n_traces
    if n <= window:
        return [bscan]
    return [bscan.subset(range(s, s + window)) for s in window_starts(n, window)]


def window_starts(n: int, window: int = WINDOW) -> list[int]:
    if n <= window:
        return [0]
    q = math.ceil(n / window)
    return [int(math.floor(k * (n - window) / (q - 1) + 0.5)) for k in range(q)]


def sparse_indices(n: int, count: int) -> np.ndarray:
    """``count`` evenly spaced indices in [0, n-1], both ends included."""
    if count > n:
        raise ValueError(f"cannot pick {count} traces from {n}")
    if count < 1:
        raise ValueError("count must be >= 1")
    if count == 1:
        return np.array([0])
    return np.floor(np.linspace(0.0, n - 1, count) + 0.5).astype(int)


def sparse_sample(bscan: BScan, count: int) -> BScan:
    return bscan.subset(sparse_indices(bscan.n_traces, count))


def image_grid(bscan: BScan, v: float) -> MigrationImage:
    """Empty M x N migration grid matching a B-scan.

    Rows follow the trace samples (dz = v * dt / 2), columns follow the traces
    (dx = trace spacing) along the straight line through the first and last pose.
    """
    frame = ScanFrame.from_poses(bscan.poses)
    return MigrationImage(
        np.zeros((bscan.n_samples, bscan.n_traces)),
        dx=bscan.spacing,
        dz=v * bscan.dt / 2,
        origin=(0.0, v * bscan.t0 / 2),
        frame=frame,
    )


def _deposit(trace: AScan, lateral_pos: float, v: float, target: MigrationImage) -> np.ndarray:
    """Energy one trace adds to every cell of ``target``'s grid.

    Sample j is spread over the cells whose distance to the antenna is within
    half a cell diagonal of r_j = v * t_j / 2. Because r_j is evenly spaced the
    matching samples form a contiguous index range, summed with a prefix sum.
    """
    rows, cols = target.grid.shape
    half = 0.5 * math.hypot(target.dx, target.dz)
    r0 = v * trace.t0 / 2
    dr = v * trace.dt / 2
    depth = target.origin[1] + target.dz * np.arange(rows)
    lateral = target.origin[0] + target.dx * np.arange(cols)
    dist = np.hypot(depth[:, None], lateral[None, :] - lateral_pos)
    m = trace.samples.size
    lo = np.ceil((dist - half - r0) / dr - 1e-9).astype(np.int64)
    hi = np.floor((dist + half - r0) / dr + 1e-9).astype(np.int64)
    lo = np.clip(lo, 0, m)
    hi = np.clip(hi + 1, 0, m)
    csum = np.concatenate(([0.0], np.cumsum(np.abs(trace.samples))))
    return np.where(hi > lo, csum[hi] - csum[lo], 0.0)


def back_project_trace(trace: AScan, pose: Pose, v: float, target: MigrationImage) -> MigrationImage:
    """Add one A-scan's semicircular back projection to ``target`` (returns a new image)."""
    if not v > 0:
        raise ValueError("velocity must be positive")
    lateral_pos = target.frame.lateral(pose.x, pose.y)
    return target.with_grid(target.grid + _deposit(trace, lateral_pos, v, target))


def back_project(bscan: BScan, v: float, grid: MigrationImage | None = None) -> MigrationImage:
    """Sum of the back projections of every trace.

    Contributions are accumulated in order of lateral position (ties by trace
    index), so reordering the traces gives a bit-identical image.
    """
    target = image_grid(bscan, v) if grid is None else grid
    laterals = [target.frame.lateral(p.x, p.y) for p in bscan.poses]
    acc = target.grid.copy()
    for k in sorted(range(bscan.n_traces), key=lambda i: (laterals[i], i)):
        acc += _deposit(bscan.traces[k], laterals[k], v, target)
    return target.with_grid(acc)


@dataclass(frozen=True)
class StackedBpInput:
    """Three max-normalized BP channels from 256, 128 and 64 traces of one window."""

    channels: tuple[MigrationImage, MigrationImage, MigrationImage]
    source_window: tuple[int, int]
    raw_energy: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.channels) != 3:
            raise ValueError("expected three channels")
        shapes = {c.shape for c in self.channels}
        if len(shapes) != 1:
            raise ValueError(f"channels differ in shape: {shapes}")

    def as_array(self) -> np.ndarray:
        return np.stack([c.grid for c in self.channels])


def max_normalize(img: MigrationImage) -> MigrationImage:
    peak = img.grid.max()
    return img.with_grid(img.grid / peak if peak > 0 else img.grid.copy())


def aggregate_bp(
    bscan_window: BScan,
    v: float,
    grid: MigrationImage | None = None,
    resolutions: Sequence[int] = RESOLUTIONS,
    source_window: tuple[int, int] | None = None,
) -> StackedBpInput:
    """Sparse multi-resolution BP stack of one cropped window.

    Windows shorter than the largest resolution use every trace for that
    channel (the count is clamped to N).
    """
    n = bscan_window.n_traces
    if n < min(resolutions):
        raise ValueError(f"window has {n} traces, need at least {min(resolutions)}")
    target = image_grid(bscan_window, v) if grid is None else grid
    channels, energy = [], []
    for count in resolutions:
        img = back_project(sparse_sample(bscan_window, min(count, n)), v, target)
        energy.append(float(img.grid.sum()))
        channels.append(max_normalize(img))
    return StackedBpInput(tuple(channels), source_window or (0, n), tuple(energy))


def analytic_signal(x: np.ndarray, axis: int = 0) -> np.ndarray:
    """Analytic signal by zeroing negative frequencies and doubling positive ones."""
    x = np.asarray(x, dtype=float)
    n = x.shape[axis]
    spec = np.fft.fft(x, axis=axis)
    h = np.zeros(n)
    h[0] = 1.0
    if n % 2 == 0:
        h[n // 2] = 1.0
        h[1 : n // 2] = 2.0
    else:
        h[1 : (n + 1) // 2] = 2.0
    shape = [1] * x.ndim
    shape[axis] = n
    return np.fft.ifft(spec * h.reshape(shape), axis=axis)


def hilbert_envelope(img: MigrationImage) -> MigrationImage:
    """Per-column (depth axis) magnitude of the analytic signal."""
    if img.grid.shape[0] < 4:
        raise ValueError("need at least 4 rows for an envelope")
    return img.with_grid(np.abs(analytic_signal(img.grid, axis=0)))


def binarize(img: MigrationImage, threshold: float = THRESHOLD) -> CrossSectionMask:
    """Cells strictly above ``threshold`` become foreground."""
    g = img.grid
    if g.size and (g.min() < 0 or g.max() > 1):
        raise ValueError("image must be normalized to [0, 1] before binarization")
    return CrossSectionMask((g > threshold).astype(np.uint8), img.dx, img.dz, img.origin, img.frame)


def migrate(bscan: BScan, v: float) -> MigrationImage:
    """Full-resolution migration: every trace back-projected, envelope, max-normalized."""
    return max_normalize(hilbert_envelope(back_project(bscan, v)))


def classical_interpret(bscan: BScan, v: float, threshold: float = THRESHOLD) -> CrossSectionMask:
    """BP -> Hilbert envelope -> normalization -> threshold."""
    return binarize(migrate(bscan, v), threshold)


def downsample(arr: np.ndarray, factor: int, reduce: str = "mean") -> np.ndarray:
    """Block-reduce the last two axes by an integer factor (trailing cells dropped)."""
    if factor == 1:
        return np.array(arr, dtype=float)
    *lead, h, w = arr.shape
    h2, w2 = h // factor, w // factor
    blocks = np.asarray(arr, dtype=float)[..., : h2 * factor, : w2 * factor]
    blocks = blocks.reshape(*lead, h2, factor, w2, factor)
    if reduce == "max":
        return blocks.max(axis=(-3, -1))
    return blocks.mean(axis=(-3, -1))
