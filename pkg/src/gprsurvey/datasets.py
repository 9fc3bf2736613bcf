"""Random slab generation and scan-line helpers shared by scripts, CLI and tests."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import BScan, CrossSectionMask, Material, PipeSpec, Pose, SlabModel
from .forward import AntennaConfig, ground_truth_mask, synthesize_bscan, wave_velocity


@dataclass(frozen=True)
class SlabConfig:
    """Ranges for randomized slabs.

    Pipes run across the slab (along y, optionally yawed by up to
    ``max_yaw`` radians) so that scan lines along x cross them. ``depth_range``
    bounds the depth of the pipe axis below the surface.
    """

    count: int = 4
    seed: int = 0
    length: float = 0.35
    width: float = 0.25
    thickness: float = 0.25
    pipes_min: int = 2
    pipes_max: int = 6
    radius_range: tuple[float, float] = (0.005, 0.015)
    depth_range: tuple[float, float] = (0.04, 0.12)
    max_yaw: float = 0.0
    rel_permittivity: float = 7.0
    conductivity: float = 0.01
    scan_lines: int = 3
    gt_points: int = 8096

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not 1 <= self.pipes_min <= self.pipes_max:
            raise ValueError("need 1 <= pipes_min <= pipes_max")
        for name in ("radius_range", "depth_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must satisfy 0 < low <= high")
        if self.depth_range[1] + self.radius_range[1] > self.thickness:
            raise ValueError("pipes could extend below the slab")
        if self.depth_range[0] <= self.radius_range[1]:
            raise ValueError("pipes could break the surface")
        if self.scan_lines < 1:
            raise ValueError("scan_lines must be >= 1")
        if not 0 <= self.max_yaw < math.pi / 3:
            raise ValueError("max_yaw must be in [0, pi/3)")


def random_slab(cfg: SlabConfig, rng: np.random.Generator, n_pipes: int | None = None, max_tries: int = 1000) -> SlabModel:
    """Slab with non-overlapping transverse pipes drawn from ``cfg``'s ranges."""
    n = int(rng.integers(cfg.pipes_min, cfg.pipes_max + 1)) if n_pipes is None else n_pipes
    pipes: list[PipeSpec] = []
    tries = 0
    while len(pipes) < n:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"could not place {n} pipes in {max_tries} tries")
        r = rng.uniform(*cfg.radius_range)
        depth = rng.uniform(*cfg.depth_range)
        yaw = rng.uniform(-cfg.max_yaw, cfg.max_yaw) if cfg.max_yaw > 0 else 0.0
        sin, cos = math.sin(yaw), math.cos(yaw)
        # the cap disks bulge by r*|sin| along y, so the axis is shortened to stay inside
        run = (cfg.width - 2 * r * abs(sin)) / cos
        drift = run * sin
        lo = r * cos + max(0.0, -drift)
        hi = cfg.length - r * cos - max(0.0, drift)
        if hi <= lo:
            continue
        anchor = (rng.uniform(lo, hi), r * abs(sin), -depth)
        cand = PipeSpec(anchor, (sin, cos, 0.0), r, run, Material.PEC)
        if any(_too_close(cand, p) for p in pipes):
            continue
        try:
            SlabModel((cfg.length, cfg.width, cfg.thickness), pipes=(cand,))
        except ValueError:
            continue
        pipes.append(cand)
    pipes.sort(key=lambda p: p.anchor[0])
    return SlabModel(
        (cfg.length, cfg.width, cfg.thickness),
        rel_permittivity=cfg.rel_permittivity,
        conductivity=cfg.conductivity,
        pipes=tuple(pipes),
    )


def _too_close(a: PipeSpec, b: PipeSpec, gap: float = 0.01) -> bool:
    # pipes are nearly parallel, so sampled axis separation is a fair test
    s = np.linspace(0.0, 1.0, 9)
    pa = a.anchor + (s * a.length)[:, None] * a.direction
    pb = b.anchor + (s * b.length)[:, None] * b.direction
    d = np.min(np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=2))
    return d < a.radius + b.radius + gap


def scan_line(y: float, length: float, spacing: float, speed: float = 0.5, x0: float = 0.0) -> list[Pose]:
    """Straight pass along +x at offset ``y``, one pose every ``spacing`` meters."""
    n = int(math.floor((length - x0) / spacing + 1e-9)) + 1
    xs = x0 + spacing * np.arange(n)
    return [Pose(float(x), y, 0.0, 0.0, float((x - x0) / speed)) for x in xs]


def line_offsets(cfg: SlabConfig) -> np.ndarray:
    """Evenly spread scan-line offsets across the slab width (edges excluded)."""
    return cfg.width * (np.arange(cfg.scan_lines) + 1) / (cfg.scan_lines + 1)


def simulate_lines(
    slab: SlabModel,
    offsets,
    antenna: AntennaConfig = AntennaConfig(),
    traces: int | None = None,
) -> list[tuple[BScan, CrossSectionMask]]:
    """B-scan and matching ground-truth mask (same M x N grid) for each line offset."""
    out = []
    length = slab.dims[0] if traces is None else antenna.trace_spacing * (traces - 1)
    v = wave_velocity(slab)
    for y in offsets:
        poses = scan_line(float(y), float(length), antenna.trace_spacing)
        b = synthesize_bscan(slab, antenna, poses)
        mask = ground_truth_mask(
            slab, poses, antenna, grid=(antenna.trace_spacing, v * antenna.dt / 2), shape=(b.n_samples, b.n_traces)
        )
        out.append((b, mask))
    return out
