"""Omni-directional survey robot: mecanum kinematics, coverage paths, pose tagging."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import Pose, wrap_angle


@dataclass(frozen=True)
class RobotGeometry:
    wheel_radius: float
    l1: float
    l2: float
    roller_angle: float = math.pi / 4

    def __post_init__(self):
        if not (self.wheel_radius > 0 and self.l1 > 0 and self.l2 > 0):
            raise ValueError("wheel radius and chassis dimensions must be positive")
        t = math.tan(self.roller_angle)
        if not math.isfinite(t) or t == 0:
            raise ValueError("roller angle must have a finite, nonzero tangent")


@dataclass(frozen=True)
class WheelCommand:
    w1: float
    w2: float
    w3: float
    w4: float

    def __post_init__(self):
        if not all(math.isfinite(w) for w in (self.w1, self.w2, self.w3, self.w4)):
            raise ValueError("wheel speeds must be finite")


@dataclass(frozen=True)
class SurveyPlan:
    width: float
    length: float
    grid_resolution: float
    speed: float = 0.5

    def __post_init__(self):
        if not (self.width > 0 and self.length > 0 and self.grid_resolution > 0):
            raise ValueError("survey dimensions must be positive")
        if self.grid_resolution > min(self.width, self.length):
            raise ValueError("grid resolution exceeds the survey area")
        if not self.speed > 0:
            raise ValueError("speed must be positive")

    @property
    def n_passes(self) -> int:
        return int(math.floor(self.width / self.grid_resolution + 1e-9)) + 1


def body_velocity(geom: RobotGeometry, cmd: WheelCommand) -> tuple[float, float, float]:
    """Chassis velocity (v_x, v_y, omega) from the four wheel speeds."""
    R = geom.wheel_radius
    w1, w2, w3, w4 = cmd.w1, cmd.w2, cmd.w3, cmd.w4
    vx = R / 4 * (w1 + w2 + w3 + w4)
    vy = R / 4 * (-w1 + w2 - w3 + w4)
    omega = R / (4 * (geom.l2 * math.tan(geom.roller_angle) + geom.l1)) * (-w1 + w2 + w3 - w4)
    return vx, vy, omega


def wheel_speeds(geom: RobotGeometry, vx: float, vy: float, omega: float) -> WheelCommand:
    """Inverse of :func:`body_velocity`."""
    R = geom.wheel_radius
    k = geom.l2 * math.tan(geom.roller_angle) + geom.l1
    return WheelCommand(
        (vx - vy - k * omega) / R,
        (vx + vy + k * omega) / R,
        (vx - vy + k * omega) / R,
        (vx + vy - k * omega) / R,
    )


def integrate_pose(pose: Pose, vx: float, vy: float, omega: float, dt: float) -> Pose:
    """One odometry step; the heading is advanced first and the new heading rotates the body velocity."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    theta = pose.heading + omega * dt
    c, s = math.cos(theta), math.sin(theta)
    x = pose.x + vx * c * dt - vy * s * dt
    y = pose.y + vx * s * dt + vy * c * dt
    return Pose(x, y, pose.z, theta, pose.timestamp + dt)


def plan_zigzag(plan: SurveyPlan) -> list[Pose]:
    """Boustrophedon waypoints: passes along x, stepped across y."""
    waypoints = []
    for k in range(plan.n_passes):
        y = min(k * plan.grid_resolution, plan.width)
        xs = (0.0, plan.length) if k % 2 == 0 else (plan.length, 0.0)
        waypoints.extend(Pose(x, y) for x in xs)
    return waypoints


def _shortest_arc(a: float, b: float, frac: float) -> float:
    return wrap_angle(a + frac * wrap_angle(b - a))


def tag_gpr_with_pose(gpr_timestamps: Sequence[float], pose_stream: Sequence[Pose]) -> list[Pose]:
    """Interpolate the pose stream at each GPR sampling time.

    Position is interpolated linearly, heading along the shortest arc. Raises
    ``ValueError`` naming the first GPR timestamp outside the pose span.
    """
    stamps = np.array([p.timestamp for p in pose_stream], dtype=float)
    if stamps.size == 0:
        raise ValueError("empty pose stream")
    if np.any(np.diff(stamps) <= 0):
        raise ValueError("pose timestamps must be strictly increasing")
    tags = []
    for k, t in enumerate(gpr_timestamps):
        if t < stamps[0] or t > stamps[-1]:
            raise ValueError(f"GPR timestamp {k} ({t}) outside pose span [{stamps[0]}, {stamps[-1]}]")
        hi = int(np.searchsorted(stamps, t, side="left"))
        if stamps[hi] == t:
            p = pose_stream[hi]
            tags.append(Pose(p.x, p.y, p.z, p.heading, float(t)))
            continue
        a, b = pose_stream[hi - 1], pose_stream[hi]
        frac = (t - stamps[hi - 1]) / (stamps[hi] - stamps[hi - 1])
        tags.append(Pose(
            a.x + frac * (b.x - a.x),
            a.y + frac * (b.y - a.y),
            a.z + frac * (b.z - a.z),
            _shortest_arc(a.heading, b.heading, frac),
            float(t),
        ))
    return tags


def mean_rse(truth: Sequence[Pose], estimate: Sequence[Pose]) -> float:
    """Root of the mean squared position error between two trajectories."""
    if len(truth) != len(estimate):
        raise ValueError(f"length mismatch: {len(truth)} vs {len(estimate)}")
    if len(truth) == 0:
        raise ValueError("empty trajectories")
    a = np.array([p.position for p in truth])
    b = np.array([p.position for p in estimate])
    return float(np.sqrt(np.sum((a - b) ** 2) / len(truth)))


def _path_samples(plan: SurveyPlan, rate: float):
    """Sample the zig-zag path at ``rate`` Hz; yields (x, y, t, pass index or -1)."""
    wps = plan_zigzag(plan)
    step = plan.speed / rate
    xs, ys, labels = [], [], []
    for k in range(len(wps) - 1):
        a, b = wps[k], wps[k + 1]
        seg = math.hypot(b.x - a.x, b.y - a.y)
        n = max(1, int(round(seg / step)))
        label = k // 2 if k % 2 == 0 else -1
        # passes own both ends; turn segments only their interior
        for i in range(0 if label >= 0 else 1, n):
            f = i / n
            xs.append(a.x + f * (b.x - a.x))
            ys.append(a.y + f * (b.y - a.y))
            labels.append(label)
        if label >= 0:
            xs.append(b.x)
            ys.append(b.y)
            labels.append(label)
    x = np.clip(np.array(xs), 0.0, plan.length)
    y = np.clip(np.array(ys), 0.0, plan.width)
    t = np.arange(x.size) / rate
    return x, y, t, np.array(labels)


def simulate_survey(
    plan: SurveyPlan,
    pose_noise_std: float = 0.009,
    rate: float = 100.0,
    seed: int = 0,
) -> tuple[list[Pose], list[Pose]]:
    """True zig-zag poses sampled at ``rate`` Hz and noisy position estimates.

    The estimate stands in for visual positioning: truth plus isotropic
    Gaussian error in x and y with the given standard deviation.
    """
    if pose_noise_std < 0:
        raise ValueError("pose noise must be non-negative")
    x, y, t, _ = _path_samples(plan, rate)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, pose_noise_std, size=(x.size, 2)) if pose_noise_std > 0 else np.zeros((x.size, 2))
    truth = [Pose(float(a), float(b), 0.0, 0.0, float(c)) for a, b, c in zip(x, y, t)]
    est = [Pose(float(a + n[0]), float(b + n[1]), 0.0, 0.0, float(c)) for a, b, c, n in zip(x, y, t, noise)]
    return truth, est


def survey_passes(
    plan: SurveyPlan,
    pose_noise_std: float = 0.009,
    rate: float = 100.0,
    seed: int = 0,
) -> list[tuple[list[Pose], list[Pose]]]:
    """:func:`simulate_survey` split into its straight passes (turn segments dropped)."""
    truth, est = simulate_survey(plan, pose_noise_std, rate, seed)
    _, _, _, labels = _path_samples(plan, rate)
    passes = []
    for k in range(plan.n_passes):
        idx = np.flatnonzero(labels == k)
        passes.append(([truth[i] for i in idx], [est[i] for i in idx]))
    return passes
