"""Sensitivity of the focusing and end-to-end fidelity checks to the random slab.

Focusing: fraction of single thin-pipe slabs whose full-resolution BP argmax
lands within one cell of the pipe top. Fidelity: share of IFPS points within
2 cm of a pipe surface for 2-pipe slabs run through the classical pipeline.
"""

import argparse

import numpy as np

from gprsurvey.datasets import SlabConfig, line_offsets, random_slab, scan_line, simulate_lines
from gprsurvey.domain import PipeSpec, SlabModel
from gprsurvey.forward import AntennaConfig, synthesize_bscan, wave_velocity
from gprsurvey.migration import back_project, classical_interpret
from gprsurvey.pointcloud import distance_to_pipes, ifps, register_masks


def focusing(seed, radius, n=25):
    ant = AntennaConfig()
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n):
        depth, xp = rng.uniform(0.05, 0.15), rng.uniform(0.1, 0.25)
        slab = SlabModel((0.35, 0.25, 0.25), 7.0, pipes=(PipeSpec((xp, 0.0, -depth), (0.0, 1.0, 0.0), radius, 0.25),))
        img = back_project(synthesize_bscan(slab, ant, scan_line(0.1, 0.3, ant.trace_spacing)), wave_velocity(slab))
        i, j = np.unravel_index(np.argmax(img.grid), img.shape)
        hits += abs(i - round((depth - radius) / img.dz)) <= 1 and abs(j - round(xp / img.dx)) <= 1
    return hits


def fidelity(seed):
    cfg = SlabConfig(scan_lines=5, pipes_min=2, pipes_max=2)
    slab = random_slab(cfg, np.random.default_rng(seed))
    v = wave_velocity(slab)
    lines = simulate_lines(slab, line_offsets(cfg))
    cloud = register_masks([classical_interpret(b, v) for b, _ in lines], [b.poses for b, _ in lines])
    sparse = ifps(cloud, min(1500, len(cloud)))
    return float(np.mean(distance_to_pipes(sparse.points, slab.pipes) <= 0.02)), slab


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=8)
    args = ap.parse_args()
    for radius in (0.0005, 0.001, 0.002, 0.01):
        print(f"focusing r={1000 * radius:g} mm: " + " ".join(f"{focusing(s, radius)}/25" for s in range(args.seeds)))
    for s in range(args.seeds):
        frac, slab = fidelity(s)
        depths = ", ".join(f"{-p.anchor[2]:.3f}" for p in slab.pipes)
        print(f"fidelity seed {s}: {frac:.1%} within 2 cm (pipe depths {depths} m)")


if __name__ == "__main__":
    main()
