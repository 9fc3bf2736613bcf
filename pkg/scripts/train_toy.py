"""Overfit the desk-scale networks on a handful of synthetic slabs.

    python scripts/train_toy.py migration --iterations 300
    python scripts/train_toy.py gpr --iterations 2000
"""

import argparse
import logging
import time

import numpy as np

from gprsurvey import io, metrics
from gprsurvey.datasets import SlabConfig, line_offsets, random_slab, simulate_lines
from gprsurvey.domain import apply_normalization, normalize_cloud
from gprsurvey.forward import AntennaConfig, ground_truth_cloud, wave_velocity
from gprsurvey.migration import aggregate_bp, downsample
from gprsurvey.nn import NetSpec, TrainConfig, gpr_net_forward, init_params, migration_net_forward, train
from gprsurvey.pointcloud import chamfer_distance, ifps, register_masks


def run_migration(args):
    ant = AntennaConfig(time_window=2.5e-9, samples_per_trace=128)
    cfg = SlabConfig(length=0.64, width=0.3, pipes_min=1, pipes_max=2, radius_range=(0.02, 0.03), depth_range=(0.04, 0.09), scan_lines=1)
    rng = np.random.default_rng(args.seed)
    data = []
    for _ in range(args.samples):
        slab = random_slab(cfg, rng)
        ((b, mask),) = simulate_lines(slab, [0.15], ant, traces=128)
        data.append((aggregate_bp(b, wave_velocity(slab)), mask))
    spec = NetSpec("migration_net", args.width, seed=args.seed, input_scale=0.25)
    lr = 0.05 if args.lr is None else args.lr
    params, curve = train(spec, data, TrainConfig(lr=lr, iterations=args.iterations, class_weights=(3.0, 1.0), log_every=args.log_every))
    for k, (z, mask) in enumerate(data):
        pred = migration_net_forward(params, z).grid > 0.5
        target = downsample(mask.grid.astype(float), spec.downsample_factor) >= 0.5
        print(f"sample {k}: IoU {metrics.iou(pred, target):.3f}")
    return params, curve


def run_gpr(args):
    cfg = SlabConfig(scan_lines=5, pipes_min=2, pipes_max=2)
    slab = random_slab(cfg, np.random.default_rng(args.seed))
    lines = simulate_lines(slab, line_offsets(cfg))
    cloud = register_masks([m for _, m in lines], [b.poses for b, _ in lines])
    sparse, center, scale = normalize_cloud(ifps(cloud, args.points))
    target = apply_normalization(ground_truth_cloud(slab), center, scale)
    spec = NetSpec("gpr_net", args.width, seed=args.seed, input_points=args.points)
    before = chamfer_distance(gpr_net_forward(init_params(spec), sparse), target)
    lr = 0.03 if args.lr is None else args.lr
    params, curve = train(spec, [(sparse, target)], TrainConfig(lr=lr, iterations=args.iterations, log_every=args.log_every))
    after = chamfer_distance(gpr_net_forward(params, sparse), target)
    print(f"chamfer {before:.4f} -> {after:.4f} ({before / after:.1f}x)")
    return params, curve


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("net", choices=["migration", "gpr"])
    ap.add_argument("--iterations", type=int, default=300)
    ap.add_argument("--lr", type=float)
    ap.add_argument("--width", type=float, default=1 / 16)
    ap.add_argument("--samples", type=int, default=4)
    ap.add_argument("--points", type=int, default=128)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--log-every", type=int, default=50)
    ap.add_argument("--out", help="write trained parameters here")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    t = time.perf_counter()
    params, curve = run_migration(args) if args.net == "migration" else run_gpr(args)
    print(f"loss {curve[0]:.4f} -> {curve[-1]:.4f} in {time.perf_counter() - t:.1f}s")
    if args.out:
        io.write_params(args.out, params)


if __name__ == "__main__":
    main()
