"""Command line: ``gprsurvey dataset | pipeline | train``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io, pipeline
from .datasets import SlabConfig, line_offsets, random_slab, simulate_lines
from .domain import apply_normalization, normalize_cloud
from .forward import AntennaConfig, ground_truth_cloud, wave_velocity
from .migration import THRESHOLD

log = logging.getLogger("gprsurvey")


def cmd_dataset(config_path: Path | None, out: Path, seed: int | None = None) -> Path:
    """Generate ``count`` random slabs with B-scans, masks and clouds under ``out``.

    Layout: ``slab_XXX/{slab.cfg, line_YYY.gprb, line_YYY.pgm(.json), cloud.ply}``
    and ``manifest.json`` listing every file with its SHA-256.
    """
    cfg = SlabConfig() if config_path is None else io.parse_dataclass_config(SlabConfig, Path(config_path).read_text(), config_path)
    if seed is not None:
        cfg = SlabConfig(**{**cfg.__dict__, "seed": seed})
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    antenna = AntennaConfig()
    files: list[Path] = []
    slabs = []
    for i in range(cfg.count):
        slab = random_slab(cfg, rng)
        d = out / f"slab_{i:03d}"
        d.mkdir(exist_ok=True)
        offsets = line_offsets(cfg)
        (d / "slab.cfg").write_text(io.format_slab_config(slab, antenna, {"line_offsets": list(map(float, offsets))}))
        files.append(d / "slab.cfg")
        for k, (b, mask) in enumerate(simulate_lines(slab, offsets, antenna)):
            io.write_bscan(d / f"line_{k:03d}.gprb", b)
            io.write_pgm(d / f"line_{k:03d}.pgm", mask)
            files += [d / f"line_{k:03d}.gprb", d / f"line_{k:03d}.pgm", d / f"line_{k:03d}.pgm.json"]
        io.write_ply(d / "cloud.ply", ground_truth_cloud(slab, cfg.gt_points, seed=cfg.seed + i))
        files.append(d / "cloud.ply")
        slabs.append({"dir": d.name, "pipes": len(slab.pipes), "velocity": wave_velocity(slab)})
    manifest = {
        "config": {k: list(v) if isinstance(v, tuple) else v for k, v in cfg.__dict__.items()},
        "slabs": slabs,
        "files": {str(f.relative_to(out)): pipeline.sha256(f) for f in sorted(files)},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return path


def _dataset_pairs(root: Path, arch: str, spec):
    """Training pairs from a generated dataset directory."""
    from .migration import aggregate_bp

    manifest = json.loads((root / "manifest.json").read_text())
    pairs = []
    for entry in manifest["slabs"]:
        d = root / entry["dir"]
        if arch == "migration_net":
            mult = 8 * spec.downsample_factor
            for bp in sorted(d.glob("line_*.gprb")):
                z = aggregate_bp(io.read_bscan(bp), entry["velocity"]).as_array()
                mask = io.read_pgm(bp.with_suffix(".pgm")).grid
                pairs.append((pipeline._pad_to(z, mult), pipeline._pad_to(mask, mult)))
        else:
            masks = [io.read_pgm(p) for p in sorted(d.glob("line_*.pgm"))]
            poses = [io.read_bscan(p).poses for p in sorted(d.glob("line_*.gprb"))]
            from .pointcloud import ifps, register_masks

            cloud = register_masks(masks, poses)
            if len(cloud) < spec.input_points:
                log.warning("%s: only %d registered points, skipped", d.name, len(cloud))
                continue
            norm, center, scale = normalize_cloud(ifps(cloud, spec.input_points))
            pairs.append((norm, apply_normalization(io.read_ply(d / "cloud.ply"), center, scale)))
    return pairs


def cmd_train(args) -> None:
    from .nn import NetSpec, TrainConfig, train

    spec = NetSpec(args.arch, args.width_multiplier, args.seed, args.ifps_k, args.input_scale)
    cfg = TrainConfig(lr=args.lr, iterations=args.iterations, seed=args.seed, batch_size=args.batch_size, log_every=max(1, args.iterations // 10))
    pairs = _dataset_pairs(Path(args.dataset), args.arch, spec)
    params, curve = train(spec, pairs, cfg)
    io.write_params(args.out, params)
    Path(str(args.out) + ".loss.txt").write_text("".join(f"{v!r}\n" for v in curve))
    print(f"trained {args.arch} on {len(pairs)} samples: loss {curve[0]:.4g} -> {curve[-1]:.4g}" if curve else "no iterations")


def cmd_pipeline(args) -> None:
    work = Path(args.out)
    stage = args.stage
    if stage == "simulate":
        if not args.config:
            raise SystemExit("simulate needs --config")
        work.mkdir(parents=True, exist_ok=True)
        info = pipeline.simulate(Path(args.config), work, args.seed, args.noise)
        print(f"simulate: {len(info['line_offsets'])} lines -> {work}")
    elif stage == "migrate":
        info = pipeline.migrate_stage(work)
        print(f"migrate: {len(info['outputs']) // 2} images")
    elif stage == "interpret":
        info = pipeline.interpret(work, args.mode, args.threshold, Path(args.params) if args.params else None)
        print(f"interpret ({args.mode}): {len(info['outputs']) // 2} masks")
    elif stage == "register":
        info = pipeline.register(work)
        print(f"register: {info['points']} points")
    elif stage == "reconstruct":
        info = pipeline.reconstruct(work, args.ifps_k, Path(args.params) if args.params else None)
        print(f"reconstruct: {info['sampled']} sampled points")
    elif stage == "evaluate":
        if args.pred or args.truth:
            if not (args.pred and args.truth):
                raise SystemExit("--pred and --truth go together")
            pipeline.evaluate_files(Path(args.pred), Path(args.truth), work)
            out = work
        else:
            pipeline.evaluate(work)
            out = work / "report"
        sys.stdout.write((out / "report.txt").read_text())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gprsurvey", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("dataset", help="generate random slabs, B-scans and ground truth")
    d.add_argument("--config", help="key=value slab-generation config")
    d.add_argument("--seed", type=int)
    d.add_argument("--out", required=True)

    q = sub.add_parser("pipeline", help="run one processing stage")
    q.add_argument("--stage", choices=pipeline.STAGES, required=True)
    q.add_argument("--config", help="slab config (simulate)")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", required=True, help="work directory (report directory for file evaluation)")
    q.add_argument("--mode", choices=("classical", "net"), default="classical")
    q.add_argument("--noise", help="kind:level, e.g. gaussian:0.1 (simulate)")
    q.add_argument("--threshold", type=float, default=THRESHOLD)
    q.add_argument("--ifps-k", type=int, default=1500)
    q.add_argument("--params", help="trained parameter file (net interpretation / reconstruction)")
    q.add_argument("--width-multiplier", type=float, default=1 / 16, help="unused outside training; kept for symmetry")
    q.add_argument("--pred", help="evaluate: predicted PGM/PLY/XYZ file")
    q.add_argument("--truth", help="evaluate: reference PGM/PLY/XYZ file")

    t = sub.add_parser("train", help="train a network on a generated dataset")
    t.add_argument("--arch", choices=("migration_net", "gpr_net"), required=True)
    t.add_argument("--dataset", required=True)
    t.add_argument("--out", required=True, help="parameter file to write")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--iterations", type=int, default=200)
    t.add_argument("--lr", type=float, default=5e-6)
    t.add_argument("--batch-size", type=int, default=4)
    t.add_argument("--width-multiplier", type=float, default=1 / 16)
    t.add_argument("--ifps-k", type=int, default=1500, help="GPRNet input size")
    t.add_argument("--input-scale", type=float, default=0.25, help="MigrationNet spatial input scale")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "dataset":
            path = cmd_dataset(Path(args.config) if args.config else None, Path(args.out), args.seed)
            print(f"dataset written: {path}")
        elif args.command == "pipeline":
            cmd_pipeline(args)
        else:
            cmd_train(args)
    except (ValueError, FileNotFoundError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
