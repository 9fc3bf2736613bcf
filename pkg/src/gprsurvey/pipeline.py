"""File-based stages: simulate -> migrate -> interpret -> register -> reconstruct -> evaluate.

Every stage reads the previous stage's files under one work directory and
writes its own, plus ``<stage>.json`` recording inputs, options and output
checksums. Outputs depend only on inputs and options, so rerunning a stage
reproduces identical files.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any

import numpy as np

from . import io
from .datasets import scan_line
from .domain import CrossSectionMask, PointCloud, denormalize_cloud, normalize_cloud
from .forward import NoiseSpec, corrupt_bscan, ground_truth_cloud, ground_truth_mask, synthesize_bscan, wave_velocity
from .metrics import iou, mse, pixel_accuracy, rmse_image, snr_db, ssim
from .migration import THRESHOLD, aggregate_bp, binarize, migrate
from .pointcloud import chamfer_distance, earth_movers, ifps, l1_centroid, register_masks

log = logging.getLogger(__name__)

STAGES = ("simulate", "migrate", "interpret", "register", "reconstruct", "evaluate")


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _record(work: Path, stage: str, info: dict[str, Any], outputs: list[Path]) -> dict:
    info = dict(info, stage=stage, outputs={str(p.relative_to(work)): sha256(p) for p in sorted(outputs)})
    (work / f"{stage}.json").write_text(json.dumps(info, sort_keys=True, indent=1) + "\n")
    return info


def _load_record(work: Path, stage: str) -> dict:
    path = work / f"{stage}.json"
    if not path.exists():
        raise FileNotFoundError(f"{path}: stage '{stage}' has not been run")
    return json.loads(path.read_text())


def _lines(work: Path, sub: str, suffix: str) -> list[Path]:
    files = sorted((work / sub).glob(f"line_*{suffix}"))
    if not files:
        raise FileNotFoundError(f"{work / sub}: no line_*{suffix} files")
    return files


def simulate(config: Path, work: Path, seed: int = 0, noise: str | None = None) -> dict:
    """Synthesize one B-scan per scan line plus ground-truth masks and cloud."""
    slab, antenna, survey = io.parse_slab_config(Path(config).read_text(), config)
    seed = survey.get("seed", seed)
    offsets = survey.get("line_offsets")
    if offsets is None:
        n = survey["scan_lines"]
        offsets = [slab.dims[1] * (k + 1) / (n + 1) for k in range(n)]
    for sub in ("bscans", "truth"):
        (work / sub).mkdir(parents=True, exist_ok=True)
    outputs = []
    v = wave_velocity(slab)
    for k, y in enumerate(offsets):
        poses = scan_line(float(y), float(slab.dims[0]), antenna.trace_spacing)
        b = synthesize_bscan(slab, antenna, poses)
        if noise:
            b = corrupt_bscan(b, NoiseSpec.parse(noise, seed + k))
        mask = ground_truth_mask(slab, poses, antenna, grid=(antenna.trace_spacing, v * antenna.dt / 2), shape=(b.n_samples, b.n_traces))
        bp, mp = work / "bscans" / f"line_{k:03d}.gprb", work / "truth" / f"line_{k:03d}.pgm"
        io.write_bscan(bp, b)
        io.write_pgm(mp, mask)
        outputs += [bp, mp, io._sidecar(mp)]
    cp = work / "truth" / "cloud.ply"
    io.write_ply(cp, ground_truth_cloud(slab, seed=seed))
    outputs.append(cp)
    info = {"config": str(config), "seed": seed, "noise": noise, "velocity": v, "line_offsets": list(map(float, offsets))}
    return _record(work, "simulate", info, outputs)


def migrate_stage(work: Path) -> dict:
    """Full-resolution back projection, envelope and normalization per line."""
    v = _load_record(work, "simulate")["velocity"]
    (work / "migrated").mkdir(exist_ok=True)
    outputs = []
    for path in _lines(work, "bscans", ".gprb"):
        img = migrate(io.read_bscan(path), v)
        out = work / "migrated" / (path.stem + ".pgm")
        io.write_pgm(out, img)
        outputs += [out, io._sidecar(out)]
    return _record(work, "migrate", {"velocity": v}, outputs)


def _pad_to(arr: np.ndarray, multiple: int) -> np.ndarray:
    h, w = arr.shape[-2:]
    ph, pw = (-h) % multiple, (-w) % multiple
    return np.pad(arr, [(0, 0)] * (arr.ndim - 2) + [(0, ph), (0, pw)])


def interpret(work: Path, mode: str = "classical", threshold: float = THRESHOLD, params_path: Path | None = None) -> dict:
    """Binary cross-section per line, from the migrated image or from MigrationNet."""
    (work / "masks").mkdir(exist_ok=True)
    outputs = []
    info: dict[str, Any] = {"mode": mode, "threshold": threshold}
    if mode == "classical":
        for path in _lines(work, "migrated", ".pgm"):
            mask = binarize(io.read_pgm(path), threshold)
            out = work / "masks" / path.name
            io.write_pgm(out, mask)
            outputs += [out, io._sidecar(out)]
    elif mode == "net":
        from .nn.nets import Architecture, migration_net_tensor, prepare_stack

        if params_path is None:
            raise ValueError("net mode needs --params")
        params = io.read_params(params_path)
        if params.spec.architecture is not Architecture.MIGRATION_NET:
            raise io.FormatError(params_path, "architecture", "expected migration_net parameters")
        f = params.spec.downsample_factor
        v = _load_record(work, "simulate")["velocity"]
        info["params"] = sha256(params_path)
        for path in _lines(work, "bscans", ".gprb"):
            b = io.read_bscan(path)
            z = aggregate_bp(b, v)
            x = _pad_to(prepare_stack(z, params.spec), 8)
            prob = migration_net_tensor(params, x[None]).data[0]
            m, n = z.channels[0].shape
            # back to the full grid: nearest upsampling of the reduced-resolution output
            full = np.repeat(np.repeat(prob, f, axis=0), f, axis=1)
            full = np.pad(full, ((0, max(0, m - full.shape[0])), (0, max(0, n - full.shape[1]))), mode="edge")[:m, :n]
            ref = z.channels[0]
            mask = CrossSectionMask((full > threshold).astype(np.uint8), ref.dx, ref.dz, ref.origin, ref.frame)
            out = work / "masks" / (path.stem + ".pgm")
            io.write_pgm(out, mask)
            outputs += [out, io._sidecar(out)]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return _record(work, "interpret", info, outputs)


def register(work: Path) -> dict:
    """Lift all foreground pixels into one 3D cloud using each line's poses."""
    masks, poses = [], []
    for path in _lines(work, "masks", ".pgm"):
        masks.append(io.read_pgm(path))
        poses.append(io.read_bscan(work / "bscans" / (path.stem + ".gprb")).poses)
    cloud = register_masks(masks, poses)
    (work / "cloud").mkdir(exist_ok=True)
    out = work / "cloud" / "registered.ply"
    io.write_ply(out, cloud)
    return _record(work, "register", {"points": len(cloud)}, [out])


def reconstruct(work: Path, ifps_k: int = 1500, params_path: Path | None = None) -> dict:
    """IFPS-downsample the registered cloud and optionally complete it with GPRNet."""
    cloud = io.read_ply(work / "cloud" / "registered.ply")
    if len(cloud) == 0:
        raise ValueError(f"{work / 'cloud' / 'registered.ply'}: registered cloud is empty")
    info: dict[str, Any] = {"ifps_k": ifps_k}
    if params_path is not None:
        from .nn.nets import Architecture, gpr_net_forward

        params = io.read_params(params_path)
        if params.spec.architecture is not Architecture.GPR_NET:
            raise io.FormatError(params_path, "architecture", "expected gpr_net parameters")
        k = params.spec.input_points
        info["params"] = sha256(params_path)
    else:
        k = ifps_k
    if k > len(cloud):
        if params_path is not None:
            raise ValueError(f"network needs {k} points but the registered cloud has {len(cloud)}")
        log.warning("IFPS size %d exceeds the %d registered points; using all of them", k, len(cloud))
        k = len(cloud)
    info["sampled"] = k
    sparse = ifps(cloud, k)
    outputs = [work / "cloud" / "sparse.ply", work / "cloud" / "dense.ply"]
    io.write_ply(outputs[0], sparse)
    if params_path is not None:
        norm, center, scale = normalize_cloud(sparse)
        dense = denormalize_cloud(gpr_net_forward(params, norm), center, scale)
    else:
        dense = sparse
    io.write_ply(outputs[1], dense)
    return _record(work, "reconstruct", info, outputs)


def _finite(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def image_metrics(pred, truth) -> dict[str, Any]:
    try:
        snr = snr_db(pred, truth)
    except ValueError:
        snr = math.inf
    return {
        "iou": iou(pred, truth),
        "pixel_acc": pixel_accuracy(pred, truth),
        "mse": mse(pred, truth),
        "rmse": rmse_image(pred, truth),
        "snr_db": _finite(snr),
        "ssim": ssim(pred, truth),
    }


def cloud_metrics(pred: PointCloud, truth: PointCloud) -> dict[str, Any]:
    e = earth_movers(pred, truth)
    return {"cd": chamfer_distance(pred, truth), "emd": e.value, "emd_exact": e.exact, "l1": l1_centroid(pred, truth)}


def _write_report(out: Path, records: list[dict]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.jsonl").write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))
    lines = []
    for r in records:
        vals = "  ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in sorted(r.items()) if k != "item")
        lines.append(f"{r['item']:<24} {vals}")
    (out / "report.txt").write_text("\n".join(lines) + "\n")


def evaluate(work: Path, out: Path | None = None) -> list[dict]:
    """Score masks against ground truth per line, and the dense cloud against the truth cloud."""
    records = []
    for path in _lines(work, "masks", ".pgm"):
        truth = io.read_pgm(work / "truth" / path.name)
        records.append({"item": path.stem, **image_metrics(io.read_pgm(path), truth)})
    dense = work / "cloud" / "dense.ply"
    if dense.exists():
        records.append({"item": "cloud", **cloud_metrics(io.read_ply(dense), io.read_ply(work / "truth" / "cloud.ply"))})
    _write_report(out or work / "report", records)
    return records


def evaluate_files(pred: Path, truth: Path, out: Path) -> list[dict]:
    """Direct comparison of two PGM images or two point-cloud files."""
    if str(pred).endswith(".pgm"):
        rec = {"item": Path(pred).name, **image_metrics(io.read_pgm(pred), io.read_pgm(truth))}
    else:
        rec = {"item": Path(pred).name, **cloud_metrics(io.read_cloud(pred), io.read_cloud(truth))}
    _write_report(out, [rec])
    return [rec]
