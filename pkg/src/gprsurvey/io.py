"""File formats: binary B-scans, PGM images with a JSON sidecar, PLY/XYZ clouds,
parameter files and key=value slab configs."""
from __future__ import annotations

import json
import struct
from dataclasses import fields
from pathlib import Path
from typing import Any

import numpy as np

from .domain import BScan, CrossSectionMask, Material, MigrationImage, PipeSpec, PointCloud, Pose, ScanFrame, SlabModel
from .forward import AntennaConfig

PathLike = str | Path


class FormatError(ValueError):
    """A file does not match its schema; the message names the file and field."""

    def __init__(self, path: PathLike, field: str, problem: str):
        super().__init__(f"{path}: {field}: {problem}")
        self.path = str(path)
        self.field = field


# B-scan -------------------------------------------------------------------
# magic, version, M, N (int64), dt, t0, spacing (float64), N x 5 pose doubles,
# then M x N float32 samples stored trace by trace.

_BSCAN_HEAD = struct.Struct("<4sBqqddd")
BSCAN_VERSION = 1


def bscan_to_bytes(bscan: BScan) -> bytes:
    head = _BSCAN_HEAD.pack(b"GPRB", BSCAN_VERSION, bscan.n_samples, bscan.n_traces, bscan.dt, bscan.t0, bscan.spacing)
    poses = np.array([p.as_tuple() for p in bscan.poses], dtype="<f8")
    samples = np.ascontiguousarray(bscan.as_array().T, dtype="<f4")
    return head + poses.tobytes() + samples.tobytes()


def bscan_from_bytes(blob: bytes, path: PathLike = "<bytes>") -> BScan:
    if len(blob) < _BSCAN_HEAD.size:
        raise FormatError(path, "header", "file truncated")
    magic, version, m, n, dt, t0, spacing = _BSCAN_HEAD.unpack_from(blob)
    if magic != b"GPRB":
        raise FormatError(path, "magic", f"expected b'GPRB', got {magic!r}")
    if version != BSCAN_VERSION:
        raise FormatError(path, "version", f"unsupported version {version}")
    if m < 2 or n < 1:
        raise FormatError(path, "M/N", f"invalid sizes M={m} N={n}")
    expected = _BSCAN_HEAD.size + 40 * n + 4 * m * n
    if len(blob) != expected:
        raise FormatError(path, "samples", f"expected {expected} bytes, got {len(blob)}")
    off = _BSCAN_HEAD.size
    poses_arr = np.frombuffer(blob, dtype="<f8", count=5 * n, offset=off).reshape(n, 5)
    samples = np.frombuffer(blob, dtype="<f4", count=m * n, offset=off + 40 * n).reshape(n, m).T.astype(float)
    poses = [Pose(*row) for row in poses_arr.tolist()]
    try:
        return BScan.from_array(samples, dt, poses, spacing, t0)
    except ValueError as err:
        raise FormatError(path, "contents", str(err)) from err


def write_bscan(path: PathLike, bscan: BScan) -> None:
    Path(path).write_bytes(bscan_to_bytes(bscan))


def read_bscan(path: PathLike) -> BScan:
    return bscan_from_bytes(Path(path).read_bytes(), path)


# PGM + sidecar --------------------------------------------------------------

def _sidecar(path: PathLike) -> Path:
    return Path(str(path) + ".json")


def write_pgm(path: PathLike, image: MigrationImage | CrossSectionMask) -> None:
    """Binary PGM (P5). Masks use maxval 1; energy maps are quantized to 16 bits
    relative to their peak, which is kept in the JSON sidecar with the grid geometry."""
    is_mask = isinstance(image, CrossSectionMask)
    grid = image.grid
    rows, cols = grid.shape
    if is_mask:
        maxval, scale = 1, 1.0
        payload = grid.astype(np.uint8).tobytes()
    else:
        maxval = 65535
        scale = float(grid.max()) if grid.size and grid.max() > 0 else 1.0
        q = np.rint(grid / scale * maxval).astype(">u2")
        payload = q.tobytes()
    Path(path).write_bytes(f"P5\n{cols} {rows}\n{maxval}\n".encode() + payload)
    meta = {
        "kind": "mask" if is_mask else "energy",
        "dx": image.dx,
        "dz": image.dz,
        "origin": list(image.origin),
        "scale": scale,
        "frame_start": list(image.frame.start),
        "frame_direction": list(image.frame.direction),
    }
    _sidecar(path).write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")


def _pgm_tokens(blob: bytes, path: PathLike) -> tuple[int, int, int, int]:
    """Parse a P5 header; returns (width, height, maxval, payload offset)."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(path, "header", "file truncated")
        tokens.append(blob[start:pos])
    if tokens[0] != b"P5":
        raise FormatError(path, "magic", f"expected P5, got {tokens[0]!r}")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as err:
        raise FormatError(path, "header", str(err)) from err
    return w, h, maxval, pos + 1


def read_pgm(path: PathLike) -> MigrationImage | CrossSectionMask:
    blob = Path(path).read_bytes()
    w, h, maxval, off = _pgm_tokens(blob, path)
    side = _sidecar(path)
    if not side.exists():
        raise FormatError(side, "file", "missing sidecar")
    try:
        meta = json.loads(side.read_text())
    except json.JSONDecodeError as err:
        raise FormatError(side, "json", str(err)) from err
    for key in ("kind", "dx", "dz", "origin", "scale", "frame_start", "frame_direction"):
        if key not in meta:
            raise FormatError(side, key, "missing")
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    count = w * h
    if len(blob) - off != count * np.dtype(dtype).itemsize:
        raise FormatError(path, "pixels", f"expected {count} pixels")
    q = np.frombuffer(blob, dtype=dtype, count=count, offset=off).reshape(h, w)
    frame = ScanFrame(tuple(meta["frame_start"]), tuple(meta["frame_direction"]))
    origin = tuple(meta["origin"])
    if meta["kind"] == "mask":
        if maxval != 1:
            raise FormatError(path, "maxval", f"mask must use maxval 1, got {maxval}")
        return CrossSectionMask(q.astype(np.uint8), meta["dx"], meta["dz"], origin, frame)
    if meta["kind"] != "energy":
        raise FormatError(side, "kind", f"unknown kind {meta['kind']!r}")
    return MigrationImage(q.astype(float) / maxval * meta["scale"], meta["dx"], meta["dz"], origin, frame)


# point clouds ----------------------------------------------------------------

def write_ply(path: PathLike, cloud: PointCloud) -> None:
    pts = cloud.points
    head = f"ply\nformat ascii 1.0\nelement vertex {len(pts)}\nproperty double x\nproperty double y\nproperty double z\nend_header\n"
    body = "".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in pts.tolist())
    Path(path).write_text(head + body)


def read_ply(path: PathLike) -> PointCloud:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise FormatError(path, "magic", "not a PLY file")
    if len(lines) < 2 or lines[1].strip() != "format ascii 1.0":
        raise FormatError(path, "format", "only ASCII PLY is supported")
    n = None
    props = []
    k = 2
    while k < len(lines) and lines[k].strip() != "end_header":
        parts = lines[k].split()
        if parts[:2] == ["element", "vertex"]:
            n = int(parts[2])
        elif parts and parts[0] == "property":
            props.append(parts[-1])
        k += 1
    if k == len(lines):
        raise FormatError(path, "end_header", "missing")
    if n is None:
        raise FormatError(path, "element vertex", "missing")
    if props[:3] != ["x", "y", "z"]:
        raise FormatError(path, "property", f"expected x y z, got {props}")
    rows = lines[k + 1 : k + 1 + n]
    if len(rows) != n:
        raise FormatError(path, "vertex", f"expected {n} rows, got {len(rows)}")
    try:
        pts = np.array([[float(v) for v in r.split()[:3]] for r in rows]).reshape(n, 3)
    except ValueError as err:
        raise FormatError(path, "vertex", str(err)) from err
    return PointCloud(pts)


def write_xyz(path: PathLike, cloud: PointCloud) -> None:
    Path(path).write_text("".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in cloud.points.tolist()))


def read_xyz(path: PathLike) -> PointCloud:
    rows = [r for r in Path(path).read_text().splitlines() if r.strip()]
    try:
        return PointCloud(np.array([[float(v) for v in r.split()] for r in rows]).reshape(len(rows), 3))
    except ValueError as err:
        raise FormatError(path, "xyz", str(err)) from err


def read_cloud(path: PathLike) -> PointCloud:
    return read_xyz(path) if str(path).endswith(".xyz") else read_ply(path)


# parameters -------------------------------------------------------------------

def write_params(path: PathLike, params) -> None:
    Path(path).write_bytes(params.to_bytes())


def read_params(path: PathLike):
    from .nn.nets import ParamStore

    try:
        return ParamStore.from_bytes(Path(path).read_bytes())
    except ValueError as err:
        raise FormatError(path, "parameters", str(err)) from err


# key=value configs ---------------------------------------------------------------

def parse_sections(text: str, path: PathLike = "<config>") -> list[tuple[str, dict[str, str]]]:
    """Split key=value text into ("", top-level) followed by one entry per [section]."""
    sections: list[tuple[str, dict[str, str]]] = [("", {})]
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            sections.append((line[1:-1].strip(), {}))
            continue
        if "=" not in line:
            raise FormatError(path, f"line {lineno}", f"expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        sections[-1][1][key] = value
    return sections


def _num(path, field, value: str, kind=float):
    try:
        return kind(value)
    except ValueError as err:
        raise FormatError(path, field, f"not a number: {value!r}") from err


def _vec(path, field, value: str, n: int = 3) -> tuple[float, ...]:
    parts = [p for p in value.replace(",", " ").split() if p]
    if len(parts) != n:
        raise FormatError(path, field, f"expected {n} numbers, got {value!r}")
    return tuple(_num(path, field, p) for p in parts)


_SLAB_KEYS = {"length", "width", "thickness", "rel_permittivity", "conductivity", "rel_permeability"}
_ANTENNA_KEYS = {f.name for f in fields(AntennaConfig)}
_SURVEY_KEYS = {"scan_lines", "line_offsets", "seed"}
_PIPE_KEYS = {"anchor", "direction", "radius", "length", "material"}


def parse_slab_config(text: str, path: PathLike = "<config>") -> tuple[SlabModel, AntennaConfig, dict[str, Any]]:
    """Slab model, antenna and survey options from key=value text with [pipe] sections."""
    sections = parse_sections(text, path)
    top = sections[0][1]
    unknown = set(top) - _SLAB_KEYS - _ANTENNA_KEYS - _SURVEY_KEYS
    if unknown:
        raise FormatError(path, sorted(unknown)[0], "unknown key")
    for key in ("length", "width", "thickness"):
        if key not in top:
            raise FormatError(path, key, "missing")
    pipes = []
    for k, (name, body) in enumerate(sections[1:]):
        where = f"pipe[{k}]"
        if name != "pipe":
            raise FormatError(path, f"[{name}]", "unknown section")
        bad = set(body) - _PIPE_KEYS
        if bad:
            raise FormatError(path, f"{where}.{sorted(bad)[0]}", "unknown key")
        for key in ("anchor", "direction", "radius", "length"):
            if key not in body:
                raise FormatError(path, f"{where}.{key}", "missing")
        try:
            pipes.append(
                PipeSpec(
                    _vec(path, f"{where}.anchor", body["anchor"]),
                    _vec(path, f"{where}.direction", body["direction"]),
                    _num(path, f"{where}.radius", body["radius"]),
                    _num(path, f"{where}.length", body["length"]),
                    Material(body.get("material", "PEC")),
                )
            )
        except ValueError as err:
            if isinstance(err, FormatError):
                raise
            raise FormatError(path, where, str(err)) from err
    try:
        slab = SlabModel(
            tuple(_num(path, k, top[k]) for k in ("length", "width", "thickness")),
            rel_permittivity=_num(path, "rel_permittivity", top.get("rel_permittivity", "7")),
            conductivity=_num(path, "conductivity", top.get("conductivity", "0.01")),
            rel_permeability=_num(path, "rel_permeability", top.get("rel_permeability", "1")),
            pipes=tuple(pipes),
        )
    except ValueError as err:
        if isinstance(err, FormatError):
            raise
        raise FormatError(path, "slab", str(err)) from err
    ant_kw = {}
    for key in _ANTENNA_KEYS & set(top):
        ant_kw[key] = _num(path, key, top[key], int if key == "samples_per_trace" else float)
    try:
        antenna = AntennaConfig(**ant_kw)
    except ValueError as err:
        raise FormatError(path, "antenna", str(err)) from err
    survey: dict[str, Any] = {"scan_lines": _num(path, "scan_lines", top.get("scan_lines", "3"), int)}
    if "line_offsets" in top:
        survey["line_offsets"] = [_num(path, "line_offsets", p) for p in top["line_offsets"].replace(",", " ").split()]
    if "seed" in top:
        survey["seed"] = _num(path, "seed", top["seed"], int)
    return slab, antenna, survey


def format_slab_config(slab: SlabModel, antenna: AntennaConfig | None = None, survey: dict | None = None) -> str:
    L, W, T = slab.dims
    out = [
        f"length = {float(L)!r}",
        f"width = {float(W)!r}",
        f"thickness = {float(T)!r}",
        f"rel_permittivity = {float(slab.rel_permittivity)!r}",
        f"conductivity = {float(slab.conductivity)!r}",
        f"rel_permeability = {float(slab.rel_permeability)!r}",
    ]
    if antenna is not None:
        out += [f"{f.name} = {getattr(antenna, f.name)!r}" for f in fields(AntennaConfig)]
    for key, value in (survey or {}).items():
        if isinstance(value, (list, tuple)):
            text = " ".join(repr(float(v)) for v in value)
        else:
            text = repr(value.item() if hasattr(value, "item") else value)
        out.append(f"{key} = {text}")
    for p in slab.pipes:
        out += [
            "",
            "[pipe]",
            "anchor = " + " ".join(repr(float(v)) for v in p.anchor),
            "direction = " + " ".join(repr(float(v)) for v in p.direction),
            f"radius = {float(p.radius)!r}",
            f"length = {float(p.length)!r}",
            f"material = {p.material.value}",
        ]
    return "\n".join(out) + "\n"


def parse_dataclass_config(cls, text: str, path: PathLike = "<config>"):
    """Instantiate a flat dataclass from key=value text; tuples are comma separated."""
    sections = parse_sections(text, path)
    if len(sections) > 1:
        raise FormatError(path, f"[{sections[1][0]}]", "sections are not allowed here")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in sections[0][1].items():
        if key not in known:
            raise FormatError(path, key, "unknown key")
        default = getattr(cls(), key) if _has_defaults(cls) else None
        if isinstance(default, tuple):
            kwargs[key] = tuple(_num(path, key, v) for v in value.split(","))
        elif isinstance(default, bool):
            kwargs[key] = value.lower() in ("1", "true", "yes")
        elif isinstance(default, int):
            kwargs[key] = _num(path, key, value, int)
        else:
            kwargs[key] = _num(path, key, value)
    try:
        return cls(**kwargs)
    except ValueError as err:
        raise FormatError(path, "config", str(err)) from err


def _has_defaults(cls) -> bool:
    try:
        cls()
        return True
    except TypeError:
        return False
