"""MigrationNet (multi-resolution BP stack -> cross-section probabilities) and
GPRNet (sparse registered cloud -> dense completed cloud)."""
from __future__ import annotations

import struct
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..domain import MigrationImage, PointCloud
from ..migration import StackedBpInput, downsample
from . import autodiff as ad
from .autodiff import Tensor

MIGRATION_POOLS = (8, 4, 2)
EXTRACTOR_CHANNELS = 512
DECODER_CHANNELS = (512, 256, 128, 64)
GPR_SUBNET_DIMS = (256, 128, 64)
FOLD_GRID = np.array([[u, w] for u in (-1.0, 0.0, 1.0) for w in (-1.0, 0.0, 1.0)]) * 0.05
DESK_WIDTH = 1.0 / 16


class Architecture(str, Enum):
    MIGRATION_NET = "migration_net"
    GPR_NET = "gpr_net"


_ARCH_TAGS = {Architecture.MIGRATION_NET: 1, Architecture.GPR_NET: 2}


@dataclass(frozen=True)
class NetSpec:
    """Architecture choice and desk-scale shrink.

    ``input_points`` is the cloud size GPRNet expects; ``input_scale`` is the
    spatial factor MigrationNet applies to its input stack before the
    encoder (0.25 = block-average by 4).
    """

    architecture: Architecture
    width_multiplier: float = DESK_WIDTH
    seed: int = 0
    input_points: int = 1500
    input_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "architecture", Architecture(self.architecture))
        if not 0 < self.width_multiplier <= 1:
            raise ValueError("width_multiplier must be in (0, 1]")
        if self.input_points < 1:
            raise ValueError("input_points must be positive")
        factor = 1.0 / self.input_scale if self.input_scale > 0 else 0
        if not (0 < self.input_scale <= 1 and abs(factor - round(factor)) < 1e-9):
            raise ValueError("input_scale must be 1/k for a positive integer k")

    def channels(self, full: int) -> int:
        return max(4, int(round(full * self.width_multiplier)))

    @property
    def downsample_factor(self) -> int:
        return int(round(1.0 / self.input_scale))


class ParamStore:
    """Named trainable tensors in declaration order."""

    def __init__(self, spec: NetSpec, tensors: "OrderedDict[str, Tensor] | None" = None):
        self.spec = spec
        self.tensors: OrderedDict[str, Tensor] = tensors if tensors is not None else OrderedDict()

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def values(self):
        return self.tensors.values()

    @property
    def size(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def add(self, name: str, data: np.ndarray) -> None:
        if name in self.tensors:
            raise KeyError(f"duplicate parameter {name}")
        self.tensors[name] = Tensor(data, requires_grad=True)

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def copy(self) -> "ParamStore":
        return ParamStore(self.spec, OrderedDict((k, Tensor(v.data.copy(), True)) for k, v in self.tensors.items()))

    def flat(self) -> np.ndarray:
        return np.concatenate([t.data.ravel() for t in self.tensors.values()])

    # serialization: magic, version, arch tag, width, seed, input points, input scale, count, float32 LE
    _HEADER = struct.Struct("<4sBBdqqdq")

    def to_bytes(self) -> bytes:
        s = self.spec
        head = self._HEADER.pack(
            b"GPRP", 1, _ARCH_TAGS[s.architecture], s.width_multiplier, s.seed, s.input_points, s.input_scale, self.size
        )
        return head + self.flat().astype("<f4").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ParamStore":
        size = cls._HEADER.size
        if len(blob) < size:
            raise ValueError("parameter file truncated: header")
        magic, version, tag, width, seed, points, scale, count = cls._HEADER.unpack_from(blob)
        if magic != b"GPRP":
            raise ValueError(f"not a parameter file (magic {magic!r})")
        if version != 1:
            raise ValueError(f"unsupported parameter file version {version}")
        arch = {v: k for k, v in _ARCH_TAGS.items()}.get(tag)
        if arch is None:
            raise ValueError(f"unknown architecture tag {tag}")
        spec = NetSpec(arch, width, seed, points, scale)
        store = init_params(spec)
        if count != store.size or len(blob) != size + 4 * count:
            raise ValueError(f"parameter count mismatch: header {count}, architecture {store.size}, payload {(len(blob) - size) // 4}")
        flat = np.frombuffer(blob, dtype="<f4", offset=size).astype(float)
        pos = 0
        for t in store.values():
            n = t.data.size
            t.data = flat[pos : pos + n].reshape(t.data.shape).copy()
            pos += n
        return store


# initialization -------------------------------------------------------

def _he(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    # values are kept float32-representable so a saved store reloads exactly
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), shape).astype(np.float32).astype(float)


def _conv(store: ParamStore, rng, name: str, cin: int, cout: int, k: int = 3):
    store.add(f"{name}.w", _he(rng, (cout, cin, k, k), cin * k * k))
    store.add(f"{name}.b", np.zeros(cout))


def _deconv(store: ParamStore, rng, name: str, cin: int, cout: int, k: int = 3):
    store.add(f"{name}.w", _he(rng, (cin, cout, k, k), cin * k * k))
    store.add(f"{name}.b", np.zeros(cout))


def _dense(store: ParamStore, rng, name: str, fin: int, fout: int, gain: float = 1.0):
    store.add(f"{name}.w", (gain * _he(rng, (fin, fout), fin)).astype(np.float32).astype(float))
    store.add(f"{name}.b", np.zeros(fout))


def _migration_layout(spec: NetSpec) -> tuple[int, list[int]]:
    return spec.channels(EXTRACTOR_CHANNELS), [spec.channels(c) for c in DECODER_CHANNELS]


def _gpr_layout(spec: NetSpec) -> tuple[list[int], int]:
    dims = [spec.channels(c) for c in GPR_SUBNET_DIMS]
    return dims, 2 * sum(dims)


def init_params(spec: NetSpec) -> ParamStore:
    """He-normal weights and zero biases, drawn from ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    store = ParamStore(spec)
    if spec.architecture is Architecture.MIGRATION_NET:
        ext, dec = _migration_layout(spec)
        for i in range(len(MIGRATION_POOLS)):
            _conv(store, rng, f"ext{i}.conv1", 1, ext)
            _conv(store, rng, f"ext{i}.conv2", ext, ext)
        cin = ext * len(MIGRATION_POOLS)
        for g, cout in enumerate(dec):
            if g > 0:
                cin += ext  # skip connection from extractor g-1
            _conv(store, rng, f"up{g}.conv1", cin, cout)
            _conv(store, rng, f"up{g}.conv2", cout, cout)
            _deconv(store, rng, f"up{g}.deconv", cout, cout)
            cin = cout
        _conv(store, rng, "head", cin, 1, k=1)
    else:
        dims, width = _gpr_layout(spec)
        for i, j in enumerate(dims):
            _dense(store, rng, f"enc{i}.mlp1", 3, j)
            _dense(store, rng, f"enc{i}.mlp2", j, j)
            _dense(store, rng, f"enc{i}.mlp3", j, j)
        _dense(store, rng, "fuse", width, width)
        half = width // 2
        _dense(store, rng, "seed_fc", width, 3 * half, gain=0.1)
        _dense(store, rng, "seed_mlp1", width, width)
        _dense(store, rng, "seed_mlp2", width, 3 * half, gain=0.1)
        _dense(store, rng, "fold1", 3 + 2 + width, width)
        _dense(store, rng, "fold2", width, width)
        _dense(store, rng, "fold3", width, 3, gain=0.1)
    return store


def symmetrize_params(params: ParamStore) -> ParamStore:
    """Copy with every spatial kernel averaged with its left-right mirror.

    Such a network commutes with mirroring the input along the trace axis.
    """
    out = params.copy()
    for name, t in out.items():
        if t.data.ndim == 4:
            t.data = 0.5 * (t.data + t.data[..., ::-1])
    return out


# MigrationNet ---------------------------------------------------------

def _conv_relu(params, name, x):
    return ad.relu(ad.conv2d(x, params[f"{name}.w"], params[f"{name}.b"]))


def migration_net_tensor(params: ParamStore, x) -> Tensor:
    """Forward pass on a (B, 3, M, N) batch; returns (B, M, N) probabilities."""
    x = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=float)
    if x.ndim != 4 or x.shape[1] != len(MIGRATION_POOLS):
        raise ValueError(f"expected a (B, 3, M, N) stack, got {x.shape}")
    b, _, m, n = x.shape
    for k in MIGRATION_POOLS:
        if m % k or n % k:
            raise ValueError(f"input {m}x{n} is not divisible by pool kernel {k}")
    feats = []
    for i, k in enumerate(MIGRATION_POOLS):
        h = _conv_relu(params, f"ext{i}.conv1", x[:, i : i + 1])
        h = _conv_relu(params, f"ext{i}.conv2", h)
        feats.append(ad.upsample_nearest(ad.maxpool2d(h, k), k))
    h = ad.concat(feats, axis=1)
    for g in range(len(DECODER_CHANNELS)):
        if g > 0:
            h = ad.concat([h, feats[g - 1]], axis=1)
        h = _conv_relu(params, f"up{g}.conv1", h)
        h = _conv_relu(params, f"up{g}.conv2", h)
        h = ad.relu(ad.conv_transpose2d(h, params[f"up{g}.deconv.w"], params[f"up{g}.deconv.b"]))
    out = ad.sigmoid(ad.conv2d(h, params["head.w"], params["head.b"]))
    return ad.reshape(out, (b, m, n))


def prepare_stack(z, spec: NetSpec) -> np.ndarray:
    """(3, M, N) network input from a BP stack, downsampled per ``spec.input_scale``."""
    arr = z.as_array() if isinstance(z, StackedBpInput) else np.asarray(z, dtype=float)
    if arr.ndim != 3 or arr.shape[0] != len(MIGRATION_POOLS):
        raise ValueError(f"expected a (3, M, N) stack, got {arr.shape}")
    return downsample(arr, spec.downsample_factor)


def migration_net_forward(params: ParamStore, z):
    """Per-pixel foreground probability for one stacked BP input.

    Returns a :class:`MigrationImage` (with the stack's grid geometry,
    rescaled when ``input_scale`` < 1) for a :class:`StackedBpInput`, or a
    plain (M, N) array for array input.
    """
    if params.spec.architecture is not Architecture.MIGRATION_NET:
        raise ValueError("parameters are not for migration_net")
    x = prepare_stack(z, params.spec)
    prob = migration_net_tensor(params, x[None]).data[0]
    if isinstance(z, StackedBpInput):
        ref = z.channels[0]
        f = params.spec.downsample_factor
        return MigrationImage(prob, ref.dx * f, ref.dz * f, ref.origin, ref.frame)
    return prob


# GPRNet ---------------------------------------------------------------

def _dense_relu(params, name, x):
    return ad.relu(ad.linear(x, params[f"{name}.w"], params[f"{name}.b"]))


def gpr_net_tensor(params: ParamStore, x) -> Tensor:
    """Forward pass on a (B, C, 3) batch; returns (B, 9 * D, 3)."""
    x = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=float)
    if x.ndim != 3 or x.shape[2] != 3:
        raise ValueError(f"expected a (B, C, 3) batch, got {x.shape}")
    spec = params.spec
    if x.shape[1] != spec.input_points:
        raise ValueError(f"gpr_net expects {spec.input_points} input points, got {x.shape[1]}")
    dims, width = _gpr_layout(spec)
    b, c, _ = x.shape
    parts = []
    for i in range(len(dims)):
        h = _dense_relu(params, f"enc{i}.mlp1", x)
        h = _dense_relu(params, f"enc{i}.mlp2", h)
        v = _dense_relu(params, f"enc{i}.mlp3", h)
        parts += [v, ad.broadcast_points(ad.max_over_points(v), c)]
    fused = _dense_relu(params, "fuse", ad.concat(parts, axis=2))
    g = ad.max_over_points(fused)
    half = width // 2
    fc = ad.reshape(ad.linear(g, params["seed_fc.w"], params["seed_fc.b"]), (b, half, 3))
    hidden = _dense_relu(params, "seed_mlp1", g)
    mlp = ad.reshape(ad.linear(hidden, params["seed_mlp2.w"], params["seed_mlp2.b"]), (b, half, 3))
    seeds = ad.concat([fc, mlp], axis=1)
    h = _dense_relu(params, "fold1", ad.fold_grid(seeds, FOLD_GRID, g))
    h = _dense_relu(params, "fold2", h)
    offsets = ad.linear(h, params["fold3.w"], params["fold3.b"])
    return ad.add(ad.repeat_points(seeds, len(FOLD_GRID)), offsets)


def gpr_net_forward(params: ParamStore, sparse) -> PointCloud:
    """Dense completion of one (normalized) sparse cloud."""
    if params.spec.architecture is not Architecture.GPR_NET:
        raise ValueError("parameters are not for gpr_net")
    pts = sparse.points if isinstance(sparse, PointCloud) else np.asarray(sparse, dtype=float)
    return PointCloud(gpr_net_tensor(params, pts[None]).data[0])


def output_points(spec: NetSpec) -> int:
    """Number of points GPRNet emits: 9 per seed, one seed per fused feature."""
    return len(FOLD_GRID) * _gpr_layout(spec)[1]
