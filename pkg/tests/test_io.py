import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gprsurvey import io
from gprsurvey.datasets import SlabConfig
from gprsurvey.domain import BScan, CrossSectionMask, MigrationImage, PointCloud, Pose, ScanFrame
from gprsurvey.forward import AntennaConfig
from gprsurvey.nn import NetSpec, init_params

SLAB_CFG = """\
# two pipes
length = 0.35
width = 0.25
thickness = 0.25
rel_permittivity = 6.5
samples_per_trace = 128
line_offsets = 0.05, 0.2
seed = 4

[pipe]
anchor = 0.1 0 -0.06
direction = 0 1 0
radius = 0.01
length = 0.25

[pipe]
anchor = 0.25 0 -0.09
direction = 0 1 0
radius = 0.015
length = 0.25
material = PEC
"""


def _bscan(rng, m=16, n=6):
    poses = [Pose(0.005 * i, 0.1, 0.0, 0.2, 0.01 * i) for i in range(n)]
    return BScan.from_array(rng.normal(size=(m, n)).astype(np.float32), 1e-11, poses, 0.005, t0=3e-12)


def test_bscan_roundtrip(tmp_path, rng):
    b = _bscan(rng)
    io.write_bscan(tmp_path / "a.gprb", b)
    c = io.read_bscan(tmp_path / "a.gprb")
    np.testing.assert_array_equal(c.as_array(), b.as_array())
    assert c.poses == b.poses
    assert (c.dt, c.t0, c.spacing) == (b.dt, b.t0, b.spacing)


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda blob: b"XXXX" + blob[4:], "magic"),
        (lambda blob: blob[:4] + b"\x09" + blob[5:], "version"),
        (lambda blob: blob[:-3], "samples"),
        (lambda blob: blob[:10], "header"),
    ],
)
def test_bscan_format_errors(tmp_path, rng, mutate, field):
    path = tmp_path / "bad.gprb"
    path.write_bytes(mutate(io.bscan_to_bytes(_bscan(rng))))
    with pytest.raises(io.FormatError) as err:
        io.read_bscan(path)
    assert err.value.field == field
    assert str(path) in str(err.value)


def test_mask_pgm_roundtrip(tmp_path, rng):
    frame = ScanFrame((0.0, 0.1), (1.0, 0.0))
    mask = CrossSectionMask((rng.random((7, 9)) > 0.5).astype(np.uint8), 0.005, 0.001, (0.0, 0.0), frame)
    io.write_pgm(tmp_path / "m.pgm", mask)
    assert (tmp_path / "m.pgm").read_bytes().startswith(b"P5\n9 7\n1\n")
    back = io.read_pgm(tmp_path / "m.pgm")
    assert isinstance(back, CrossSectionMask)
    np.testing.assert_array_equal(back.grid, mask.grid)
    assert (back.dx, back.dz, back.frame) == (mask.dx, mask.dz, mask.frame)


def test_energy_pgm_quantization(tmp_path, rng):
    img = MigrationImage(rng.random((5, 4)) * 3.0, 0.005, 0.001)
    io.write_pgm(tmp_path / "e.pgm", img)
    back = io.read_pgm(tmp_path / "e.pgm")
    assert isinstance(back, MigrationImage)
    np.testing.assert_allclose(back.grid, img.grid, atol=img.grid.max() / 65535)


def test_pgm_missing_sidecar(tmp_path, rng):
    io.write_pgm(tmp_path / "m.pgm", CrossSectionMask(np.ones((2, 2)), 1.0, 1.0))
    (tmp_path / "m.pgm.json").unlink()
    with pytest.raises(io.FormatError, match="sidecar"):
        io.read_pgm(tmp_path / "m.pgm")


def test_pgm_bad_magic(tmp_path):
    io.write_pgm(tmp_path / "m.pgm", CrossSectionMask(np.ones((2, 2)), 1.0, 1.0))
    (tmp_path / "m.pgm").write_bytes(b"P2\n2 2\n1\n1 1 1 1\n")
    with pytest.raises(io.FormatError) as err:
        io.read_pgm(tmp_path / "m.pgm")
    assert err.value.field == "magic"


@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.just(3)), elements=st.floats(-1e6, 1e6)))
def test_ply_roundtrip_exact(tmp_path_factory, pts):
    path = tmp_path_factory.mktemp("ply") / "c.ply"
    io.write_ply(path, PointCloud(pts))
    np.testing.assert_array_equal(io.read_ply(path).points, pts)


def test_xyz_and_dispatch(tmp_path, rng):
    pts = rng.normal(size=(5, 3))
    io.write_xyz(tmp_path / "c.xyz", PointCloud(pts))
    np.testing.assert_array_equal(io.read_cloud(tmp_path / "c.xyz").points, pts)
    io.write_ply(tmp_path / "c.ply", PointCloud(pts))
    np.testing.assert_array_equal(io.read_cloud(tmp_path / "c.ply").points, pts)


def test_ply_errors(tmp_path):
    path = tmp_path / "c.ply"
    path.write_text("ply\nformat binary_little_endian 1.0\nend_header\n")
    with pytest.raises(io.FormatError, match="ASCII"):
        io.read_ply(path)
    path.write_text("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n")
    with pytest.raises(io.FormatError, match="expected 2 rows"):
        io.read_ply(path)


def test_params_roundtrip(tmp_path):
    p = init_params(NetSpec("gpr_net", 1 / 16, input_points=32))
    io.write_params(tmp_path / "p.bin", p)
    q = io.read_params(tmp_path / "p.bin")
    np.testing.assert_array_equal(q.flat(), p.flat())
    (tmp_path / "p.bin").write_bytes(b"junk")
    with pytest.raises(io.FormatError):
        io.read_params(tmp_path / "p.bin")


def test_parse_slab_config():
    slab, ant, survey = io.parse_slab_config(SLAB_CFG)
    assert slab.rel_permittivity == 6.5
    assert len(slab.pipes) == 2
    assert slab.pipes[1].radius == 0.015
    assert ant.samples_per_trace == 128
    assert survey == {"scan_lines": 3, "line_offsets": [0.05, 0.2], "seed": 4}


def test_slab_config_roundtrip():
    slab, ant, survey = io.parse_slab_config(SLAB_CFG)
    slab2, ant2, survey2 = io.parse_slab_config(io.format_slab_config(slab, ant, survey))
    assert ant2 == ant and survey2 == survey
    np.testing.assert_array_equal(slab2.dims, slab.dims)
    for a, b in zip(slab.pipes, slab2.pipes):
        np.testing.assert_array_equal(a.anchor, b.anchor)
        assert a.radius == b.radius


@pytest.mark.parametrize(
    "edit, field",
    [
        (lambda t: t.replace("width = 0.25\n", ""), "width"),
        (lambda t: t.replace("rel_permittivity = 6.5", "rel_permittivity = abc"), "rel_permittivity"),
        (lambda t: t.replace("radius = 0.01\n", ""), "pipe[0].radius"),
        (lambda t: t.replace("length = 0.35", "length = 0.35\ncolour = red"), "colour"),
        (lambda t: t.replace("anchor = 0.1 0 -0.06", "anchor = 0.1 0"), "pipe[0].anchor"),
        (lambda t: t.replace("[pipe]", "[valve]", 1), "[valve]"),
    ],
)
def test_slab_config_errors(edit, field):
    with pytest.raises(io.FormatError) as err:
        io.parse_slab_config(edit(SLAB_CFG), "slab.cfg")
    assert err.value.field == field
    assert "slab.cfg" in str(err.value)


def test_slab_config_pipe_outside():
    text = SLAB_CFG.replace("anchor = 0.1 0 -0.06", "anchor = 0.1 0 -0.3")
    with pytest.raises(io.FormatError, match="outside"):
        io.parse_slab_config(text)


def test_dataclass_config():
    cfg = io.parse_dataclass_config(SlabConfig, "count = 2\nseed = 9\nradius_range = 0.01, 0.02\n")
    assert (cfg.count, cfg.seed, cfg.radius_range) == (2, 9, (0.01, 0.02))
    with pytest.raises(io.FormatError, match="unknown key"):
        io.parse_dataclass_config(SlabConfig, "bogus = 1\n")
    with pytest.raises(io.FormatError):
        io.parse_dataclass_config(AntennaConfig, "center_frequency = -1\n")
