import numpy as np
import pytest

from gprsurvey.domain import PointCloud
from gprsurvey.nn import (
    Architecture,
    NetSpec,
    ParamStore,
    gpr_net_forward,
    init_params,
    migration_net_forward,
    output_points,
    symmetrize_params,
)
from gprsurvey.nn.nets import gpr_net_tensor, migration_net_tensor, prepare_stack

MIG = NetSpec(Architecture.MIGRATION_NET, 1 / 16, seed=0)
GPR = NetSpec("gpr_net", 1 / 16, seed=0, input_points=64)


@pytest.fixture(scope="module")
def mig_params():
    return init_params(MIG)


@pytest.fixture(scope="module")
def gpr_params():
    return init_params(GPR)


def test_channels():
    assert MIG.channels(512) == 32
    assert MIG.channels(64) == 4
    assert NetSpec("migration_net", 1.0).channels(512) == 512
    assert NetSpec("migration_net", 1 / 128).channels(64) == 4


@pytest.mark.parametrize(
    "kwargs",
    [dict(width_multiplier=0.0), dict(width_multiplier=1.5), dict(input_points=0), dict(input_scale=0.3), dict(input_scale=2.0)],
)
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        NetSpec("migration_net", **kwargs)


def test_spec_rejects_unknown_arch():
    with pytest.raises(ValueError):
        NetSpec("unet")


def test_migration_output_contract(mig_params, rng):
    x = rng.random((1, 3, 32, 32))
    out = migration_net_tensor(mig_params, x).data
    assert out.shape == (1, 32, 32)
    assert np.all((out > 0) & (out < 1))


def test_migration_deterministic(rng):
    x = rng.random((3, 32, 32))
    a = migration_net_forward(init_params(MIG), x)
    b = migration_net_forward(init_params(MIG), x)
    assert a.tobytes() == b.tobytes()


def test_migration_mirror_equivariance(mig_params, rng):
    sym = symmetrize_params(mig_params)
    half = rng.random((3, 32, 16))
    x = np.concatenate([half, half[..., ::-1]], axis=-1)
    out = migration_net_forward(sym, x)
    np.testing.assert_allclose(out, out[:, ::-1], atol=1e-5)
    y = rng.random((3, 32, 32))
    np.testing.assert_allclose(migration_net_forward(sym, y[..., ::-1]), migration_net_forward(sym, y)[:, ::-1], atol=1e-5)


def test_migration_rejects_indivisible(mig_params):
    with pytest.raises(ValueError, match="divisible"):
        migration_net_tensor(mig_params, np.zeros((1, 3, 30, 32)))
    with pytest.raises(ValueError):
        migration_net_tensor(mig_params, np.zeros((1, 2, 32, 32)))


def test_prepare_stack_downsamples(rng):
    spec = NetSpec("migration_net", input_scale=0.25)
    assert prepare_stack(rng.random((3, 64, 128)), spec).shape == (3, 16, 32)


def test_gpr_output_size(gpr_params, rng):
    out = gpr_net_forward(gpr_params, rng.normal(size=(64, 3)))
    assert isinstance(out, PointCloud)
    assert len(out) == output_points(GPR) == 9 * 2 * (16 + 8 + 4)
    assert output_points(NetSpec("gpr_net", 1.0)) == 9 * 2 * 448


def test_gpr_permutation_invariant(gpr_params, rng):
    x = rng.normal(size=(64, 3))
    a = gpr_net_forward(gpr_params, x).points
    b = gpr_net_forward(gpr_params, x[rng.permutation(64)]).points
    np.testing.assert_allclose(a, b, atol=1e-5)


def test_gpr_deterministic(rng):
    x = rng.normal(size=(64, 3))
    a = gpr_net_forward(init_params(GPR), x).points
    b = gpr_net_forward(init_params(GPR), x).points
    assert a.tobytes() == b.tobytes()


def test_gpr_rejects_wrong_size(gpr_params):
    with pytest.raises(ValueError, match="64 input points"):
        gpr_net_tensor(gpr_params, np.zeros((1, 10, 3)))


def test_wrong_architecture(gpr_params, mig_params):
    with pytest.raises(ValueError):
        gpr_net_forward(mig_params, np.zeros((64, 3)))
    with pytest.raises(ValueError):
        migration_net_forward(gpr_params, np.zeros((3, 32, 32)))


@pytest.mark.parametrize("spec", [MIG, GPR, NetSpec("migration_net", 1 / 8, seed=3, input_scale=0.5)])
def test_param_bytes_roundtrip(spec):
    p = init_params(spec)
    q = ParamStore.from_bytes(p.to_bytes())
    assert q.spec == spec
    assert list(q) == list(p)
    np.testing.assert_array_equal(q.flat(), p.flat())


def test_param_bytes_rejects_corruption():
    blob = init_params(GPR).to_bytes()
    with pytest.raises(ValueError, match="magic"):
        ParamStore.from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ValueError, match="count"):
        ParamStore.from_bytes(blob[:-4])
    with pytest.raises(ValueError, match="truncated"):
        ParamStore.from_bytes(blob[:10])


def test_seeds_differ():
    assert not np.array_equal(init_params(GPR).flat(), init_params(NetSpec("gpr_net", 1 / 16, seed=1, input_points=64)).flat())


def test_biases_zero(mig_params):
    for name, t in mig_params.items():
        if name.endswith(".b"):
            assert not np.any(t.data)
