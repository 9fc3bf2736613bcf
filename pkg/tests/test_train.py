import numpy as np
import pytest

from gprsurvey.nn import NetSpec, TrainConfig, fit, init_params, train
from gprsurvey.nn import autodiff as ad
from gprsurvey.nn.autodiff import Tensor


def half_sq_norm(w):
    """f(w) = 0.5 * ||w||^2 via linear(w, w) on a row vector."""
    row = ad.reshape(w, (1, -1))
    col = ad.reshape(w, (-1, 1))
    return ad.scale(ad.reshape(ad.linear(row, col), ()), 0.5)


@pytest.mark.parametrize("lr", [0.1, 0.5, 1.3])
def test_gd_closed_form(lr):
    w0 = np.array([1.0, -2.0, 0.5])
    w = Tensor(w0.copy(), requires_grad=True)
    cfg = TrainConfig(lr=lr, momentum=0.0, weight_decay=0.0, iterations=12)
    curve = fit({"w": w}, lambda it: half_sq_norm(w), cfg)
    np.testing.assert_allclose(w.data, (1 - lr) ** 12 * w0, rtol=0, atol=1e-10)
    expected = [0.5 * (1 - lr) ** (2 * k) * w0 @ w0 for k in range(12)]
    np.testing.assert_allclose(curve, expected, atol=1e-10)


def test_momentum_recurrence():
    w0 = np.array([2.0])
    w = Tensor(w0.copy(), requires_grad=True)
    lr, mu, wd = 0.1, 0.9, 0.01
    fit({"w": w}, lambda it: half_sq_norm(w), TrainConfig(lr=lr, momentum=mu, weight_decay=wd, iterations=5))
    x, v = 2.0, 0.0
    for _ in range(5):
        v = mu * v + x
        x = x - lr * v - lr * wd * x
    assert w.data[0] == pytest.approx(x, abs=1e-12)


def test_zero_lr_leaves_params(rng):
    spec = NetSpec("gpr_net", 1 / 16, input_points=32)
    params = init_params(spec)
    x, y = rng.normal(size=(32, 3)), rng.normal(size=(50, 3))
    out, curve = train(spec, [(x, y)], TrainConfig(lr=0.0, iterations=3), params)
    np.testing.assert_array_equal(out.flat(), params.flat())
    assert curve[0] == curve[1] == curve[2]


def test_divergence_reports_iteration():
    w = Tensor(np.array([1.0]), requires_grad=True)

    def objective(it):
        return ad.scale(half_sq_norm(w), np.inf if it == 3 else 1.0)

    with pytest.raises(FloatingPointError, match="iteration 3"):
        fit({"w": w}, objective, TrainConfig(lr=0.1, iterations=10))


@pytest.mark.parametrize(
    "kwargs",
    [dict(lr=-1.0), dict(momentum=1.0), dict(lambda_struct=0.5, lambda_ce=0.6), dict(iterations=-1)],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_train_is_deterministic(rng):
    spec = NetSpec("migration_net", 1 / 16, input_scale=0.5)
    data = [(rng.random((3, 32, 32)), (rng.random((32, 32)) > 0.7).astype(float)) for _ in range(3)]
    cfg = TrainConfig(lr=0.01, iterations=3, batch_size=2)
    a, ca = train(spec, data, cfg)
    b, cb = train(spec, data, cfg)
    assert ca == cb
    assert a.flat().tobytes() == b.flat().tobytes()


def test_single_sample_overfit():
    r = np.random.default_rng(5)
    spec = NetSpec("migration_net", 1 / 16)
    target = np.zeros((16, 16))
    target[5:9, 6:11] = 1.0
    x = np.stack([target + 0.1 * r.random((16, 16)) for _ in range(3)])
    _, curve = train(spec, [(x, target)], TrainConfig(lr=0.05, iterations=150, class_weights=(3.0, 1.0)))
    smooth = np.convolve(curve, np.ones(10) / 10, mode="valid")
    assert smooth[-1] * 10 <= curve[0]


def test_train_rejects_empty():
    with pytest.raises(ValueError):
        train(NetSpec("gpr_net"), [], TrainConfig())
