"""Momentum SGD training and finite-difference gradient checking."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from ..domain import PointCloud
from .autodiff import Tensor, frozen_routing
from .losses import chamfer_loss, joint_loss
from .nets import Architecture, NetSpec, ParamStore, gpr_net_tensor, init_params, migration_net_tensor, prepare_stack

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """SGD settings; defaults are the full-scale training values.

    ``batch_size`` 0 means full batch. ``class_weights`` are the
    (foreground, background) cross-entropy weights.
    """

    lr: float = 5e-6
    momentum: float = 0.9
    weight_decay: float = 1e-8
    lambda_struct: float = 0.1
    lambda_ce: float = 0.9
    iterations: int = 100
    seed: int = 0
    batch_size: int = 0
    class_weights: tuple[float, float] = (1.0, 1.0)
    log_every: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if abs(self.lambda_struct + self.lambda_ce - 1.0) > 1e-9:
            raise ValueError("lambda_struct + lambda_ce must equal 1")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")


Params = Mapping[str, Tensor]


def fit(params: Params, objective: Callable[[int], Tensor], cfg: TrainConfig) -> list[float]:
    """Minimize ``objective(iteration)`` in place over ``params``.

    Classic momentum (v <- mu v + g) with weight decay applied directly to the
    weights, w <- w - lr v - lr wd w. Returns the loss before each step.
    """
    tensors = list(params.values())
    velocity = [np.zeros_like(t.data) for t in tensors]
    curve = []
    for it in range(cfg.iterations):
        for t in tensors:
            t.grad = None
        loss = objective(it)
        value = float(loss)
        if not np.isfinite(value):
            raise FloatingPointError(f"loss diverged at iteration {it}: {value}")
        curve.append(value)
        loss.backward()
        for t, v in zip(tensors, velocity):
            g = t.grad if t.grad is not None else 0.0
            v *= cfg.momentum
            v += g
            t.data = t.data - cfg.lr * v - cfg.lr * cfg.weight_decay * t.data
        if cfg.log_every and it % cfg.log_every == 0:
            log.info("iter %d loss %.6g", it, value)
    return curve


def _stack_dataset(spec: NetSpec, dataset):
    xs, ys = [], []
    f = spec.downsample_factor
    for x, y in dataset:
        if spec.architecture is Architecture.MIGRATION_NET:
            xs.append(prepare_stack(x, spec))
            target = np.asarray(getattr(y, "grid", y), dtype=float)
            if f > 1 and target.shape != xs[-1].shape[1:]:
                from ..migration import downsample

                target = (downsample(target, f) >= 0.5).astype(float)
            ys.append(target)
        else:
            xs.append(x.points if isinstance(x, PointCloud) else np.asarray(x, dtype=float))
            ys.append(y.points if isinstance(y, PointCloud) else np.asarray(y, dtype=float))
    return np.stack(xs), ys


def train(net: NetSpec, dataset: Sequence, cfg: TrainConfig, params: ParamStore | None = None):
    """Train a network from ``net.seed`` initialization on (input, target) pairs.

    MigrationNet pairs are (stacked BP input, mask) and use the joint loss;
    GPRNet pairs are (sparse cloud, dense target cloud) and use Chamfer.
    Returns (parameters, per-iteration loss).
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("empty dataset")
    params = init_params(net) if params is None else params.copy()
    xs, ys = _stack_dataset(net, dataset)
    rng = np.random.default_rng(cfg.seed)
    n = len(xs)
    bs = n if cfg.batch_size <= 0 else min(cfg.batch_size, n)
    order: list[int] = []

    def batch(it):
        nonlocal order
        if bs == n:
            return np.arange(n)
        if len(order) < bs:
            order = order + list(rng.permutation(n))
        idx, order = order[:bs], order[bs:]
        return np.array(idx)

    if net.architecture is Architecture.MIGRATION_NET:
        targets = np.stack(ys)

        def objective(it):
            idx = batch(it)
            return joint_loss(migration_net_tensor(params, xs[idx]), targets[idx], cfg)

    else:

        def objective(it):
            idx = batch(it)
            return chamfer_loss(gpr_net_tensor(params, xs[idx]), [ys[i] for i in idx])

    curve = fit(params, objective, cfg)
    return params, curve


def grad_check(
    net: Callable[[Params, object], Tensor],
    loss: Callable[[Tensor], Tensor],
    params: Params,
    x=None,
    n_checks: int = 64,
    h: float = 1e-4,
    seed: int = 0,
    freeze_routing: bool = True,
) -> float:
    """Largest relative error between reverse-mode and central-difference gradients.

    ``loss(net(params, x))`` must be a scalar. ``n_checks`` coordinates are
    drawn uniformly from all parameters. The relative error is
    |g_a - g_n| / max(|g_a|, |g_n|, 1e-6).

    With ``freeze_routing`` the ReLU masks and max-pool choices of the
    evaluation point are replayed while probing, so a probe never crosses a
    kink (the analogue of fixing Chamfer's nearest-neighbor pairs).
    """
    if freeze_routing:
        with frozen_routing() as replay:
            return _grad_check(net, loss, params, x, n_checks, h, seed, replay)
    return _grad_check(net, loss, params, x, n_checks, h, seed, lambda: None)


def _grad_check(net, loss, params, x, n_checks, h, seed, replay) -> float:
    tensors = list(params.values())
    for t in tensors:
        t.grad = None
    base = loss(net(params, x))
    base.backward()
    sizes = np.array([t.data.size for t in tensors])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(seed)
    picks = rng.choice(offsets[-1], size=min(n_checks, offsets[-1]), replace=False)
    worst = 0.0
    for flat in picks:
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        t = tensors[k]
        idx = np.unravel_index(flat - offsets[k], t.data.shape)
        analytic = 0.0 if t.grad is None else float(t.grad[idx])
        if not np.isfinite(analytic):
            raise FloatingPointError(f"non-finite gradient at parameter {k} index {idx}")
        old = t.data[idx]
        t.data[idx] = old + h
        replay()
        up = float(loss(net(params, x)))
        t.data[idx] = old - h
        replay()
        down = float(loss(net(params, x)))
        t.data[idx] = old
        numeric = (up - down) / (2 * h)
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
        worst = max(worst, err)
    return worst
