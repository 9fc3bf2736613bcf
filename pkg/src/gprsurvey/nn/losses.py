"""Training losses as fused differentiable operators.

Each loss accepts plain arrays, domain objects or :class:`Tensor` predictions
and returns a scalar :class:`Tensor` (use ``float(loss)`` for the value).
Leading axes beyond the image/point axes are treated as a batch and averaged.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..domain import PointCloud
from .autodiff import Tensor, _accumulate, _result

STRUCT_C = 4.5e-4  # (0.03)^2 / 2, the structure-term stabilizer of SSIM
CE_CLAMP = 1e-7


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(getattr(x, "grid", x), dtype=float))


def _target(y) -> np.ndarray:
    if isinstance(y, Tensor):
        return y.data
    if isinstance(y, PointCloud):
        return y.points
    return np.asarray(getattr(y, "grid", y), dtype=float)


def structure_loss(pred, truth, c: float = STRUCT_C) -> Tensor:
    """1 - (cov + c) / (std_x * std_y + c) with unbiased moments, per image."""
    p = _as_tensor(pred)
    y = _target(truth)
    if p.shape != y.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {y.shape}")
    if not c > 0:
        raise ValueError("c must be positive")
    if p.data.ndim < 2:
        raise ValueError("expected an image or a batch of images")
    lead = p.shape[:-2]
    x = p.data.reshape(-1, p.shape[-2] * p.shape[-1])
    yy = y.reshape(x.shape)
    n = x.shape[1]
    dx = x - x.mean(axis=1, keepdims=True)
    dy = yy - yy.mean(axis=1, keepdims=True)
    sx = np.sqrt(np.sum(dx * dx, axis=1) / (n - 1))
    sy = np.sqrt(np.sum(dy * dy, axis=1) / (n - 1))
    cov = np.sum(dx * dy, axis=1) / (n - 1)
    num = cov + c
    den = sx * sy + c
    value = float(np.mean(1.0 - num / den))
    batch = x.shape[0]

    def back(g):
        safe = np.where(sx > 0, sx, 1.0)[:, None]
        dsx = np.where(sx[:, None] > 0, dx / ((n - 1) * safe), 0.0)
        dcov = dy / (n - 1)
        ds = (dcov * den[:, None] - num[:, None] * sy[:, None] * dsx) / (den**2)[:, None]
        _accumulate(p, (-g * ds / batch).reshape(lead + p.shape[-2:]))

    return _result(np.array(value), (p,), back)


def cross_entropy_loss(pred, truth, class_weights: tuple[float, float] = (1.0, 1.0)) -> Tensor:
    """Weighted binary cross-entropy averaged over pixels.

    ``class_weights`` is (foreground weight, background weight). Predictions
    are clamped to [1e-7, 1 - 1e-7] so saturated sigmoids stay finite.
    """
    p = _as_tensor(pred)
    y = _target(truth)
    if p.shape != y.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {y.shape}")
    if p.data.size and (p.data.min() < 0 or p.data.max() > 1):
        raise ValueError("predictions must be probabilities in (0, 1)")
    w1, w0 = class_weights
    q = np.clip(p.data, CE_CLAMP, 1.0 - CE_CLAMP)
    inside = (p.data >= CE_CLAMP) & (p.data <= 1.0 - CE_CLAMP)
    terms = w1 * y * np.log(q) + w0 * (1.0 - y) * np.log1p(-q)
    value = -float(np.mean(terms))

    def back(g):
        d = -(w1 * y / q - w0 * (1.0 - y) / (1.0 - q)) / q.size
        _accumulate(p, g * d * inside)

    return _result(np.array(value), (p,), back)


def joint_loss(pred, truth, cfg, class_weights: tuple[float, float] | None = None) -> Tensor:
    """``cfg.lambda_struct`` * structure + ``cfg.lambda_ce`` * cross-entropy."""
    ls, lc = cfg.lambda_struct, cfg.lambda_ce
    if abs(ls + lc - 1.0) > 1e-9:
        raise ValueError(f"loss weights must sum to 1, got {ls} + {lc}")
    weights = class_weights if class_weights is not None else getattr(cfg, "class_weights", (1.0, 1.0))
    p = _as_tensor(pred)
    s = structure_loss(p, truth)
    ce = cross_entropy_loss(p, truth, weights)
    value = ls * float(s) + lc * float(ce)

    def back(g):
        _accumulate(s, g * ls)
        _accumulate(ce, g * lc)

    return _result(np.array(value), (s, ce), back)


def chamfer_assignment(pred: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest truth index for every pred point and nearest pred index for every truth point."""
    _, a = cKDTree(truth).query(pred)
    _, b = cKDTree(pred).query(truth)
    return a, b


def _chamfer_single(p: np.ndarray, t: np.ndarray, assignment):
    a, b = assignment if assignment is not None else chamfer_assignment(p, t)
    d1 = p - t[a]
    d2 = p[b] - t
    n1 = np.linalg.norm(d1, axis=1)
    n2 = np.linalg.norm(d2, axis=1)
    value = n1.mean() + n2.mean()
    grad = np.where(n1[:, None] > 0, d1 / np.where(n1 > 0, n1, 1.0)[:, None], 0.0) / len(p)
    u2 = np.where(n2[:, None] > 0, d2 / np.where(n2 > 0, n2, 1.0)[:, None], 0.0) / len(t)
    np.add.at(grad, b, u2)
    return value, grad


def chamfer_loss(pred, truth, assignment=None) -> Tensor:
    """Two-term Chamfer distance with unsquared norms.

    ``pred`` is (P, 3) or (B, P, 3); ``truth`` is a cloud or a list of clouds
    (one per batch item, sizes may differ). ``assignment`` optionally fixes
    the nearest-neighbor pairs (one pair of index arrays per item).
    """
    p = pred if isinstance(pred, Tensor) else Tensor(_target(pred))
    batched = p.data.ndim == 3
    preds = p.data if batched else p.data[None]
    truths = [_target(t) for t in truth] if batched else [_target(truth)]
    if len(truths) != preds.shape[0]:
        raise ValueError(f"{preds.shape[0]} predictions but {len(truths)} targets")
    if assignment is not None and not batched:
        assignment = [assignment]
    for t in truths:
        if t.ndim != 2 or t.shape[0] == 0:
            raise ValueError("empty point cloud")
    if preds.shape[1] == 0:
        raise ValueError("empty point cloud")
    values, grads = [], []
    for k, (pk, tk) in enumerate(zip(preds, truths)):
        v, g = _chamfer_single(pk, tk, None if assignment is None else assignment[k])
        values.append(v)
        grads.append(g)
    n = len(values)
    grad = np.stack(grads) / n
    if not batched:
        grad = grad[0]

    return _result(np.array(float(np.mean(values))), (p,), lambda g: _accumulate(p, g * grad))


class FrozenChamfer:
    """Chamfer loss whose nearest-neighbor pairs are fixed at the first call.

    Finite-difference checks use it so a perturbation cannot switch pairs.
    """

    def __init__(self, truth):
        self.truth = truth
        self.assignment = None

    def __call__(self, pred: Tensor) -> Tensor:
        if self.assignment is None:
            preds = pred.data if pred.data.ndim == 3 else pred.data[None]
            truths = self.truth if pred.data.ndim == 3 else [self.truth]
            self.assignment = [chamfer_assignment(pk, _target(tk)) for pk, tk in zip(preds, truths)]
            if pred.data.ndim == 2:
                self.assignment = self.assignment[0]
        return chamfer_loss(pred, self.truth, self.assignment)
