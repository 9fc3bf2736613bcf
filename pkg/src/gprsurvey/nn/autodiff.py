"""Minimal reverse-mode differentiation over a fixed set of numpy operators.

Every operator returns a :class:`Tensor` holding its forward value and a
closure that pushes the output gradient to its inputs. Only the operators
the two networks and their losses need are provided.
"""
from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents: tuple = (), backward: Callable | None = None):
        self.data = np.asarray(data, dtype=float)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __float__(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self, grad: np.ndarray | None = None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order, seen = [], set()

        def visit(node):
            stack = [(node, False)]
            while stack:
                n, done = stack.pop()
                if done:
                    order.append(n)
                    continue
                if id(n) in seen:
                    continue
                seen.add(id(n))
                stack.append((n, True))
                for p in n._parents:
                    if p.requires_grad and id(p) not in seen:
                        stack.append((p, False))

        visit(self)
        self.grad = grad if self.grad is None else self.grad + grad
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents: Sequence[Tensor], backward) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, needs, tuple(parents) if needs else (), backward if needs else None)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# routing ----------------------------------------------------------------
# ReLU masks and max-pool argmaxes are the only data-dependent branches.
# Inside ``frozen_routing`` the first forward pass records them and later
# passes replay them, so finite differences see one smooth piece.

class _Routing:
    def __init__(self):
        self.records: list[np.ndarray] = []
        self.cursor = 0
        self.replaying = False

    def route(self, compute: Callable[[], np.ndarray]) -> np.ndarray:
        if not self.replaying:
            r = compute()
            self.records.append(r)
            return r
        r = self.records[self.cursor]
        self.cursor += 1
        return r


_routing: _Routing | None = None


def _route(compute: Callable[[], np.ndarray]) -> np.ndarray:
    return compute() if _routing is None else _routing.route(compute)


@contextmanager
def frozen_routing() -> Iterator[Callable[[], None]]:
    """Record branch decisions on the first pass; call the yielded function to replay them."""
    global _routing
    prev, _routing = _routing, _Routing()
    state = _routing

    def replay():
        state.replaying = True
        state.cursor = 0

    try:
        yield replay
    finally:
        _routing = prev


# elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)

    def back(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), back)


def scale(a, c: float) -> Tensor:
    a = _lift(a)
    return _result(a.data * c, (a,), lambda g: _accumulate(a, g * c))


def relu(x) -> Tensor:
    x = _lift(x)
    mask = _route(lambda: x.data > 0)
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: _accumulate(x, g * mask))


def sigmoid(x) -> Tensor:
    x = _lift(x)
    y = expit(x.data)
    return _result(y, (x,), lambda g: _accumulate(x, g * y * (1.0 - y)))


# shape -------------------------------------------------------------------

def reshape(x, shape: tuple[int, ...]) -> Tensor:
    x = _lift(x)
    old = x.shape
    return _result(x.data.reshape(shape), (x,), lambda g: _accumulate(x, g.reshape(old)))


def concat(tensors: Sequence, axis: int) -> Tensor:
    ts = [_lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum([0] + sizes)

    def back(g):
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(sl)])

    return _result(np.concatenate([t.data for t in ts], axis=axis), ts, back)


# dense -------------------------------------------------------------------

def linear(x, w, b=None) -> Tensor:
    """x @ w (+ b) over the last axis; also serves as a shared per-point MLP layer."""
    x, w = _lift(x), _lift(w)
    parents = [x, w]
    out = x.data @ w.data
    if b is not None:
        b = _lift(b)
        parents.append(b)
        out = out + b.data

    def back(g):
        _accumulate(x, g @ w.data.T)
        g2 = g.reshape(-1, g.shape[-1])
        _accumulate(w, x.data.reshape(-1, x.shape[-1]).T @ g2)
        if b is not None:
            _accumulate(b, g2.sum(axis=0))

    return _result(out, parents, back)


# convolution -------------------------------------------------------------

def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """(B, C, Hp, Wp) padded input -> (B*ho*wo, C*k*k) patch matrix."""
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    b, c = xp.shape[:2]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * k * k)


def _col2im(cols: np.ndarray, shape: tuple[int, int, int, int], k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`: scatter-add patches into a (B, C, Hp, Wp) array."""
    b, c, hp, wp = shape
    out = np.zeros(shape)
    patches = cols.reshape(b, ho, wo, c, k, k).transpose(0, 3, 1, 2, 4, 5)
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += patches[..., i, j]
    return out


def conv2d(x, w, b=None, stride: int = 1, padding: int | None = None) -> Tensor:
    """Cross-correlation of (B, Cin, H, W) with (Cout, Cin, k, k) kernels."""
    x, w = _lift(x), _lift(w)
    cout, cin, k, _ = w.shape
    if x.shape[1] != cin:
        raise ValueError(f"conv2d expects {cin} input channels, got {x.shape[1]}")
    pad = (k - 1) // 2 if padding is None else padding
    bsz, _, h, wd = x.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = _im2col(xp, k, stride, ho, wo)
    wmat = w.data.reshape(cout, -1)
    out = cols @ wmat.T
    if b is not None:
        b = _lift(b)
        out = out + b.data
    out = out.reshape(bsz, ho, wo, cout).transpose(0, 3, 1, 2)
    parents = [x, w] + ([b] if b is not None else [])

    def back(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        _accumulate(w, (g2.T @ cols).reshape(w.shape))
        if b is not None:
            _accumulate(b, g2.sum(axis=0))
        if x.requires_grad:
            dxp = _col2im(g2 @ wmat, xp.shape, k, stride, ho, wo)
            _accumulate(x, dxp[:, :, pad : pad + h, pad : pad + wd])

    return _result(np.ascontiguousarray(out), parents, back)


def conv_transpose2d(x, w, b=None, stride: int = 1, padding: int | None = None) -> Tensor:
    """Transposed convolution of (B, Cin, H, W) with (Cin, Cout, k, k) kernels.

    Output size is (H - 1) * stride + k - 2 * padding; it is the adjoint of
    :func:`conv2d` with the same geometry.
    """
    x, w = _lift(x), _lift(w)
    cin, cout, k, _ = w.shape
    if x.shape[1] != cin:
        raise ValueError(f"conv_transpose2d expects {cin} input channels, got {x.shape[1]}")
    pad = (k - 1) // 2 if padding is None else padding
    bsz, _, h, wd = x.shape
    hf, wf = (h - 1) * stride + k, (wd - 1) * stride + k
    xm = x.data.transpose(0, 2, 3, 1).reshape(-1, cin)
    wmat = w.data.reshape(cin, -1)
    full = _col2im(xm @ wmat, (bsz, cout, hf, wf), k, stride, h, wd)
    out = full[:, :, pad : hf - pad, pad : wf - pad]
    if b is not None:
        b = _lift(b)
        out = out + b.data[None, :, None, None]
    parents = [x, w] + ([b] if b is not None else [])

    def back(g):
        gp = np.zeros((bsz, cout, hf, wf))
        gp[:, :, pad : hf - pad, pad : wf - pad] = g
        gcols = _im2col(gp, k, stride, h, wd)
        _accumulate(w, (xm.T @ gcols).reshape(w.shape))
        if b is not None:
            _accumulate(b, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            _accumulate(x, (gcols @ wmat.T).reshape(bsz, h, wd, cin).transpose(0, 3, 1, 2))

    return _result(np.ascontiguousarray(out), parents, back)


# pooling -----------------------------------------------------------------

def maxpool2d(x, k: int) -> Tensor:
    """Non-overlapping k x k max pooling; the gradient goes to the first maximum."""
    x = _lift(x)
    b, c, h, w = x.shape
    if h % k or w % k:
        raise ValueError(f"spatial size {h}x{w} not divisible by pool kernel {k}")
    blocks = x.data.reshape(b, c, h // k, k, w // k, k).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h // k, w // k, k * k)
    arg = _route(lambda: blocks.argmax(axis=-1))
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def back(g):
        d = np.zeros_like(blocks)
        np.put_along_axis(d, arg[..., None], g[..., None], axis=-1)
        d = d.reshape(b, c, h // k, w // k, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)
        _accumulate(x, d)

    return _result(out, (x,), back)


def upsample_nearest(x, k: int) -> Tensor:
    x = _lift(x)
    b, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, k, axis=2), k, axis=3)
    return _result(out, (x,), lambda g: _accumulate(x, g.reshape(b, c, h, k, w, k).sum(axis=(3, 5))))


def max_over_points(x) -> Tensor:
    """Global max over the point axis: (B, P, F) -> (B, F)."""
    x = _lift(x)
    arg = _route(lambda: x.data.argmax(axis=1))
    out = np.take_along_axis(x.data, arg[:, None, :], axis=1)[:, 0, :]

    def back(g):
        d = np.zeros_like(x.data)
        np.put_along_axis(d, arg[:, None, :], g[:, None, :], axis=1)
        _accumulate(x, d)

    return _result(out, (x,), back)


def broadcast_points(g, n: int) -> Tensor:
    """(B, F) -> (B, n, F) by repeating a global feature for every point."""
    g = _lift(g)
    out = np.repeat(g.data[:, None, :], n, axis=1)
    return _result(out, (g,), lambda d: _accumulate(g, d.sum(axis=1)))


def fold_grid(seeds, grid: np.ndarray, feature) -> Tensor:
    """Folding-decoder input: every seed paired with every grid offset and the global feature.

    seeds (B, S, 3), grid (G, 2), feature (B, F) -> (B, S*G, 3 + 2 + F),
    seed-major so rows ``s*G .. s*G+G-1`` belong to seed ``s``.
    """
    seeds, feature = _lift(seeds), _lift(feature)
    b, s, _ = seeds.shape
    n_grid = grid.shape[0]
    f = feature.shape[1]
    rep_seeds = np.repeat(seeds.data, n_grid, axis=1)
    rep_grid = np.broadcast_to(np.tile(grid, (s, 1))[None], (b, s * n_grid, 2))
    rep_feat = np.broadcast_to(feature.data[:, None, :], (b, s * n_grid, f))
    out = np.concatenate([rep_seeds, rep_grid, rep_feat], axis=2)

    def back(g):
        _accumulate(seeds, g[:, :, :3].reshape(b, s, n_grid, 3).sum(axis=2))
        _accumulate(feature, g[:, :, 5:].sum(axis=1))

    return _result(out, (seeds, feature), back)


def repeat_points(x, r: int) -> Tensor:
    """(B, S, D) -> (B, S*r, D), each point repeated ``r`` times in place."""
    x = _lift(x)
    b, s, d = x.shape
    return _result(np.repeat(x.data, r, axis=1), (x,), lambda g: _accumulate(x, g.reshape(b, s, r, d).sum(axis=2)))
