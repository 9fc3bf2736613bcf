"""Image metrics used to score interpretations against ground-truth masks."""
from __future__ import annotations

import math

import numpy as np

C1 = (0.01 * 1.0) ** 2
C2 = (0.03 * 1.0) ** 2


def _arr(img) -> np.ndarray:
    return np.asarray(getattr(img, "grid", img), dtype=float)


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    a, b = _arr(x), _arr(y)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def iou(pred, truth) -> float:
    """Foreground intersection over union; 1 when both masks are empty."""
    a, b = _pair(pred, truth)
    a, b = a > 0, b > 0
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def pixel_accuracy(pred, truth) -> float:
    a, b = _pair(pred, truth)
    return float(np.count_nonzero((a > 0) == (b > 0)) / a.size)


def mse(x, y) -> float:
    a, b = _pair(x, y)
    return float(np.mean((a - b) ** 2))


def rmse_image(x, y) -> float:
    return math.sqrt(mse(x, y))


def snr_db(x, y) -> float:
    """10 log10 of reference power over the power of the deviation ``x - y``."""
    a, b = _pair(x, y)
    noise = float(np.sum((a - b) ** 2))
    if noise == 0:
        raise ValueError("infinite SNR: images are identical")
    return 10.0 * math.log10(float(np.sum(b**2)) / noise)


def ssim(x, y, c1: float = C1, c2: float = C2) -> float:
    """Whole-image structural similarity with unbiased (n-1) moments."""
    a, b = _pair(x, y)
    if not (c1 > 0 and c2 > 0):
        raise ValueError("stabilizers must be positive")
    n = a.size
    mu_a, mu_b = a.mean(), b.mean()
    da, db = a - mu_a, b - mu_b
    var_a = np.sum(da * da) / (n - 1)
    var_b = np.sum(db * db) / (n - 1)
    cov = np.sum(da * db) / (n - 1)
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(num / den)
