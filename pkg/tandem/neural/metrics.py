import numpy as np
from skimage.metrics import structural_similarity

from ..exceptions import MetricError, ShapeError
from .losses import loss_bce

SSIM_SIGMA = 1.5
SSIM_WINDOW = 11


def metric_ssim(a, b):
    """Mean SSIM, 11x11 Gaussian window (sigma 1.5), K1 0.01, K2 0.03, data range 1."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeError(f"SSIM needs two equal 2-D images, got {a.shape} and {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ShapeError(f"SSIM window is {SSIM_WINDOW}x{SSIM_WINDOW}; image {a.shape} is too small")
    return float(structural_similarity(
        a, b,
        gaussian_weights=True,
        sigma=SSIM_SIGMA,
        use_sample_covariance=False,
        data_range=1.0,
        K1=0.01,
        K2=0.03,
    ))


def metric_bce(predicted, target):
    loss, _ = loss_bce(predicted, target)
    return loss


def metric_r2(predicted, target):
    """1 - SS_res / SS_tot over every element."""
    predicted = np.asarray(predicted, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if predicted.shape != target.shape:
        raise ShapeError(f"R2 inputs differ in size: {predicted.size} vs {target.size}")
    if target.size < 2:
        raise MetricError("R2 needs at least two samples")
    ss_tot = np.sum((target - target.mean()) ** 2)
    if ss_tot == 0:
        raise MetricError("R2 is undefined for a constant target")
    return float(1 - np.sum((target - predicted) ** 2) / ss_tot)


class R2Accumulator:
    """Single-pass R2 over batches (pairwise mean/variance merge)."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0
        self.ss_res = 0.0

    def update(self, predicted, target):
        predicted = np.asarray(predicted, dtype=np.float64).ravel()
        target = np.asarray(target, dtype=np.float64).ravel()
        n = target.size
        if n == 0:
            return
        batch_mean = target.mean()
        batch_m2 = np.sum((target - batch_mean) ** 2)
        total = self.count + n
        delta = batch_mean - self.mean
        self.m2 += batch_m2 + delta * delta * self.count * n / total
        self.mean += delta * n / total
        self.count = total
        self.ss_res += float(np.sum((target - predicted) ** 2))

    def result(self):
        if self.count < 2:
            raise MetricError("R2 needs at least two samples")
        if self.m2 == 0:
            raise MetricError("R2 is undefined for a constant target")
        return float(1 - self.ss_res / self.m2)


def regression_fit(predicted, target):
    """Least-squares line predicted = slope * target + intercept."""
    slope, intercept = np.polyfit(np.ravel(target), np.ravel(predicted), 1)
    return float(slope), float(intercept)
