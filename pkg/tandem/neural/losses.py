"""
Training losses. Each returns the scalar value and the gradients the trainers need.

Batch losses are means over the batch so learning rates do not depend on batch size.
"""
import numpy as np

from ..exceptions import DomainError, ShapeError

BCE_CLAMP = 1e-7


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: prediction {a.shape} and target {b.shape} differ")


def loss_bce(predicted, target):
    """Positive mean binary cross-entropy; gradient w.r.t. ``predicted`` (zero where clamped)."""
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _same_shape(predicted, target, 'bce')
    if not np.isin(target, (0.0, 1.0)).all():
        raise DomainError("bce targets must be 0 or 1")
    p = np.clip(predicted, BCE_CLAMP, 1 - BCE_CLAMP)
    n = p.size
    loss = -np.mean(target * np.log(p) + (1 - target) * np.log(1 - p))
    grad = (p - target) / (p * (1 - p)) / n
    grad[(predicted < BCE_CLAMP) | (predicted > 1 - BCE_CLAMP)] = 0.0
    return float(loss), grad


def loss_mse_l2(predicted, target, weights=(), l2=0.0):
    """(1/n) sum (y - y_hat)^2 + l2 * sum w^2; returns (loss, grad_pred, weight grads)."""
    if l2 < 0:
        raise DomainError(f"l2 must be >= 0 (got {l2})")
    predicted = np.asarray(predicted)
    target = np.asarray(target)
    _same_shape(predicted, target, 'mse')
    diff = predicted - target
    loss = float(np.mean(diff * diff))
    loss += l2 * sum(float(np.sum(w.astype(np.float64) ** 2)) for w in weights)
    grad = 2 * diff / diff.size
    return loss, grad, [2 * l2 * w for w in weights]


def kl_standard_normal(mu, sigma):
    """KL(N(mu, sigma^2) || N(0, 1)) summed over the latent axis, one value per row."""
    if np.any(sigma <= 0):
        raise DomainError("sigma must be > 0 everywhere")
    return -0.5 * np.sum(1 + np.log(sigma ** 2) - mu ** 2 - sigma ** 2, axis=-1)


def loss_inn(predicted, target, mu, sigma, alpha):
    """
    Per-sample sum |y - y_hat| + alpha * KL, averaged over the batch.

    Returns (loss, grad_pred, grad_mu, grad_sigma).
    """
    predicted = np.atleast_2d(predicted)
    target = np.atleast_2d(target)
    mu = np.atleast_2d(mu)
    sigma = np.atleast_2d(sigma)
    _same_shape(predicted, target, 'inn')
    batch = predicted.shape[0]
    diff = predicted - target
    kl = kl_standard_normal(mu, sigma)
    loss = float(np.mean(np.sum(np.abs(diff), axis=1) + alpha * kl))
    grad_pred = np.sign(diff) / batch
    grad_mu = alpha * mu / batch
    grad_sigma = alpha * (sigma - 1 / sigma) / batch
    return loss, grad_pred, grad_mu, grad_sigma


def reparameterize(mu, sigma, rng):
    """z = mu + sigma * eps with eps ~ N(0, I) from the caller's stream; returns (z, eps)."""
    eps = rng.standard_normal(np.shape(mu))
    return mu + sigma * eps, eps


def sigma_from_logvar(logvar):
    return np.exp(0.5 * logvar)
