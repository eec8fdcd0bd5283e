import math

import numpy as np
from django.test import SimpleTestCase

from tandem.exceptions import DomainError, MetricError, ShapeError
from tandem.neural.losses import (
    BCE_CLAMP, kl_standard_normal, loss_bce, loss_inn, loss_mse_l2, reparameterize, sigma_from_logvar,
)
from tandem.neural.metrics import R2Accumulator, metric_bce, metric_r2, metric_ssim, regression_fit

from .factories import numerical_grad, numerical_gradient, relative_error


class BCETests(SimpleTestCase):

    def test_value_and_gradient(self):
        p = np.array([0.2, 0.7, 0.9])
        t = np.array([0.0, 1.0, 1.0])
        loss, grad = loss_bce(p, t)
        expected = -np.mean([math.log(0.8), math.log(0.7), math.log(0.9)])
        self.assertAlmostEqual(loss, expected, places=12)
        for i in range(3):
            self.assertAlmostEqual(grad[i], numerical_grad(lambda: loss_bce(p, t)[0], p, i), places=6)

    def test_clamped_at_extremes(self):
        loss, grad = loss_bce(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
        self.assertAlmostEqual(loss, -math.log(BCE_CLAMP), places=6)
        self.assertFalse(grad.any())
        self.assertTrue(math.isfinite(metric_bce(np.array([1.0]), np.array([1.0]))))

    def test_targets_must_be_binary(self):
        with self.assertRaises(DomainError):
            loss_bce(np.array([0.5]), np.array([0.5]))
        with self.assertRaises(ShapeError):
            loss_bce(np.array([0.5, 0.5]), np.array([1.0]))


class MSETests(SimpleTestCase):

    def test_penalty_and_gradients(self):
        w = np.array([[1.0, -2.0]])
        loss, grad, weight_grads = loss_mse_l2(np.array([1.0, 3.0]), np.array([0.0, 1.0]), [w], l2=0.1)
        self.assertAlmostEqual(loss, (1 + 4) / 2 + 0.1 * 5)
        np.testing.assert_allclose(grad, [1.0, 2.0])
        np.testing.assert_allclose(weight_grads[0], 0.2 * w)

    def test_negative_penalty_rejected(self):
        with self.assertRaises(DomainError):
            loss_mse_l2(np.zeros(2), np.zeros(2), l2=-1)


class INNLossTests(SimpleTestCase):

    def test_kl_vanishes_at_prior(self):
        self.assertEqual(kl_standard_normal(np.zeros((1, 4)), np.ones((1, 4)))[0], 0.0)
        with self.assertRaises(DomainError):
            kl_standard_normal(np.zeros(2), np.array([1.0, 0.0]))

    def test_composite_value_is_batch_mean(self):
        pred = np.array([[1.0, 0.0], [0.0, 0.0]])
        target = np.zeros((2, 2))
        mu = np.array([[1.0], [0.0]])
        sigma = np.ones((2, 1))
        loss, grad_pred, grad_mu, grad_sigma = loss_inn(pred, target, mu, sigma, alpha=0.5)
        # sample 0: L1 1 + 0.5 * KL 0.5; sample 1: 0
        self.assertAlmostEqual(loss, (1 + 0.25) / 2)
        np.testing.assert_allclose(grad_pred, [[0.5, 0.0], [0.0, 0.0]])
        np.testing.assert_allclose(grad_mu, [[0.25], [0.0]])
        np.testing.assert_allclose(grad_sigma, [[0.0], [0.0]])

    def test_sigma_gradient(self):
        mu = np.zeros((1, 3))
        sigma = np.array([[0.5, 1.5, 2.0]])
        _, _, _, grad_sigma = loss_inn(np.zeros((1, 2)), np.zeros((1, 2)), mu, sigma, alpha=1.0)
        loss = lambda: loss_inn(np.zeros((1, 2)), np.zeros((1, 2)), mu, sigma, 1.0)[0]  # noqa: E731
        for j in range(3):
            self.assertAlmostEqual(grad_sigma[0, j], numerical_grad(loss, sigma, (0, j)), places=6)

    def test_reparameterization_uses_caller_stream(self):
        mu, sigma = np.zeros((2, 3)), sigma_from_logvar(np.zeros((2, 3)))
        z1, eps1 = reparameterize(mu, sigma, np.random.default_rng(5))
        z2, _ = reparameterize(mu, sigma, np.random.default_rng(5))
        np.testing.assert_array_equal(z1, z2)
        np.testing.assert_array_equal(z1, eps1)

    def test_reparameterized_samples_center_on_mu(self):
        draws = 100_000
        mu = np.array([0.5, -1.0, 2.0, 0.0])
        sigma = np.array([0.3, 1.0, 2.0, 0.8])
        z, _ = reparameterize(np.tile(mu, (draws, 1)), np.tile(sigma, (draws, 1)), np.random.default_rng(11))
        self.assertTrue((np.abs(z.mean(axis=0) - mu) <= 4 * sigma / math.sqrt(draws)).all())
        np.testing.assert_allclose(z.std(axis=0), sigma, rtol=0.02)


class LossGradientSweepTests(SimpleTestCase):
    """Analytic loss gradients against central differences over 100 seeds."""

    def assert_matches(self, analytic, loss, array, seed, name, tolerance=1e-6):
        error = relative_error(analytic, numerical_gradient(loss, array))
        self.assertLessEqual(error, tolerance, msg=f"seed {seed}, {name}")

    def test_bce(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            p = rng.uniform(0.05, 0.95, (3, 4))
            t = rng.integers(0, 2, (3, 4)).astype(float)
            _, grad = loss_bce(p, t)
            self.assert_matches(grad, lambda: loss_bce(p, t)[0], p, seed, 'predicted')

    def test_mse_with_penalty(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            pred, target = rng.standard_normal((2, 3, 4))
            weights = [rng.standard_normal((2, 3)), rng.standard_normal(4)]
            l2 = rng.uniform(0.01, 0.1)
            _, grad, weight_grads = loss_mse_l2(pred, target, weights, l2)
            loss = lambda: loss_mse_l2(pred, target, weights, l2)[0]  # noqa: E731
            self.assert_matches(grad, loss, pred, seed, 'predicted')
            for index, (w, analytic) in enumerate(zip(weights, weight_grads)):
                self.assert_matches(analytic, loss, w, seed, f"weight {index}")

    def test_inn_composite(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            target = rng.standard_normal((3, 5))
            # L1 term: keep every residual clear of its kink.
            pred = target + rng.uniform(1e-3, 1.0, (3, 5)) * rng.choice([-1.0, 1.0], (3, 5))
            mu = rng.standard_normal((3, 2))
            sigma = rng.uniform(0.3, 3.0, (3, 2))
            alpha = rng.uniform(0.1, 1.0)
            _, grad_pred, grad_mu, grad_sigma = loss_inn(pred, target, mu, sigma, alpha)
            loss = lambda: loss_inn(pred, target, mu, sigma, alpha)[0]  # noqa: E731
            self.assert_matches(grad_pred, loss, pred, seed, 'predicted')
            self.assert_matches(grad_mu, loss, mu, seed, 'mu')
            self.assert_matches(grad_sigma, loss, sigma, seed, 'sigma')


class MetricTests(SimpleTestCase):

    def test_ssim_identity_and_range(self):
        rng = np.random.default_rng(0)
        a = (rng.random((16, 16)) > 0.5).astype(float)
        self.assertAlmostEqual(metric_ssim(a, a), 1.0, places=12)
        value = metric_ssim(a, 1 - a)
        self.assertLess(value, 0.0)
        self.assertGreaterEqual(value, -1.0)

    def test_ssim_floor_for_opposite_constant_images(self):
        zeros, ones = np.zeros((16, 16)), np.ones((16, 16))
        # Flat patches leave only the luminance term: C1 / (1 + C1) with C1 = 0.01^2.
        floor = 1e-4 / (1 + 1e-4)
        self.assertAlmostEqual(metric_ssim(zeros, ones), floor, delta=1e-8)
        self.assertAlmostEqual(metric_ssim(ones, zeros), floor, delta=1e-8)
        self.assertLess(metric_ssim(zeros, ones), 0.01)

    def test_ssim_rejects_small_or_mismatched(self):
        with self.assertRaises(ShapeError):
            metric_ssim(np.zeros((8, 8)), np.zeros((8, 8)))
        with self.assertRaises(ShapeError):
            metric_ssim(np.zeros((16, 16)), np.zeros((16, 12)))

    def test_r2(self):
        target = np.array([1.0, 2.0, 3.0, 4.0])
        self.assertEqual(metric_r2(target, target), 1.0)
        self.assertAlmostEqual(metric_r2(np.full(4, 2.5), target), 0.0)
        with self.assertRaises(MetricError):
            metric_r2(np.ones(3), np.ones(3))
        with self.assertRaises(MetricError):
            metric_r2(np.ones(1), np.ones(1))

    def test_accumulator_matches_single_pass(self):
        rng = np.random.default_rng(1)
        target = rng.standard_normal((10, 6)) + 3
        predicted = target + 0.1 * rng.standard_normal((10, 6))
        acc = R2Accumulator()
        for start in range(0, 10, 3):
            acc.update(predicted[start:start + 3], target[start:start + 3])
        self.assertAlmostEqual(acc.result(), metric_r2(predicted, target), places=12)

    def test_regression_fit(self):
        target = np.linspace(0, 1, 20)
        slope, intercept = regression_fit(2 * target + 0.5, target)
        self.assertAlmostEqual(slope, 2.0)
        self.assertAlmostEqual(intercept, 0.5)
