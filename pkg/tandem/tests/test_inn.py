import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from tandem.exceptions import IntegrationError, ShapeError
from tandem.fnn import FieldScaler
from tandem.inn import (
    INNHyper, INNModel, check_compatible, composite_step, evaluate_inn, frozen_refs, inn_forward, invert, train_inn,
)
from tandem.neural.bundle import param_checksum

from .factories import numerical_grad, tiny_aae, tiny_fnn


def _composite(aae=None, fnn=None, **kwargs):
    aae = aae or tiny_aae()
    fnn = fnn or tiny_fnn()
    fnn.scaler = FieldScaler(np.full(6, 2.0), np.full(6, 0.5))
    return INNModel(aae, fnn, hidden=(7,), rng=np.random.default_rng(1), **kwargs)


class CompositeTests(SimpleTestCase):

    def test_incompatible_generator_rejected(self):
        with self.assertRaises(IntegrationError):
            INNModel(tiny_aae(grid_n=16), tiny_fnn(grid_n=8))

    def test_different_scenes_rejected(self):
        with self.assertRaises(IntegrationError):
            check_compatible(tiny_aae(), tiny_fnn(), {'scene': {'grid_n': 8}}, {'scene': {'grid_n': 16}})

    def test_forward_chain_shapes(self):
        model = _composite()
        out = inn_forward(model, np.full((2, 6), 2.0), np.random.default_rng(0))
        self.assertEqual(out.z.shape, (2, 3))
        self.assertEqual(out.image.shape, (2, 64))
        self.assertEqual(out.predicted_fields.shape, (2, 6))
        with self.assertRaises(ShapeError):
            inn_forward(model, np.zeros((1, 5)), np.random.default_rng(0))

    def test_gradient_through_frozen_modules(self):
        model = _composite()
        y = np.random.default_rng(2).standard_normal((3, 6))

        def loss():
            return composite_step(model, y, 0.1, np.random.default_rng(9))

        loss()
        mu_grad = model.mu_head[0].grads['weight'].copy()
        block_grad = model.block[0].grads['weight'].copy()
        mu_weight = model.mu_head[0].params['weight']
        block_weight = model.block[0].params['weight']
        for index in ((0, 0), (2, 6)):
            self.assertAlmostEqual(mu_grad[index], numerical_grad(loss, mu_weight, index), places=5)
        for index in ((0, 0), (3, 5), (6, 2)):
            self.assertAlmostEqual(block_grad[index], numerical_grad(loss, block_weight, index), places=5)

    def test_frozen_modules_receive_no_gradient(self):
        model = _composite()
        model.aae.generator.zero_grad()
        model.fnn.network.zero_grad()
        composite_step(model, np.zeros((2, 6)), 0.1, np.random.default_rng(0))
        for grad in model.aae.generator.grads() + model.fnn.network.grads():
            self.assertFalse(grad.any())


class TrainingTests(SimpleTestCase):

    def setUp(self):
        rng = np.random.default_rng(3)
        self.train = 2.0 + 0.5 * rng.standard_normal((24, 6))
        self.test = 2.0 + 0.5 * rng.standard_normal((6, 6))
        self.tmp = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_training_keeps_frozen_weights(self):
        model = _composite()
        before = model.frozen_checksum()
        hyper = INNHyper(lr=1e-3, batch_size=8, alpha=0.01, patience=2, max_epochs=4, checkpoint_every=0)
        model, history = train_inn(model, self.train, self.test, hyper, np.random.default_rng(0), out_dir=self.out)
        self.assertEqual(model.frozen_checksum(), before)
        self.assertGreaterEqual(len(history), 1)
        self.assertIsNotNone(model.consistency_bound)
        _, _, _, residuals = evaluate_inn(model, model.fnn.scaler.transform(self.test), hyper.alpha)
        self.assertAlmostEqual(model.consistency_bound, residuals.max(), places=10)
        self.assertTrue((self.out / 'inn_history.csv').exists())

    def test_zero_alpha_trains_on_field_error_alone(self):
        model = _composite()
        trainable = param_checksum(*model.networks.values())
        hyper = INNHyper(lr=1e-3, batch_size=8, alpha=0.0, patience=5, max_epochs=3, checkpoint_every=0)
        model, history = train_inn(model, self.train, self.test, hyper, np.random.default_rng(0))
        self.assertNotEqual(param_checksum(*model.networks.values()), trainable)
        for row in history:
            self.assertTrue(np.isfinite(row['train_loss']))
            self.assertEqual(row['test_loss'], row['test_l1'])

    def test_invert_returns_binary_image(self):
        model = _composite()
        result = invert(model, self.test[0])
        self.assertEqual(result.image.mask.shape, (8, 8))
        self.assertTrue(np.isin(result.image.mask, (0, 1)).all())
        self.assertEqual(result.predicted_fields.shape, (6,))
        self.assertTrue(result.consistent)
        model.consistency_bound = result.residual_l1 / 2
        self.assertFalse(invert(model, self.test[0]).consistent)
        with self.assertRaises(ShapeError):
            invert(model, self.test[:2])


class BundleIntegrityTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.aae_path = tiny_aae().save(self.dir / 'aae.tndb')
        fnn = tiny_fnn()
        fnn.scaler = FieldScaler(np.full(6, 2.0), np.full(6, 0.5))
        self.fnn_path = fnn.save(self.dir / 'fnn.tndb')

    def tearDown(self):
        self.tmp.cleanup()

    def _saved_inn(self):
        from tandem.aae import AAEModel
        from tandem.fnn import FNNModel

        refs = frozen_refs(self.aae_path, self.fnn_path)
        model = INNModel(AAEModel.load(self.aae_path), FNNModel.load(self.fnn_path), hidden=(7,), frozen_refs=refs)
        model.consistency_bound = 3.0
        return model, model.save(self.dir / 'inn.tndb')

    def test_reload_reproduces_inversion(self):
        model, path = self._saved_inn()
        again = INNModel.load(path)
        fields = np.linspace(1.5, 2.5, 6)
        self.assertEqual(again.consistency_bound, 3.0)
        np.testing.assert_allclose(invert(again, fields).soft_image, invert(model, fields).soft_image, atol=1e-5)

    def test_changed_generator_file_detected(self):
        _, path = self._saved_inn()
        tiny_aae(seed=7).save(self.aae_path)
        with self.assertRaises(IntegrationError):
            INNModel.load(path)

    def test_missing_fnn_file_detected(self):
        _, path = self._saved_inn()
        self.fnn_path.unlink()
        with self.assertRaises(IntegrationError):
            INNModel.load(path)
