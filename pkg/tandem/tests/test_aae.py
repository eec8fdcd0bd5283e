import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from tandem.aae import (
    HISTORY_FIELDS, AAEHyper, AAEModel, aae_forward, discriminator_step, generate, latent_statistics,
    reconstruct_mean, train_aae,
)
from tandem.exceptions import ShapeError, TrainingAborted
from tandem.exports import read_csv
from tandem.neural.bundle import load_bundle, param_checksum
from tandem.neural.losses import loss_bce
from tandem.neural.metrics import metric_bce
from tandem.neural.optim import AdamState

from .factories import random_masks, slow, tiny_aae


def block_images(count):
    """Three square blobs in fixed places, repeated."""
    prototypes = np.zeros((3, 8, 8), dtype=np.uint8)
    prototypes[0, 1:4, 1:4] = 1
    prototypes[1, 4:7, 4:7] = 1
    prototypes[2, 3:5, 2:6] = 1
    return prototypes[np.arange(count) % 3]


class AAEForwardTests(SimpleTestCase):

    def setUp(self):
        self.model = tiny_aae()
        self.images = block_images(4)

    def test_forward_shapes(self):
        out = aae_forward(self.model, self.images, np.random.default_rng(0))
        self.assertEqual(out.mu.shape, (4, 3))
        self.assertEqual(out.reconstruction.shape, (4, 64))
        self.assertTrue(((out.disc_prior > 0) & (out.disc_prior < 1)).all())
        self.assertTrue((out.sigma > 0).all())

    def test_non_binary_input_rejected(self):
        with self.assertRaises(ShapeError):
            aae_forward(self.model, np.full((1, 8, 8), 0.5), np.random.default_rng(0))

    def test_generate_checks_latent_width(self):
        self.assertEqual(generate(self.model, np.zeros(3)).shape, (64,))
        with self.assertRaises(ShapeError):
            generate(self.model, np.zeros(4))

    def test_discriminator_step_touches_only_discriminator(self):
        before = param_checksum(self.model.generator, self.model.encoder)
        disc_before = param_checksum(self.model.discriminator)
        rng = np.random.default_rng(2)
        state = AdamState.for_params(self.model.discriminator.parameters(), lr=1e-3)
        discriminator_step(self.model, rng.standard_normal((5, 3)), rng.standard_normal((5, 3)), state)
        self.assertEqual(param_checksum(self.model.generator, self.model.encoder), before)
        self.assertNotEqual(param_checksum(self.model.discriminator), disc_before)

    def test_discriminator_step_lowers_its_loss(self):
        mu, _ = self.model.encode(self.images.reshape(4, -1).astype(np.float64))
        z_prior = np.random.default_rng(4).standard_normal(mu.shape)

        def adversarial_loss():
            prior, _ = loss_bce(self.model.discriminator.forward(z_prior), np.ones((4, 1)))
            latent, _ = loss_bce(self.model.discriminator.forward(mu), np.zeros((4, 1)))
            return prior + latent

        before = adversarial_loss()
        encoder = param_checksum(self.model.encoder)
        state = AdamState.for_params(self.model.discriminator.parameters(), lr=1e-4)
        reported, _, _ = discriminator_step(self.model, mu, z_prior, state)
        self.assertAlmostEqual(reported, before, places=10)
        self.assertLess(adversarial_loss(), before)
        self.assertEqual(param_checksum(self.model.encoder), encoder)


class AAETrainingTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp.name)
        self.images = block_images(12)

    def tearDown(self):
        self.tmp.cleanup()

    def test_training_writes_history_and_checkpoints(self):
        model = tiny_aae()
        hyper = AAEHyper(lr=1e-3, batch_size=5, epochs=3, checkpoint_every=2)
        model, history = train_aae(self.images, hyper, np.random.default_rng(0), val_images=self.images[:3],
                                   model=model, out_dir=self.out, metadata={'seed': 0})
        self.assertEqual([row['epoch'] for row in history], [1, 2, 3])
        for row in history:
            self.assertTrue(np.isfinite([row[key] for key in HISTORY_FIELDS]).all())
        self.assertTrue((self.out / 'aae_epoch2.tndb').exists())
        self.assertEqual(load_bundle(self.out / 'aae_epoch2.tndb').metadata['epoch'], 2)
        self.assertEqual(len(read_csv(self.out / 'aae_history.csv')), 3)

    def test_reconstruction_improves(self):
        model = tiny_aae()
        initial = np.mean(np.abs(reconstruct_mean(model, self.images) - self.images.reshape(12, -1)))
        hyper = AAEHyper(lr=3e-3, batch_size=12, epochs=60, checkpoint_every=0)
        model, history = train_aae(self.images, hyper, np.random.default_rng(0), model=model)
        final = np.mean(np.abs(reconstruct_mean(model, self.images) - self.images.reshape(12, -1)))
        self.assertLess(final, initial)
        self.assertLess(history[-1]['recon_bce'], history[0]['recon_bce'])

    def test_divergence_leaves_snapshot(self):
        model = tiny_aae()
        model.generator[0].params['weight'][...] = np.nan
        hyper = AAEHyper(lr=1e-3, batch_size=6, epochs=1)
        with self.assertRaises(TrainingAborted) as ctx:
            train_aae(self.images, hyper, np.random.default_rng(0), model=model, out_dir=self.out)
        self.assertTrue(Path(ctx.exception.snapshot).exists())

    def test_latent_statistics(self):
        mean, pooled = latent_statistics(tiny_aae(), self.images)
        self.assertEqual(mean.shape, (3,))
        self.assertGreater(pooled, 0)


class AAEMemorizationTests(SimpleTestCase):

    @slow
    def test_overfits_eight_images(self):
        images = random_masks(8, grid_n=16, seed=3)
        model = AAEModel(image_size=256, latent_dim=8, encoder_hidden=(128, 128), generator_hidden=(128, 128),
                         disc_hidden=(64,), rng=np.random.default_rng(0))
        hyper = AAEHyper(lr=1e-3, batch_size=8, epochs=3000, checkpoint_every=0)
        model, _ = train_aae(images, hyper, np.random.default_rng(0), model=model)
        self.assertLess(metric_bce(reconstruct_mean(model, images), images.reshape(8, -1)), 0.05)
