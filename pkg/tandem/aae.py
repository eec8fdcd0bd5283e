"""
Adversarial autoencoder over flattened binary scatterer images.

The encoder emits (mu, log-variance) heads; the latent sample is pushed toward N(0, I)
by a discriminator instead of an analytic KL term. The generator (decoder) is what the
inverse network later freezes.
"""
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .exceptions import NumericalError, ShapeError
from .exports import write_csv
from .neural.bundle import ModelBundle, load_bundle, save_bundle
from .neural.layers import Dense, Sequential, dense_stack
from .neural.losses import loss_bce, reparameterize, sigma_from_logvar
from .neural.optim import AdamState, adam_step
from .training import abort_with_snapshot, check_loss, iterate_batches

logger = logging.getLogger(__name__)

HISTORY_FIELDS = ['epoch', 'gen_loss', 'disc_loss', 'recon_bce', 'val_recon_bce', 'disc_prior_mean', 'disc_latent_mean']


@dataclass
class AAEHyper:
    lr: float = 0.0002
    batch_size: int = 100
    epochs: int = 500
    checkpoint_every: int = 50


@dataclass
class AAEForward:
    mu: np.ndarray
    sigma: np.ndarray
    z_hat: np.ndarray
    reconstruction: np.ndarray
    disc_latent: np.ndarray
    disc_prior: np.ndarray


class AAEModel:

    def __init__(self, image_size=4096, latent_dim=100, encoder_hidden=(512, 512), generator_hidden=(512, 512),
                 disc_hidden=(512, 256), rng=None, dtype=np.float64):
        rng = rng or np.random.default_rng(0)
        self.image_size = image_size
        self.latent_dim = latent_dim
        self.encoder_hidden = tuple(encoder_hidden)
        self.generator_hidden = tuple(generator_hidden)
        self.disc_hidden = tuple(disc_hidden)
        self.encoder = dense_stack([image_size, *encoder_hidden], rng, output='relu', dtype=dtype, name='encoder')
        self.mu_head = Sequential(Dense(encoder_hidden[-1], latent_dim, rng, init='glorot', dtype=dtype), name='mu_head')
        self.logvar_head = Sequential(
            Dense(encoder_hidden[-1], latent_dim, rng, init='glorot', dtype=dtype), name='logvar_head'
        )
        self.generator = dense_stack([latent_dim, *generator_hidden, image_size], rng, output='sigmoid', dtype=dtype,
                                     name='generator')
        self.discriminator = dense_stack([latent_dim, *disc_hidden, 1], rng, output='sigmoid', dtype=dtype,
                                         name='discriminator')

    @property
    def networks(self):
        return {
            'encoder': self.encoder,
            'mu_head': self.mu_head,
            'logvar_head': self.logvar_head,
            'generator': self.generator,
            'discriminator': self.discriminator,
        }

    def autoencoder_params(self):
        return self.encoder.parameters() + self.mu_head.parameters() + self.logvar_head.parameters() + \
            self.generator.parameters()

    def autoencoder_grads(self):
        return self.encoder.grads() + self.mu_head.grads() + self.logvar_head.grads() + self.generator.grads()

    def architecture(self):
        return {
            'image_size': self.image_size,
            'latent_dim': self.latent_dim,
            'encoder_hidden': list(self.encoder_hidden),
            'generator_hidden': list(self.generator_hidden),
            'disc_hidden': list(self.disc_hidden),
            'hidden_activation': 'relu',
            'generator_output': 'sigmoid',
        }

    def to_bundle(self, metadata=None):
        tensors = {}
        for prefix, network in self.networks.items():
            for name, value in network.named_parameters():
                tensors[f"{prefix}.{name}"] = value
        return ModelBundle(kind='aae', architecture=self.architecture(), metadata=metadata or {}, tensors=tensors)

    @classmethod
    def from_bundle(cls, bundle, dtype=np.float64):
        if bundle.kind != 'aae':
            raise ShapeError(f"expected an aae bundle, got {bundle.kind!r}")
        arch = bundle.architecture
        model = cls(
            image_size=arch['image_size'],
            latent_dim=arch['latent_dim'],
            encoder_hidden=arch['encoder_hidden'],
            generator_hidden=arch['generator_hidden'],
            disc_hidden=arch['disc_hidden'],
            dtype=dtype,
        )
        for prefix, network in model.networks.items():
            network.load_state_dict({
                name[len(prefix) + 1:]: value for name, value in bundle.tensors.items() if name.startswith(prefix + '.')
            })
        return model

    def save(self, path, metadata=None):
        return save_bundle(path, self.to_bundle(metadata))

    @classmethod
    def load(cls, path, dtype=np.float64):
        return cls.from_bundle(load_bundle(path), dtype=dtype)

    def encode(self, x):
        hidden = self.encoder.forward(x)
        return self.mu_head.forward(hidden), self.logvar_head.forward(hidden)


def flatten_images(images, image_size):
    images = np.asarray(images)
    flat = images.reshape(images.shape[0], -1) if images.ndim == 3 else np.atleast_2d(images)
    if flat.shape[1] != image_size:
        raise ShapeError(f"images have {flat.shape[1]} pixels, model expects {image_size}")
    return flat


def aae_forward(model, images, rng):
    x = flatten_images(images, model.image_size).astype(model.encoder[0].params['weight'].dtype)
    if not np.isin(x, (0, 1)).all():
        raise ShapeError("AAE input images must be binary")
    mu, logvar = model.encode(x)
    sigma = sigma_from_logvar(logvar)
    z_hat, _ = reparameterize(mu, sigma, rng)
    reconstruction = model.generator.forward(z_hat)
    disc_latent = model.discriminator.forward(z_hat)
    z_prior = rng.standard_normal(z_hat.shape)
    disc_prior = model.discriminator.forward(z_prior)
    return AAEForward(mu, sigma, z_hat, reconstruction, disc_latent[:, 0], disc_prior[:, 0])


def generate(model, z):
    z = np.asarray(z)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    if z.shape[1] != model.latent_dim:
        raise ShapeError(f"latent vector has width {z.shape[1]}, generator expects {model.latent_dim}")
    out = model.generator.forward(z.astype(model.generator[0].params['weight'].dtype))
    return out[0] if single else out


def reconstruct_mean(model, images):
    """Generator output at the encoder mean (no sampling)."""
    x = flatten_images(images, model.image_size).astype(np.float64)
    mu, _ = model.encode(x)
    return model.generator.forward(mu)


def latent_statistics(model, images, batch_size=256):
    """Mean of the encoded mu per component and the pooled sigma over a set of images."""
    mus, sigmas = [], []
    x_all = flatten_images(images, model.image_size)
    for index in iterate_batches(len(x_all), batch_size):
        mu, logvar = model.encode(x_all[index].astype(np.float64))
        mus.append(mu)
        sigmas.append(sigma_from_logvar(logvar))
    mus = np.concatenate(mus)
    pooled = np.sqrt(np.mean(np.concatenate(sigmas) ** 2 + (mus - mus.mean(axis=0)) ** 2))
    return mus.mean(axis=0), float(pooled)


def discriminator_step(model, z_hat, z_prior, state):
    """One update of the discriminator only: minimizes -log D(z) - log(1 - D(z_hat))."""
    model.discriminator.zero_grad()
    ones = np.ones((len(z_prior), 1))
    zeros = np.zeros((len(z_hat), 1))
    score_prior = model.discriminator.forward(z_prior)
    loss_prior, grad_prior = loss_bce(score_prior, ones)
    model.discriminator.backward(grad_prior)
    score_latent = model.discriminator.forward(z_hat)
    loss_latent, grad_latent = loss_bce(score_latent, zeros)
    model.discriminator.backward(grad_latent)
    adam_step(state, model.discriminator.parameters(), model.discriminator.grads())
    return loss_prior + loss_latent, float(score_prior.mean()), float(score_latent.mean())


def autoencoder_step(model, x, rng, state):
    """One update of encoder, heads and generator: minimizes -log D(z_hat) + BCE(reconstruction, x)."""
    for name in ('encoder', 'mu_head', 'logvar_head', 'generator'):
        model.networks[name].zero_grad()
    mu, logvar = model.encode(x)
    sigma = sigma_from_logvar(logvar)
    z_hat, eps = reparameterize(mu, sigma, rng)
    reconstruction = model.generator.forward(z_hat)
    recon_loss, grad_recon = loss_bce(reconstruction, x)
    score = model.discriminator.forward(z_hat)
    adv_loss, grad_score = loss_bce(score, np.ones_like(score))
    grad_z = model.generator.backward(grad_recon)
    grad_z = grad_z + model.discriminator.backward(grad_score, need_param_grads=False)
    grad_logvar = grad_z * eps * sigma / 2
    grad_hidden = model.mu_head.backward(grad_z) + model.logvar_head.backward(grad_logvar)
    model.encoder.backward(grad_hidden)
    adam_step(state, model.autoencoder_params(), model.autoencoder_grads())
    return adv_loss + recon_loss, recon_loss


def _validation_bce(model, images, batch_size):
    if images is None or len(images) == 0:
        return None
    total, count = 0.0, 0
    for index in iterate_batches(len(images), batch_size):
        x = images[index]
        loss, _ = loss_bce(reconstruct_mean(model, x), x)
        total += loss * len(index)
        count += len(index)
    return total / count


def train_aae(train_images, hyper, rng, val_images=None, model=None, out_dir=None, metadata=None):
    """
    Alternating 1:1 discriminator / autoencoder updates per batch.

    Returns the model and the per-epoch history (one dict per epoch, HISTORY_FIELDS keys).
    """
    train_x = flatten_images(train_images, model.image_size if model else np.prod(np.shape(train_images)[1:]))
    train_x = train_x.astype(np.float64)
    if model is None:
        model = AAEModel(image_size=train_x.shape[1], rng=rng)
    if not np.isin(train_x, (0, 1)).all():
        raise ShapeError("AAE training images must be binary")
    val_x = flatten_images(val_images, model.image_size).astype(np.float64) if val_images is not None else None
    dtype = model.generator[0].params['weight'].dtype
    train_x = train_x.astype(dtype)
    disc_state = AdamState.for_params(model.discriminator.parameters(), lr=hyper.lr)
    ae_state = AdamState.for_params(model.autoencoder_params(), lr=hyper.lr)
    out_dir = Path(out_dir) if out_dir else None
    metadata = {**(metadata or {}), 'hyper': asdict(hyper)}
    history = []
    logger.info(f"Training AAE on {len(train_x)} images for {hyper.epochs} epochs (batch {hyper.batch_size})")
    for epoch in range(1, hyper.epochs + 1):
        sums = np.zeros(5)
        seen = 0
        try:
            for index in iterate_batches(len(train_x), hyper.batch_size, rng):
                x = train_x[index]
                mu, logvar = model.encode(x)
                z_hat, _ = reparameterize(mu, sigma_from_logvar(logvar), rng)
                z_prior = rng.standard_normal(z_hat.shape)
                disc_loss, prior_score, latent_score = discriminator_step(model, z_hat, z_prior, disc_state)
                gen_loss, recon = autoencoder_step(model, x, rng, ae_state)
                check_loss(disc_loss, 'discriminator loss')
                check_loss(gen_loss, 'generator loss')
                sums += len(index) * np.array([gen_loss, disc_loss, recon, prior_score, latent_score])
                seen += len(index)
        except NumericalError as exc:
            abort_with_snapshot(exc, model.to_bundle(metadata), out_dir, epoch)
        gen_loss, disc_loss, recon, prior_score, latent_score = sums / seen
        row = {
            'epoch': epoch,
            'gen_loss': gen_loss,
            'disc_loss': disc_loss,
            'recon_bce': recon,
            'val_recon_bce': _validation_bce(model, val_x, hyper.batch_size),
            'disc_prior_mean': prior_score,
            'disc_latent_mean': latent_score,
        }
        history.append(row)
        logger.info(
            f"AAE epoch {epoch}: gen={gen_loss:.4f} disc={disc_loss:.4f} recon_bce={recon:.4f} "
            f"D(prior)={prior_score:.3f} D(latent)={latent_score:.3f}"
        )
        if out_dir and hyper.checkpoint_every and epoch % hyper.checkpoint_every == 0:
            model.save(out_dir / f"aae_epoch{epoch}.tndb", {**metadata, 'epoch': epoch})
    if out_dir:
        write_csv(out_dir / 'aae_history.csv', history, HISTORY_FIELDS)
    return model, history
