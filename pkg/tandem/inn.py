"""
Tandem inverse network.

A trainable dense block maps standardized field amplitudes to a Gaussian latent; the
frozen AAE generator turns the latent into an image and the frozen FNN maps that image
back to fields. Only the dense block and its heads learn.
"""
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .aae import AAEModel
from .exceptions import IntegrationError, NumericalError, ShapeError
from .exports import write_csv
from .fnn import FNNModel
from .neural.bundle import ModelBundle, file_sha256, load_bundle, param_checksum, save_bundle
from .neural.layers import Dense, Sequential, dense_stack
from .neural.losses import kl_standard_normal, loss_inn, reparameterize, sigma_from_logvar
from .neural.optim import AdamState, adam_step
from .scene import ContrastImage
from .training import EarlyStopping, abort_with_snapshot, check_loss, iterate_batches

logger = logging.getLogger(__name__)

HISTORY_FIELDS = ['epoch', 'train_loss', 'test_loss', 'test_l1', 'test_kl']
THRESHOLD = 0.5


@dataclass
class INNHyper:
    lr: float = 0.0002
    batch_size: int = 30
    alpha: float = 1e-2
    patience: int = 5
    max_epochs: int = 200
    checkpoint_every: int = 50


@dataclass
class INNForward:
    mu: np.ndarray
    sigma: np.ndarray
    z: np.ndarray
    image: np.ndarray
    predicted_fields: np.ndarray


@dataclass
class InversionResult:
    image: ContrastImage
    soft_image: np.ndarray
    predicted_fields: np.ndarray
    residual_l1: float
    consistent: bool


class INNModel:

    def __init__(self, generator_model, fnn_model, hidden=(800, 800, 500, 500, 400), rng=None, dtype=np.float64,
                 frozen_refs=None):
        check_compatible(generator_model, fnn_model)
        rng = rng or np.random.default_rng(0)
        self.aae = generator_model
        self.fnn = fnn_model
        self.field_length = fnn_model.field_length
        self.latent_dim = generator_model.latent_dim
        self.hidden = tuple(hidden)
        self.block = dense_stack([self.field_length, *hidden], rng, output='relu', dtype=dtype, name='inn_block')
        self.mu_head = Sequential(Dense(hidden[-1], self.latent_dim, rng, init='glorot', dtype=dtype), name='mu_head')
        self.logvar_head = Sequential(
            Dense(hidden[-1], self.latent_dim, rng, init='glorot', dtype=dtype), name='logvar_head'
        )
        self.frozen_refs = frozen_refs or {}
        self.consistency_bound = None
        self.tau = 1.0

    @property
    def generator(self):
        return self.aae.generator

    @property
    def networks(self):
        return {'block': self.block, 'mu_head': self.mu_head, 'logvar_head': self.logvar_head}

    def trainable_params(self):
        return self.block.parameters() + self.mu_head.parameters() + self.logvar_head.parameters()

    def trainable_grads(self):
        return self.block.grads() + self.mu_head.grads() + self.logvar_head.grads()

    def frozen_checksum(self):
        return param_checksum(self.aae.generator, self.fnn.network)

    def encode(self, standardized):
        hidden = self.block.forward(standardized)
        return self.mu_head.forward(hidden), self.logvar_head.forward(hidden)

    def decode(self, z):
        """Generator image (batch, pixels) and the FNN's standardized fields for it."""
        image = self.generator.forward(z)
        n = self.fnn.grid_n
        return image, self.fnn.forward_standardized(image.reshape(-1, n, n))

    def architecture(self):
        # The FNN sees the soft generator image; thresholding applies only to reported images.
        return {
            'field_length': self.field_length,
            'hidden': list(self.hidden),
            'latent_dim': self.latent_dim,
            'generator_output': 'soft',
            'report_threshold': THRESHOLD,
        }

    def to_bundle(self, metadata=None):
        tensors = {}
        for prefix, network in self.networks.items():
            for name, value in network.named_parameters():
                tensors[f"{prefix}.{name}"] = value
        return ModelBundle(
            kind='inn',
            architecture=self.architecture(),
            metadata={
                **(metadata or {}),
                **self.frozen_refs,
                'consistency_bound': self.consistency_bound,
                'tau': self.tau,
            },
            tensors=tensors,
        )

    def save(self, path, metadata=None):
        return save_bundle(path, self.to_bundle(metadata))

    @classmethod
    def load(cls, path, dtype=np.float64):
        bundle = load_bundle(path)
        if bundle.kind != 'inn':
            raise IntegrationError(f"{path}: expected an inn bundle, got {bundle.kind!r}")
        meta = bundle.metadata
        aae_model = AAEModel.load(_verified(meta, 'generator'), dtype=dtype)
        fnn_model = FNNModel.load(_verified(meta, 'fnn'), dtype=dtype)
        refs = {key: meta[key] for key in ('generator_path', 'generator_sha256', 'fnn_path', 'fnn_sha256')}
        model = cls(aae_model, fnn_model, hidden=bundle.architecture['hidden'], dtype=dtype, frozen_refs=refs)
        if model.latent_dim != bundle.architecture['latent_dim']:
            raise IntegrationError(
                f"INN latent width {bundle.architecture['latent_dim']} does not match generator {model.latent_dim}"
            )
        for prefix, network in model.networks.items():
            network.load_state_dict({
                name[len(prefix) + 1:]: value for name, value in bundle.tensors.items() if name.startswith(prefix + '.')
            })
        model.consistency_bound = meta.get('consistency_bound')
        model.tau = meta.get('tau', 1.0)
        return model


def _verified(meta, role):
    path = meta.get(f"{role}_path")
    expected = meta.get(f"{role}_sha256")
    if not path or not Path(path).exists():
        raise IntegrationError(f"frozen {role} checkpoint {path!r} is missing")
    actual = file_sha256(path)
    if actual != expected:
        raise IntegrationError(f"frozen {role} checkpoint {path} changed (sha256 {actual[:12]} != {str(expected)[:12]})")
    return path


def frozen_refs(generator_path, fnn_path):
    return {
        'generator_path': str(generator_path),
        'generator_sha256': file_sha256(generator_path),
        'fnn_path': str(fnn_path),
        'fnn_sha256': file_sha256(fnn_path),
    }


def check_compatible(aae_model, fnn_model, aae_meta=None, fnn_meta=None):
    if fnn_model.grid_n ** 2 != aae_model.image_size:
        raise IntegrationError(
            f"generator emits {aae_model.image_size} pixels but the FNN takes {fnn_model.grid_n}x{fnn_model.grid_n}"
        )
    scene_a = (aae_meta or {}).get('scene')
    scene_f = (fnn_meta or {}).get('scene')
    if scene_a and scene_f and scene_a != scene_f:
        raise IntegrationError("generator and FNN were trained on different scenes")


def inn_forward(model, fields, rng):
    """Sampled chain for physical-unit fields: (mu, sigma, z, image, predicted physical fields)."""
    standardized = np.atleast_2d(model.fnn.scaler.transform(fields))
    if standardized.shape[1] != model.field_length:
        raise ShapeError(f"fields have length {standardized.shape[1]}, INN expects {model.field_length}")
    mu, logvar = model.encode(standardized)
    sigma = sigma_from_logvar(logvar)
    z, _ = reparameterize(mu, sigma, rng)
    image, predicted = model.decode(z)
    return INNForward(mu, sigma, z, image, model.fnn.scaler.inverse(predicted))


def composite_step(model, standardized, alpha, rng):
    """Loss and trainable-parameter gradients for one batch; frozen modules only pass gradients through."""
    for network in model.networks.values():
        network.zero_grad()
    mu, logvar = model.encode(standardized)
    sigma = sigma_from_logvar(logvar)
    z, eps = reparameterize(mu, sigma, rng)
    image, predicted = model.decode(z)
    loss, grad_pred, grad_mu, grad_sigma = loss_inn(predicted, standardized, mu, sigma, alpha)
    grad_image = model.fnn.network.backward(grad_pred, need_param_grads=False)
    grad_z = model.generator.backward(grad_image.reshape(image.shape), need_param_grads=False)
    grad_mu = grad_mu + grad_z
    grad_sigma = grad_sigma + grad_z * eps
    grad_logvar = grad_sigma * sigma / 2
    grad_hidden = model.mu_head.backward(grad_mu) + model.logvar_head.backward(grad_logvar)
    model.block.backward(grad_hidden)
    return loss


def evaluate_inn(model, standardized, alpha, batch_size=64):
    """Composite loss with z = mu, plus its L1 and KL parts and the per-sample L1 residuals."""
    residuals, kls = [], []
    for index in iterate_batches(len(standardized), batch_size):
        y = standardized[index]
        mu, logvar = model.encode(y)
        _, predicted = model.decode(mu)
        residuals.append(np.sum(np.abs(predicted - y), axis=1))
        kls.append(kl_standard_normal(mu, sigma_from_logvar(logvar)))
    residuals = np.concatenate(residuals)
    kl = float(np.mean(np.concatenate(kls)))
    l1 = float(np.mean(residuals))
    return l1 + alpha * kl, l1, kl, residuals


def train_inn(model, train_fields, test_fields, hyper, rng, out_dir=None, metadata=None):
    """
    Minimizes per-sample L1 field error (standardized) + alpha * KL through the frozen
    generator and FNN, with early stopping on the test composite loss.
    """
    before = model.frozen_checksum()
    train_std = model.fnn.scaler.transform(train_fields)
    test_std = model.fnn.scaler.transform(test_fields)
    if train_std.shape[1] != model.field_length:
        raise ShapeError(f"fields have length {train_std.shape[1]}, INN expects {model.field_length}")
    state = AdamState.for_params(model.trainable_params(), lr=hyper.lr)
    stopper = EarlyStopping(hyper.patience)
    out_dir = Path(out_dir) if out_dir else None
    metadata = {**(metadata or {}), 'hyper': asdict(hyper)}
    history = []
    logger.info(f"Training INN on {len(train_std)} field vectors, alpha={hyper.alpha}")
    for epoch in range(1, hyper.max_epochs + 1):
        total, seen = 0.0, 0
        try:
            for index in iterate_batches(len(train_std), hyper.batch_size, rng):
                loss = check_loss(composite_step(model, train_std[index], hyper.alpha, rng), 'INN loss')
                adam_step(state, model.trainable_params(), model.trainable_grads())
                total += loss * len(index)
                seen += len(index)
            test_loss, test_l1, test_kl, _ = evaluate_inn(model, test_std, hyper.alpha, hyper.batch_size)
            check_loss(test_loss, 'INN test loss')
        except NumericalError as exc:
            abort_with_snapshot(exc, model.to_bundle(metadata), out_dir, epoch)
        row = {'epoch': epoch, 'train_loss': total / seen, 'test_loss': test_loss, 'test_l1': test_l1,
               'test_kl': test_kl}
        history.append(row)
        logger.info(f"INN epoch {epoch}: train={row['train_loss']:.4f} test={test_loss:.4f} kl={test_kl:.3f}")
        if out_dir and hyper.checkpoint_every and epoch % hyper.checkpoint_every == 0:
            model.save(out_dir / f"inn_epoch{epoch}.tndb", {**metadata, 'epoch': epoch})
        state_now = {f"{p}.{n}": v for p, net in model.networks.items() for n, v in net.named_parameters()}
        if stopper.update(epoch, test_loss, state_now):
            logger.warning(f"INN early stop at epoch {epoch}; best epoch {stopper.best_epoch}")
            break
    for prefix, network in model.networks.items():
        network.load_state_dict({
            name[len(prefix) + 1:]: value for name, value in stopper.best_state.items() if name.startswith(prefix + '.')
        })
    _, _, _, residuals = evaluate_inn(model, test_std, hyper.alpha, hyper.batch_size)
    model.consistency_bound = float(residuals.max())
    if model.frozen_checksum() != before:
        raise IntegrationError("frozen generator/FNN parameters changed during INN training")
    if out_dir:
        write_csv(out_dir / 'inn_history.csv', history, HISTORY_FIELDS)
    return model, history


def invert(model, fields):
    """Deterministic reconstruction (z = mu) with the field-consistency diagnostic."""
    standardized = model.fnn.scaler.transform(fields)
    if standardized.ndim != 1 or standardized.shape[0] != model.field_length:
        raise ShapeError(f"invert expects one field vector of length {model.field_length}")
    mu, _ = model.encode(standardized[None])
    image, predicted = model.decode(mu)
    residual = float(np.sum(np.abs(predicted[0] - standardized)))
    n = model.fnn.grid_n
    soft = image[0].reshape(n, n).astype(np.float64)
    bound = model.consistency_bound
    return InversionResult(
        image=ContrastImage(mask=(soft >= THRESHOLD).astype(np.uint8), tau=model.tau),
        soft_image=soft,
        predicted_fields=model.fnn.scaler.inverse(predicted[0]),
        residual_l1=residual,
        consistent=bound is None or residual <= bound,
    )
