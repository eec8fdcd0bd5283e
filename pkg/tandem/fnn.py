"""
Convolutional forward surrogate: scatterer image -> standardized field amplitudes.

Amplitudes are standardized per element with training-set statistics that travel with
the model, so predictions come back in physical units.
"""
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .exceptions import NumericalError, ShapeError
from .exports import write_csv
from .neural.bundle import ModelBundle, load_bundle, save_bundle
from .neural.layers import Conv3x3, Dense, Flatten, MaxPool2x2, ReLU, Sequential
from .neural.losses import loss_mse_l2
from .neural.metrics import R2Accumulator
from .neural.optim import AdamState, adam_step
from .training import EarlyStopping, ShardedBatch, abort_with_snapshot, check_loss, iterate_batches

logger = logging.getLogger(__name__)

HISTORY_FIELDS = ['epoch', 'train_mse', 'test_mse', 'test_r2']


@dataclass
class FNNHyper:
    lr: float = 0.001
    batch_size: int = 30
    l2: float = 1e-4
    patience: int = 5
    max_epochs: int = 200
    checkpoint_every: int = 50
    parallel_shards: int = 1


class FieldScaler:
    """Per-element standardization of amplitude vectors."""

    def __init__(self, mean, std):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)

    @classmethod
    def identity(cls, length):
        return cls(np.zeros(length), np.ones(length))

    @classmethod
    def fit(cls, fields):
        fields = np.asarray(fields, dtype=np.float64)
        std = fields.std(axis=0)
        # Elements that never vary (e.g. an empty training set corner) stay unscaled.
        std[std == 0] = 1.0
        return cls(fields.mean(axis=0), std)

    def transform(self, fields):
        return (np.asarray(fields, dtype=np.float64) - self.mean) / self.std

    def inverse(self, standardized):
        return np.asarray(standardized, dtype=np.float64) * self.std + self.mean

    def as_dict(self):
        return {'field_mean': self.mean.tolist(), 'field_std': self.std.tolist()}


class FNNModel:

    def __init__(self, grid_n=64, field_length=512, conv_channels=(16, 32, 64, 128, 256), pool_after=(1, 2, 3),
                 dense_hidden=(6000, 4000, 2000), rng=None, dtype=np.float64, scaler=None):
        rng = rng or np.random.default_rng(0)
        if grid_n % (2 ** len(pool_after)):
            raise ShapeError(f"grid_n {grid_n} is not divisible by 2^{len(pool_after)} pools")
        self.grid_n = grid_n
        self.field_length = field_length
        self.conv_channels = tuple(conv_channels)
        self.pool_after = tuple(pool_after)
        self.dense_hidden = tuple(dense_hidden)
        layers = []
        c_in = 1
        for position, c_out in enumerate(conv_channels, start=1):
            layers += [Conv3x3(c_in, c_out, rng, dtype=dtype), ReLU()]
            if position in pool_after:
                layers.append(MaxPool2x2())
            c_in = c_out
        side = grid_n // 2 ** len(pool_after)
        widths = [side * side * c_in, *dense_hidden, field_length]
        layers.append(Flatten())
        for index, (n_in, n_out) in enumerate(zip(widths, widths[1:])):
            last = index == len(widths) - 2
            layers.append(Dense(n_in, n_out, rng, init='glorot' if last else 'he', dtype=dtype))
            if not last:
                layers.append(ReLU())
        self.network = Sequential(*layers, name='fnn')
        self.scaler = scaler or FieldScaler.identity(field_length)
        self.training_metadata = {}

    @property
    def flatten_width(self):
        side = self.grid_n // 2 ** len(self.pool_after)
        return side * side * self.conv_channels[-1]

    def weight_params(self):
        return [layer.params['weight'] for layer in self.network if 'weight' in layer.params]

    def weight_grads(self):
        return [layer.grads['weight'] for layer in self.network if 'weight' in layer.params]

    def as_input(self, images):
        images = np.asarray(images)
        if images.ndim == 2:
            images = images[None]
        if images.ndim == 3:
            images = images[..., None]
        if images.shape[1:] != (self.grid_n, self.grid_n, 1):
            raise ShapeError(f"FNN expects {self.grid_n}x{self.grid_n} images, got {images.shape[1:3]}")
        return images.astype(self.network[0].params['weight'].dtype)

    def forward_standardized(self, images):
        return self.network.forward(self.as_input(images))

    def architecture(self):
        return {
            'grid_n': self.grid_n,
            'field_length': self.field_length,
            'conv_channels': list(self.conv_channels),
            'pool_after': list(self.pool_after),
            'dense_hidden': list(self.dense_hidden),
            'kernel': [3, 3],
            'padding': 'same',
            'output': 'linear',
        }

    def to_bundle(self, metadata=None):
        return ModelBundle(
            kind='fnn',
            architecture=self.architecture(),
            metadata={**(metadata or {}), **self.scaler.as_dict()},
            tensors=dict(self.network.named_parameters()),
        )

    @classmethod
    def from_bundle(cls, bundle, dtype=np.float64):
        if bundle.kind != 'fnn':
            raise ShapeError(f"expected an fnn bundle, got {bundle.kind!r}")
        arch = bundle.architecture
        model = cls(
            grid_n=arch['grid_n'],
            field_length=arch['field_length'],
            conv_channels=arch['conv_channels'],
            pool_after=arch['pool_after'],
            dense_hidden=arch['dense_hidden'],
            dtype=dtype,
            scaler=FieldScaler(bundle.metadata['field_mean'], bundle.metadata['field_std']),
        )
        model.network.load_state_dict(bundle.tensors)
        return model

    def save(self, path, metadata=None):
        return save_bundle(path, self.to_bundle(metadata))

    @classmethod
    def load(cls, path, dtype=np.float64):
        return cls.from_bundle(load_bundle(path), dtype=dtype)


def fnn_forward(model, images):
    """Predicted amplitude vectors in physical units, shape (batch, field_length) or (field_length,)."""
    single = np.ndim(images) == 2
    predicted = model.scaler.inverse(model.forward_standardized(images))
    return predicted[0] if single else predicted


def evaluate_fnn(model, images, fields, batch_size=64):
    """Mean standardized MSE and physical-unit R2 over a held-out set."""
    target_std = model.scaler.transform(fields)
    total, count = 0.0, 0
    r2 = R2Accumulator()
    for index in iterate_batches(len(images), batch_size):
        predicted = model.forward_standardized(images[index])
        diff = predicted - target_std[index]
        total += float(np.sum(diff * diff))
        count += diff.size
        r2.update(model.scaler.inverse(predicted), fields[index])
    return total / count, r2.result()


def _shard_mse(predicted, target):
    loss, grad, _ = loss_mse_l2(predicted, target)
    return loss, grad


def train_fnn(train_images, train_fields, test_images, test_fields, hyper, rng, model=None, out_dir=None,
              metadata=None):
    """
    Minimizes standardized MSE + l2 * sum of squared weights with Adam and early stopping on
    test MSE; the best-epoch parameters are restored before returning.

    With ``hyper.parallel_shards > 1`` each batch is split across threads; the default single
    shard path is bitwise reproducible for a given rng.
    """
    train_fields = np.asarray(train_fields, dtype=np.float64)
    if model is None:
        model = FNNModel(grid_n=np.shape(train_images)[-1], field_length=train_fields.shape[1], rng=rng)
    model.scaler = FieldScaler.fit(train_fields)
    target = model.scaler.transform(train_fields)
    state = AdamState.for_params(model.network.parameters(), lr=hyper.lr)
    stopper = EarlyStopping(hyper.patience)
    sharded = ShardedBatch(model.network, hyper.parallel_shards) if hyper.parallel_shards != 1 else None
    out_dir = Path(out_dir) if out_dir else None
    metadata = {**(metadata or {}), 'hyper': asdict(hyper)}
    history = []
    logger.info(f"Training FNN on {len(train_images)} pairs, testing on {len(test_images)}")
    try:
        for epoch in range(1, hyper.max_epochs + 1):
            sq_sum, count = 0.0, 0
            try:
                for index in iterate_batches(len(train_images), hyper.batch_size, rng):
                    model.network.zero_grad()
                    if sharded is None:
                        predicted = model.forward_standardized(train_images[index])
                    else:
                        _, predicted = sharded.forward_backward(model.as_input(train_images[index]), target[index],
                                                                _shard_mse)
                    loss, grad, weight_grads = loss_mse_l2(predicted, target[index], model.weight_params(), hyper.l2)
                    check_loss(loss, 'FNN loss')
                    if sharded is None:
                        model.network.backward(grad)
                    for accumulated, extra in zip(model.weight_grads(), weight_grads):
                        accumulated += extra
                    adam_step(state, model.network.parameters(), model.network.grads())
                    diff = predicted - target[index]
                    sq_sum += float(np.sum(diff * diff))
                    count += diff.size
                test_mse, test_r2 = evaluate_fnn(model, test_images, test_fields, hyper.batch_size)
                check_loss(test_mse, 'FNN test MSE')
            except NumericalError as exc:
                abort_with_snapshot(exc, model.to_bundle(metadata), out_dir, epoch)
            row = {'epoch': epoch, 'train_mse': sq_sum / count, 'test_mse': test_mse, 'test_r2': test_r2}
            history.append(row)
            logger.info(f"FNN epoch {epoch}: train_mse={row['train_mse']:.5f} test_mse={test_mse:.5f} "
                        f"r2={test_r2:.4f}")
            if out_dir and hyper.checkpoint_every and epoch % hyper.checkpoint_every == 0:
                model.save(out_dir / f"fnn_epoch{epoch}.tndb", {**metadata, 'epoch': epoch})
            if stopper.update(epoch, test_mse, model.network.state_dict()):
                logger.warning(f"FNN early stop at epoch {epoch}; best epoch {stopper.best_epoch}")
                break
    finally:
        if sharded is not None:
            sharded.close()
    model.network.load_state_dict(stopper.best_state)
    metadata.update({'best_epoch': stopper.best_epoch, 'best_test_mse': stopper.best_loss})
    if out_dir:
        write_csv(out_dir / 'fnn_history.csv', history, HISTORY_FIELDS)
    model.training_metadata = metadata
    return model, history
