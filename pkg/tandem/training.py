"""Pieces shared by the trainers: batching, sharded batches, early stopping, failure snapshots."""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, NumericalError, TrainingAborted
from .neural.bundle import save_bundle

logger = logging.getLogger(__name__)


def iterate_batches(n, batch_size, rng=None):
    """Index batches over range(n); shuffled when an rng is given, last batch may be short."""
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def check_loss(value, what):
    if not math.isfinite(value):
        raise NumericalError(f"{what} became {value}")
    return value


class ShardedBatch:
    """
    Runs forward and backward for one batch as ``shards`` slices on a thread pool.

    Each slice goes through its own replica of ``network`` (shared parameters, private
    gradients and caches). ``loss_fn(predicted, target)`` returns the slice's mean loss and its
    gradient; both are weighted by the slice's share of the batch and the replica gradients are
    summed into the network's gradients in slice order.
    """

    def __init__(self, network, shards):
        if shards < 1:
            raise ConfigurationError(f"parallel shards must be >= 1 (got {shards})")
        self.network = network
        self.replicas = [network.replica() for _ in range(shards)]
        self.pool = ThreadPoolExecutor(max_workers=shards, thread_name_prefix=f"{network.name}-shard")

    def _slice(self, replica, inputs, target, loss_fn, share):
        replica.zero_grad()
        predicted = replica.forward(inputs)
        loss, grad = loss_fn(predicted, target)
        replica.backward(grad * share)
        return loss * share, predicted

    def forward_backward(self, inputs, target, loss_fn):
        """Accumulates parameter gradients into the network; returns (batch loss, predictions)."""
        slices = [s for s in np.array_split(np.arange(len(inputs)), len(self.replicas)) if len(s)]
        jobs = [
            self.pool.submit(self._slice, replica, inputs[s], target[s], loss_fn, len(s) / len(inputs))
            for replica, s in zip(self.replicas, slices)
        ]
        results = [job.result() for job in jobs]
        for accumulated, *parts in zip(self.network.grads(), *(r.grads() for r in self.replicas[:len(slices)])):
            for part in parts:
                accumulated += part
        return sum(loss for loss, _ in results), np.concatenate([predicted for _, predicted in results])

    def close(self):
        self.pool.shutdown()


class EarlyStopping:
    """Stops after ``patience`` consecutive epochs without a lower monitored loss."""

    def __init__(self, patience):
        self.patience = patience
        self.best_loss = math.inf
        self.best_epoch = None
        self.best_state = None
        self.bad_epochs = 0

    def update(self, epoch, loss, state=None):
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = epoch
            self.best_state = {name: np.array(value, copy=True) for name, value in (state or {}).items()}
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def abort_with_snapshot(exc, bundle, out_dir, epoch):
    """Write the current parameters next to the run outputs and raise TrainingAborted."""
    snapshot = None
    if out_dir is not None:
        snapshot = Path(out_dir) / f"{bundle.kind}_aborted_epoch{epoch}.tndb"
        bundle.metadata = {**bundle.metadata, 'aborted_at_epoch': epoch, 'reason': str(exc)}
        try:
            save_bundle(snapshot, bundle)
        except (OSError, ValueError) as write_error:
            logger.error(f"Could not write diagnostic snapshot: {write_error}")
            snapshot = None
    logger.error(f"{bundle.kind} training aborted at epoch {epoch}: {exc}", exc_info=True)
    raise TrainingAborted(
        f"{bundle.kind} training aborted at epoch {epoch}: {exc}",
        snapshot=str(snapshot) if snapshot else None,
    ) from exc
