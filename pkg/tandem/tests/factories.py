"""Small scenes and models shared by the test modules."""
import os
import unittest

import numpy as np

from tandem.aae import AAEModel
from tandem.fnn import FNNModel
from tandem.scene import SceneConfig, sample_scatterer

slow = unittest.skipUnless(os.environ.get('TANDEM_SLOW_TESTS') == '1', 'set TANDEM_SLOW_TESTS=1 to run')

SMALL_SCENE_FILE = """\
# 16x16 cells, one wavelength across at 300 MHz
domain_side_m = 1.0
grid_n = 16
eps_r_scatterer = 2.0
n_tx = 2
n_rx = 4
antenna_radius_m = 1.5
frequencies_hz = 300e6
"""


def small_scene(**overrides):
    values = {
        'domain_side_m': 1.0,
        'grid_n': 16,
        'eps_r_scatterer': 2.0,
        'n_tx': 2,
        'n_rx': 4,
        'antenna_radius_m': 1.5,
        'frequencies_hz': (300e6,),
    }
    values.update(overrides)
    return SceneConfig(**values)


def random_masks(count, grid_n=16, seed=0):
    rng = np.random.default_rng(seed)
    return np.stack([sample_scatterer(rng, grid_n).mask for _ in range(count)])


def tiny_aae(grid_n=8, latent_dim=3, seed=0):
    return AAEModel(image_size=grid_n * grid_n, latent_dim=latent_dim, encoder_hidden=(12,), generator_hidden=(12,),
                    disc_hidden=(6,), rng=np.random.default_rng(seed))


def tiny_fnn(grid_n=8, field_length=6, seed=0):
    return FNNModel(grid_n=grid_n, field_length=field_length, conv_channels=(2, 3), pool_after=(1,),
                    dense_hidden=(5,), rng=np.random.default_rng(seed))


def numerical_grad(loss, array, index, step=1e-6):
    """Central difference of ``loss()`` w.r.t. one entry of ``array`` (perturbed in place)."""
    original = array[index]
    array[index] = original + step
    upper = loss()
    array[index] = original - step
    lower = loss()
    array[index] = original
    return (upper - lower) / (2 * step)


def numerical_gradient(loss, array, step=1e-6):
    """Central differences of ``loss()`` for every entry of ``array``."""
    grad = np.zeros(array.shape)
    for index in np.ndindex(array.shape):
        grad[index] = numerical_grad(loss, array, index, step)
    return grad


def relative_error(analytic, numeric):
    scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    return float(np.linalg.norm(analytic - numeric) / scale) if scale else 0.0
