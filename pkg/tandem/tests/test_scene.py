import math
from collections import deque

import numpy as np
from django.test import SimpleTestCase

from tandem.exceptions import ConfigurationError, GenerationError, ShapeError
from tandem.scene import (
    ContrastImage, SceneConfig, ShapeParams, contrast_to_image, disk_image, image_to_contrast, is_connected,
    make_array_layout, make_grid, rasterize_radial_shape, sample_scatterer,
)

from .factories import small_scene


def flood_fill_connected(mask):
    """4-neighbour flood fill from the first set pixel; True when it reaches every set pixel."""
    cells = set(zip(*np.nonzero(mask)))
    if not cells:
        return False
    start = next(iter(cells))
    seen, queue = {start}, deque([start])
    while queue:
        row, col = queue.popleft()
        for step in ((row + 1, col), (row - 1, col), (row, col + 1), (row, col - 1)):
            if step in cells and step not in seen:
                seen.add(step)
                queue.append(step)
    return len(seen) == len(cells)


class SceneConfigTests(SimpleTestCase):

    def test_defaults_describe_the_reference_experiment(self):
        cfg = SceneConfig()
        self.assertEqual(cfg.grid_n, 64)
        self.assertEqual(cfg.field_length, 4 * 8 * 16)
        self.assertEqual(cfg.tau, 1.0)
        self.assertAlmostEqual(cfg.wavenumber(60e6), 2 * math.pi * 60e6 / 299792458.0, delta=1e-6)

    def test_antennas_inside_domain_rejected(self):
        with self.assertRaises(ConfigurationError):
            SceneConfig(domain_side_m=9.45, antenna_radius_m=6.0)

    def test_frequencies_must_increase(self):
        with self.assertRaises(ConfigurationError):
            SceneConfig(frequencies_hz=(100e6, 60e6))
        with self.assertRaises(ConfigurationError):
            SceneConfig(frequencies_hz=())

    def test_contrast_must_be_positive(self):
        with self.assertRaises(ConfigurationError):
            SceneConfig(eps_r_scatterer=1.0)

    def test_dict_round_trip_and_unknown_keys(self):
        cfg = small_scene()
        self.assertEqual(SceneConfig.from_dict(cfg.as_dict()), cfg)
        with self.assertRaises(ConfigurationError):
            SceneConfig.from_dict({'grid_size': 8})


class GridTests(SimpleTestCase):

    def test_cell_centres_row_major(self):
        grid = make_grid(small_scene(grid_n=4, domain_side_m=2.0))
        self.assertEqual(grid.centers.shape, (16, 2))
        np.testing.assert_allclose(grid.centers[0], [-0.75, -0.75])
        np.testing.assert_allclose(grid.centers[1], [-0.25, -0.75])
        np.testing.assert_allclose(grid.centers[4], [-0.75, -0.25])
        self.assertAlmostEqual(math.pi * grid.equiv_radius_m ** 2, grid.cell_side_m ** 2)

    def test_receivers_offset_from_transmitters(self):
        cfg = small_scene(n_tx=4, n_rx=4)
        layout = make_array_layout(cfg)
        np.testing.assert_allclose(np.hypot(*layout.tx_positions.T), cfg.antenna_radius_m)
        gaps = np.linalg.norm(layout.tx_positions[:, None] - layout.rx_positions[None], axis=-1)
        self.assertGreater(gaps.min(), 0.1)


class ScattererTests(SimpleTestCase):

    def test_sampled_shapes_are_admissible(self):
        params = ShapeParams()
        for grid_n in (32, 64):
            for seed in range(1000):
                mask = sample_scatterer(np.random.default_rng(seed), grid_n, params).mask
                area = mask.mean()
                self.assertTrue(flood_fill_connected(mask), msg=f"{grid_n}x{grid_n} seed {seed}")
                self.assertTrue(params.area_range[0] <= area <= params.area_range[1], msg=f"seed {seed}: {area}")
                self.assertFalse(mask[:2].any() or mask[-2:].any() or mask[:, :2].any() or mask[:, -2:].any())

    def test_connectivity_is_four_neighbour(self):
        diagonal = np.array([[1, 0], [0, 1]])
        bar = np.array([[1, 1], [0, 1]])
        for mask, expected in ((diagonal, False), (bar, True)):
            self.assertEqual(is_connected(mask), expected)
            self.assertEqual(flood_fill_connected(mask), expected)

    def test_same_stream_same_shape(self):
        a = sample_scatterer(np.random.default_rng([7, 1]), 16)
        b = sample_scatterer(np.random.default_rng([7, 1]), 16)
        np.testing.assert_array_equal(a.mask, b.mask)

    def test_impossible_constraints_raise(self):
        params = ShapeParams(area_range=(0.9, 1.0))
        with self.assertRaises(GenerationError):
            sample_scatterer(np.random.default_rng(0), 16, params)

    def test_small_grid_rejected(self):
        with self.assertRaises(ConfigurationError):
            sample_scatterer(np.random.default_rng(0), 4)

    def test_rasterized_circle(self):
        mask = rasterize_radial_shape(9, (4.5, 4.5), 2.0)
        self.assertEqual(mask[4, 4], 1)
        self.assertEqual(mask[0, 0], 0)
        np.testing.assert_array_equal(mask, mask.T)


class ContrastTests(SimpleTestCase):

    def test_image_contrast_round_trip(self):
        img = disk_image(small_scene(), 0.25)
        tau = image_to_contrast(img, 16)
        self.assertEqual(tau.shape, (256,))
        np.testing.assert_array_equal(contrast_to_image(tau, 16, img.tau).mask, img.mask)

    def test_wrong_grid_rejected(self):
        img = ContrastImage(mask=np.zeros((8, 8)))
        with self.assertRaises(ShapeError):
            image_to_contrast(img, 16)

    def test_mask_must_be_binary_and_square(self):
        with self.assertRaises(ShapeError):
            ContrastImage(mask=np.full((4, 4), 0.5))
        with self.assertRaises(ShapeError):
            ContrastImage(mask=np.zeros((4, 5)))
