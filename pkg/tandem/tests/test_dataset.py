import json
import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from tandem.dataset import (
    MANIFEST_FILE, SAMPLES_FILE, generate_dataset, load_manifest, make_sample, read_dataset, split,
)
from tandem.exceptions import ConfigurationError, CorruptionError, FormatError
from tandem.forward import SolverOptions, simulate_response

from .factories import small_scene


class SplitTests(SimpleTestCase):

    def test_presets(self):
        self.assertEqual(split(30000, 'aae'), {'train': (0, 26000), 'val': (26000, 28000), 'test': (28000, 30000)})
        self.assertEqual(split(30000, 'fnn'), {'train': (0, 27000), 'test': (27000, 30000)})
        self.assertEqual(split(2400, 'desk'), {'train': (0, 2000), 'val': (2000, 2200), 'test': (2200, 2400)})

    def test_explicit_counts_must_sum(self):
        self.assertEqual(split(10, {'train': 8, 'test': 2}), {'train': (0, 8), 'test': (8, 10)})
        with self.assertRaises(ConfigurationError):
            split(10, {'train': 8, 'test': 1})
        with self.assertRaises(ConfigurationError):
            split(10, 'unknown')


class GenerationTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.scene = small_scene()
        self.opts = SolverOptions()

    def tearDown(self):
        self.tmp.cleanup()

    def test_layout_and_records(self):
        manifest = generate_dataset(self.dir / 'd', 6, self.scene, self.opts, seed=11)
        reader = read_dataset(self.dir / 'd')
        self.assertEqual(len(reader), 6)
        self.assertEqual(manifest.field_length, 8)
        raw = (self.dir / 'd' / SAMPLES_FILE).read_bytes()
        self.assertEqual(raw[:4], b'TNDS')
        self.assertEqual(len(raw), manifest.size_bytes)
        img, fields = reader[4]
        expected_img, expected_fields = make_sample(4, 11, self.scene, self.opts)
        np.testing.assert_array_equal(img.mask, expected_img.mask)
        np.testing.assert_array_equal(fields, expected_fields)
        np.testing.assert_array_equal(fields, simulate_response(img, self.scene, self.opts))
        data = json.loads((self.dir / 'd' / MANIFEST_FILE).read_text())
        self.assertIsNone(data['snr_db'])
        self.assertIn('fnn', data['splits'])

    def test_worker_count_does_not_change_bytes(self):
        one = generate_dataset(self.dir / 'a', 5, self.scene, self.opts, seed=2, workers=1)
        two = generate_dataset(self.dir / 'b', 5, self.scene, self.opts, seed=2, workers=2)
        self.assertEqual(one.sha256, two.sha256)

    def test_resume_after_partial_write(self):
        full = generate_dataset(self.dir / 'full', 5, self.scene, self.opts, seed=3)
        partial = generate_dataset(self.dir / 'part', 5, self.scene, self.opts, seed=3)
        path = self.dir / 'part' / SAMPLES_FILE
        # Drop the last two records and half of the third.
        keep = path.stat().st_size - 2 * partial.record_size - partial.record_size // 2
        with open(path, 'r+b') as handle:
            handle.truncate(keep)
        resumed = generate_dataset(self.dir / 'part', 5, self.scene, self.opts, seed=3)
        self.assertEqual(resumed.sha256, full.sha256)

    def test_noise_recorded_and_applied(self):
        clean = generate_dataset(self.dir / 'clean', 2, self.scene, self.opts, seed=4)
        noisy = generate_dataset(self.dir / 'noisy', 2, self.scene, self.opts, seed=4, snr_db=10.0)
        self.assertEqual(load_manifest(self.dir / 'noisy').snr_db, 10.0)
        self.assertTrue(math.isinf(load_manifest(self.dir / 'clean').snr_db))
        self.assertNotEqual(clean.sha256, noisy.sha256)
        _, clean_fields = read_dataset(self.dir / 'clean')[0]
        _, noisy_fields = read_dataset(self.dir / 'noisy')[0]
        self.assertFalse(np.array_equal(clean_fields, noisy_fields))

    def test_split_views(self):
        generate_dataset(self.dir / 'd', 30, self.scene, self.opts, seed=5)
        reader = read_dataset(self.dir / 'd', split='test', scheme='fnn')
        self.assertEqual(len(reader), 3)
        whole = read_dataset(self.dir / 'd')
        np.testing.assert_array_equal(reader[0][1], whole[27][1])
        images, fields = reader.arrays()
        self.assertEqual(images.shape, (3, 16, 16))
        self.assertEqual(fields.shape, (3, 8))
        self.assertEqual(len(list(reader)), 3)
        with self.assertRaises(ConfigurationError):
            read_dataset(self.dir / 'd', split='val', scheme='fnn')
        with self.assertRaises(IndexError):
            reader[3]

    def test_rejects_empty_request(self):
        with self.assertRaises(ConfigurationError):
            generate_dataset(self.dir / 'd', 0, self.scene)


class IntegrityTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name) / 'd'
        generate_dataset(self.dir, 3, small_scene(), SolverOptions(), seed=6)
        self.samples = self.dir / SAMPLES_FILE

    def tearDown(self):
        self.tmp.cleanup()

    def test_flipped_byte_detected(self):
        raw = bytearray(self.samples.read_bytes())
        raw[-3] ^= 0x01
        self.samples.write_bytes(bytes(raw))
        with self.assertRaises(CorruptionError):
            read_dataset(self.dir)
        self.assertEqual(len(read_dataset(self.dir, verify=False)), 3)

    def test_truncation_detected(self):
        self.samples.write_bytes(self.samples.read_bytes()[:-10])
        with self.assertRaises(CorruptionError):
            read_dataset(self.dir, verify=False)

    def test_foreign_file_rejected(self):
        raw = bytearray(self.samples.read_bytes())
        raw[:4] = b'NOPE'
        self.samples.write_bytes(bytes(raw))
        with self.assertRaises(FormatError):
            read_dataset(self.dir)

    def test_missing_manifest(self):
        (self.dir / MANIFEST_FILE).unlink()
        with self.assertRaises(FormatError):
            read_dataset(self.dir)
