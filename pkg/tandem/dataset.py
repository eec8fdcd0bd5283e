"""
Paired (image, field amplitude) corpus on disk.

A dataset directory holds ``samples.bin`` and ``manifest.json``. See docs/dataset_format.md
for the byte layout. Every sample draws from its own stream ``default_rng([seed, index])``,
so the bytes do not depend on the worker count and any record can be regenerated alone.
"""
import hashlib
import json
import logging
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, CorruptionError, FormatError, SolverError
from .forward import GREEN_CONVENTION, SolverOptions, add_noise, simulate_response
from .scene import ContrastImage, SceneConfig, ShapeParams, sample_scatterer

logger = logging.getLogger(__name__)

DATASET_MAGIC = b'TNDS'
DATASET_VERSION = 1
SAMPLES_FILE = 'samples.bin'
MANIFEST_FILE = 'manifest.json'
_PREFIX = struct.Struct('<4sII')
MAX_REDRAWS = 10

# Fractions of n for the held-out splits; train takes the remainder. Order is train, val, test.
SPLIT_PRESETS = {
    'aae': {'val': 2 / 30, 'test': 2 / 30},
    'fnn': {'test': 3 / 30},
    'desk': {'val': 200 / 2400, 'test': 200 / 2400},
}
SPLIT_ORDER = ('train', 'val', 'test')


@dataclass
class DatasetManifest:
    scene: dict
    n_samples: int
    grid_n: int
    field_length: int
    frequencies_hz: list
    seed: int
    solver: dict
    snr_db: float = math.inf
    shape: dict = field(default_factory=dict)
    green_convention: str = GREEN_CONVENTION
    format_version: int = DATASET_VERSION
    splits: dict = field(default_factory=dict)
    sha256: str = ''
    size_bytes: int = 0

    @property
    def record_size(self):
        return self.grid_n * self.grid_n + 8 * self.field_length

    def header(self):
        """The part of the manifest embedded in samples.bin (everything but payload-derived values)."""
        data = asdict(self)
        for key in ('splits', 'sha256', 'size_bytes'):
            data.pop(key)
        data['snr_db'] = _encode_snr(self.snr_db)
        return data

    def to_json(self):
        data = self.header()
        data.update({'splits': self.splits, 'sha256': self.sha256, 'size_bytes': self.size_bytes})
        return json.dumps(data, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data['snr_db'] = _decode_snr(data.get('snr_db'))
        return cls(**data)

    def scene_config(self):
        return SceneConfig.from_dict(self.scene)


def _encode_snr(value):
    return None if math.isinf(value) else value


def _decode_snr(value):
    return math.inf if value is None else float(value)


def split(n, scheme):
    """Contiguous index ranges {name: (start, stop)} for a preset name or explicit counts."""
    if isinstance(scheme, str):
        if scheme not in SPLIT_PRESETS:
            raise ConfigurationError(f"unknown split preset {scheme!r} (choose from {', '.join(SPLIT_PRESETS)})")
        counts = {name: int(math.floor(n * fraction + 1e-9)) for name, fraction in SPLIT_PRESETS[scheme].items()}
        counts['train'] = n - sum(counts.values())
    else:
        counts = {name: int(count) for name, count in scheme.items()}
        if sum(counts.values()) != n:
            raise ConfigurationError(f"split counts {counts} sum to {sum(counts.values())}, dataset has {n} samples")
    unknown = set(counts) - set(SPLIT_ORDER)
    if unknown:
        raise ConfigurationError(f"unknown split names: {', '.join(sorted(unknown))}")
    ranges, start = {}, 0
    for name in SPLIT_ORDER:
        if name in counts:
            ranges[name] = (start, start + counts[name])
            start += counts[name]
    return ranges


def make_sample(index, seed, scene, opts, shape_params=None, snr_db=math.inf, redraw_on_failure=False):
    """(image, amplitudes) for one index; deterministic in (seed, index)."""
    for attempt in range(MAX_REDRAWS if redraw_on_failure else 1):
        rng = np.random.default_rng([seed, index] if attempt == 0 else [seed, index, attempt])
        img = sample_scatterer(rng, scene.grid_n, shape_params, tau=scene.tau)
        try:
            fields = simulate_response(img, scene, opts)
        except SolverError as exc:
            if not redraw_on_failure:
                raise SolverError(f"sample {index}: {exc}", residual=exc.residual, freq_index=exc.freq_index,
                                  tx_index=exc.tx_index) from exc
            logger.warning(f"Sample {index} attempt {attempt} failed to solve ({exc}); redrawing")
            continue
        return img, add_noise(fields, snr_db, rng)
    raise SolverError(f"sample {index}: no solvable scatterer after {MAX_REDRAWS} draws")


def encode_record(img, fields):
    return img.mask.astype(np.uint8).tobytes() + np.asarray(fields, dtype='<f8').tobytes()


def sample_bytes(index, seed, scene, opts, shape_params=None, snr_db=math.inf, redraw_on_failure=False):
    return encode_record(*make_sample(index, seed, scene, opts, shape_params, snr_db, redraw_on_failure))


def _header_bytes(manifest):
    header = json.dumps(manifest.header(), sort_keys=True).encode('utf-8')
    return _PREFIX.pack(DATASET_MAGIC, DATASET_VERSION, len(header)) + header


def _existing_records(path, header, record_size):
    """Complete records already in a partial samples.bin written with the same header."""
    if not path.exists():
        return 0
    with open(path, 'rb') as handle:
        if handle.read(len(header)) != header:
            return 0
    done = (path.stat().st_size - len(header)) // record_size
    with open(path, 'r+b') as handle:
        handle.truncate(len(header) + done * record_size)
    return done


def generate_dataset(out_dir, n, scene, opts=None, seed=0, workers=1, snr_db=math.inf, shape_params=None,
                     redraw_on_failure=False, resume=True):
    if n < 1:
        raise ConfigurationError(f"dataset size must be >= 1 (got {n})")
    opts = opts or SolverOptions()
    shape_params = shape_params or ShapeParams()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = DatasetManifest(
        scene=scene.as_dict(),
        n_samples=n,
        grid_n=scene.grid_n,
        field_length=scene.field_length,
        frequencies_hz=list(scene.frequencies_hz),
        seed=seed,
        solver=opts.as_dict(),
        snr_db=snr_db,
        shape=asdict(shape_params),
    )
    # asdict turns tuples into lists; keep the JSON form stable across write and read.
    manifest.shape = json.loads(json.dumps(manifest.shape))
    header = _header_bytes(manifest)
    path = out_dir / SAMPLES_FILE
    start = _existing_records(path, header, manifest.record_size) if resume else 0
    if start:
        logger.info(f"Resuming dataset at sample {start}/{n}")
    mode = 'ab' if start else 'wb'
    worker = partial(sample_bytes, seed=seed, scene=scene, opts=opts, shape_params=shape_params, snr_db=snr_db,
                     redraw_on_failure=redraw_on_failure)
    indices = range(start, n)
    with open(path, mode) as handle:
        if not start:
            handle.write(header)
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                records = pool.map(worker, indices, chunksize=max(1, len(indices) // (4 * workers)))
                _write_records(handle, records, start, n)
        else:
            _write_records(handle, map(worker, indices), start, n)
    manifest.sha256 = _sha256(path)
    manifest.size_bytes = path.stat().st_size
    manifest.splits = {scheme: split(n, scheme) for scheme in SPLIT_PRESETS}
    (out_dir / MANIFEST_FILE).write_text(manifest.to_json())
    logger.info(f"Dataset of {n} samples written to {out_dir} (sha256 {manifest.sha256[:12]})")
    return manifest


def _write_records(handle, records, start, n):
    step = max(1, (n - start) // 10)
    for offset, record in enumerate(records, start=1):
        handle.write(record)
        if offset % step == 0:
            handle.flush()
            logger.info(f"Generated {start + offset}/{n} samples")


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for block in iter(lambda: handle.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()


def load_manifest(path):
    path = Path(path)
    manifest_path = path / MANIFEST_FILE if path.is_dir() else path
    if not manifest_path.exists():
        raise FormatError(f"no dataset manifest at {manifest_path}")
    try:
        data = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise CorruptionError(f"{manifest_path}: unreadable manifest ({exc})") from exc
    if data.get('format_version') != DATASET_VERSION:
        raise FormatError(f"dataset format version {data.get('format_version')} is not supported")
    return DatasetManifest.from_dict(data)


class DatasetReader:
    """Read-only view of one dataset (optionally one split); iteration is in index order."""

    def __init__(self, path, split_name=None, scheme='desk', verify=True):
        self.root = Path(path)
        self.manifest = load_manifest(self.root)
        self.path = self.root / SAMPLES_FILE
        if not self.path.exists():
            raise CorruptionError(f"{self.path} is missing")
        with open(self.path, 'rb') as handle:
            prefix = handle.read(_PREFIX.size)
            if len(prefix) < _PREFIX.size:
                raise CorruptionError(f"{self.path} is truncated")
            magic, version, header_len = _PREFIX.unpack(prefix)
            if magic != DATASET_MAGIC:
                raise FormatError(f"{self.path}: not a dataset file (magic {magic!r})")
            if version != DATASET_VERSION:
                raise FormatError(f"{self.path}: dataset version {version} is not supported")
            header = json.loads(handle.read(header_len).decode('utf-8'))
        self.offset = _PREFIX.size + header_len
        if header != self.manifest.header():
            raise CorruptionError(f"{self.path}: embedded header does not match {MANIFEST_FILE}")
        expected = self.offset + self.manifest.n_samples * self.manifest.record_size
        actual = self.path.stat().st_size
        if actual != expected or actual != self.manifest.size_bytes:
            raise CorruptionError(f"{self.path}: size {actual} bytes, manifest expects {expected}")
        if verify and _sha256(self.path) != self.manifest.sha256:
            raise CorruptionError(f"{self.path}: checksum mismatch")
        if split_name is None:
            self.start, self.stop = 0, self.manifest.n_samples
        else:
            ranges = self.manifest.splits.get(scheme) or split(self.manifest.n_samples, scheme)
            if split_name not in ranges:
                raise ConfigurationError(f"split {split_name!r} does not exist in scheme {scheme!r}")
            self.start, self.stop = ranges[split_name]
        self.tau = self.manifest.scene_config().tau

    def __len__(self):
        return self.stop - self.start

    def _decode(self, raw):
        n = self.manifest.grid_n
        mask = np.frombuffer(raw[:n * n], dtype=np.uint8).reshape(n, n)
        fields = np.frombuffer(raw[n * n:], dtype='<f8').astype(np.float64)
        return ContrastImage(mask=mask.copy(), tau=self.tau), fields

    def __getitem__(self, k):
        if not 0 <= k < len(self):
            raise IndexError(f"sample {k} outside 0..{len(self) - 1}")
        size = self.manifest.record_size
        with open(self.path, 'rb') as handle:
            handle.seek(self.offset + (self.start + k) * size)
            return self._decode(handle.read(size))

    def __iter__(self):
        size = self.manifest.record_size
        with open(self.path, 'rb') as handle:
            handle.seek(self.offset + self.start * size)
            for _ in range(len(self)):
                yield self._decode(handle.read(size))

    def arrays(self):
        """(images uint8 (k, n, n), fields float64 (k, M)) for the whole view."""
        n, m = self.manifest.grid_n, self.manifest.field_length
        size = self.manifest.record_size
        with open(self.path, 'rb') as handle:
            handle.seek(self.offset + self.start * size)
            raw = np.frombuffer(handle.read(len(self) * size), dtype=np.uint8).reshape(len(self), size)
        images = raw[:, :n * n].reshape(-1, n, n).copy()
        fields = raw[:, n * n:].copy().view('<f8').reshape(-1, m).astype(np.float64)
        return images, fields


def read_dataset(path, split=None, scheme='desk', verify=True):
    return DatasetReader(path, split, scheme, verify)
