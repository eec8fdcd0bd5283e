"""
Physical experiment: investigation domain, cell grid, antenna circle, frequencies,
and the random scatterer images the corpus is built from.

Pixel (row, col) of an image sits at x = -L/2 + (col + 1/2)h, y = -L/2 + (row + 1/2)h,
flattened row-major, so contrast vectors, cell centres and images share one index.
"""
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import constants, ndimage

from .exceptions import ConfigurationError, GenerationError, ShapeError

logger = logging.getLogger(__name__)

DEFAULT_FREQUENCIES_HZ = (60e6, 80e6, 100e6, 120e6)
MAX_SHAPE_RETRIES = 1000


@dataclass(frozen=True)
class SceneConfig:
    domain_side_m: float = 9.45
    grid_n: int = 64
    eps_r_scatterer: float = 2.0
    n_tx: int = 8
    n_rx: int = 16
    antenna_radius_m: float = 9.0
    frequencies_hz: tuple = DEFAULT_FREQUENCIES_HZ
    background: tuple = (constants.epsilon_0, constants.mu_0)

    def __post_init__(self):
        object.__setattr__(self, 'frequencies_hz', tuple(float(f) for f in self.frequencies_hz))
        object.__setattr__(self, 'background', tuple(float(c) for c in self.background))
        self.validate()

    def validate(self):
        if not self.domain_side_m > 0:
            raise ConfigurationError(f"domain_side_m must be > 0 (got {self.domain_side_m})")
        if int(self.grid_n) != self.grid_n or self.grid_n < 2:
            raise ConfigurationError(f"grid_n must be an integer >= 2 (got {self.grid_n})")
        if not self.eps_r_scatterer > 1:
            raise ConfigurationError(
                f"eps_r_scatterer must be > 1 so that the contrast is positive (got {self.eps_r_scatterer})"
            )
        if self.n_tx < 1 or self.n_rx < 1:
            raise ConfigurationError(f"n_tx and n_rx must be >= 1 (got {self.n_tx}, {self.n_rx})")
        half_diagonal = self.domain_side_m * math.sqrt(2) / 2
        if not self.antenna_radius_m > half_diagonal:
            raise ConfigurationError(
                f"antenna_radius_m must exceed the domain half-diagonal {half_diagonal:.4f} m "
                f"(got {self.antenna_radius_m}); antennas would intersect the domain"
            )
        freqs = self.frequencies_hz
        if not freqs:
            raise ConfigurationError("frequencies_hz must not be empty")
        if any(f <= 0 for f in freqs):
            raise ConfigurationError(f"frequencies_hz must all be > 0 (got {list(freqs)})")
        if any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise ConfigurationError(f"frequencies_hz must be strictly increasing (got {list(freqs)})")

    @property
    def tau(self):
        return self.eps_r_scatterer - 1.0

    @property
    def n_cells(self):
        return self.grid_n * self.grid_n

    @property
    def field_length(self):
        return len(self.frequencies_hz) * self.n_tx * self.n_rx

    def wavenumber(self, frequency_hz):
        eps0, mu0 = self.background
        return 2 * math.pi * frequency_hz * math.sqrt(eps0 * mu0)

    def wavenumbers(self):
        return [self.wavenumber(f) for f in self.frequencies_hz]

    def as_dict(self):
        data = asdict(self)
        data['frequencies_hz'] = list(self.frequencies_hz)
        data['background'] = list(self.background)
        return data

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown scene keys: {', '.join(sorted(unknown))}")
        values = dict(data)
        if 'grid_n' in values:
            values['grid_n'] = int(values['grid_n'])
        for key in ('n_tx', 'n_rx'):
            if key in values:
                values[key] = int(values[key])
        return cls(**values)


@dataclass(frozen=True)
class CellGrid:
    centers: np.ndarray
    cell_side_m: float
    equiv_radius_m: float
    grid_n: int

    @property
    def n_cells(self):
        return self.grid_n * self.grid_n

    @property
    def half_side_m(self):
        return self.grid_n * self.cell_side_m / 2


@dataclass(frozen=True)
class ArrayLayout:
    tx_positions: np.ndarray
    rx_positions: np.ndarray


@dataclass(frozen=True)
class ShapeParams:
    """Radial-harmonic blob parameters; radii are fractions of the grid side."""
    r0_range: tuple = (0.08, 0.22)
    amplitude: float = 0.25
    harmonics: int = 4
    margin: int = 2
    area_range: tuple = (0.02, 0.40)

    @classmethod
    def from_dict(cls, data):
        return cls(
            r0_range=(float(data.get('shape_r0_min', 0.08)), float(data.get('shape_r0_max', 0.22))),
            amplitude=float(data.get('shape_amp', 0.25)),
            harmonics=int(data.get('shape_harmonics', 4)),
            margin=int(data.get('shape_margin', 2)),
            area_range=(float(data.get('shape_area_min', 0.02)), float(data.get('shape_area_max', 0.40))),
        )


@dataclass
class ContrastImage:
    mask: np.ndarray
    tau: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        mask = np.asarray(self.mask)
        if mask.ndim != 2 or mask.shape[0] != mask.shape[1]:
            raise ShapeError(f"contrast mask must be square 2-D, got shape {mask.shape}")
        if not np.isin(mask, (0, 1)).all():
            raise ShapeError("contrast mask values must lie in {0, 1}")
        self.mask = mask.astype(np.uint8)

    @property
    def grid_n(self):
        return self.mask.shape[0]

    @property
    def area_fraction(self):
        return float(self.mask.mean())


def make_grid(cfg):
    cfg.validate()
    n = cfg.grid_n
    side = cfg.domain_side_m / n
    coords = -cfg.domain_side_m / 2 + (np.arange(n) + 0.5) * side
    rows, cols = np.meshgrid(coords, coords, indexing='ij')
    centers = np.column_stack([cols.ravel(), rows.ravel()])
    return CellGrid(
        centers=centers,
        cell_side_m=side,
        equiv_radius_m=side * math.sqrt(1 / math.pi),
        grid_n=n,
    )


def make_array_layout(cfg):
    cfg.validate()
    r = cfg.antenna_radius_m
    tx_angles = 2 * np.pi * np.arange(cfg.n_tx) / cfg.n_tx
    # Half-step offset keeps every receiver off the transmitter angles.
    rx_angles = 2 * np.pi * np.arange(cfg.n_rx) / cfg.n_rx + np.pi / cfg.n_rx
    tx = r * np.column_stack([np.cos(tx_angles), np.sin(tx_angles)])
    rx = r * np.column_stack([np.cos(rx_angles), np.sin(rx_angles)])
    gaps = np.linalg.norm(tx[:, None, :] - rx[None, :, :], axis=-1)
    if gaps.min() < 1e-9 * r:
        raise ConfigurationError("a receiver coincides with a transmitter")
    return ArrayLayout(tx_positions=tx, rx_positions=rx)


def rasterize_radial_shape(grid_n, center, r0, amplitudes=(), phases=()):
    """Cells whose centre lies inside r(t) = r0 (1 + sum a_k cos(k t + phi_k)); pixel units."""
    idx = np.arange(grid_n) + 0.5
    rows, cols = np.meshgrid(idx, idx, indexing='ij')
    dy = rows - center[0]
    dx = cols - center[1]
    theta = np.arctan2(dy, dx)
    radius = np.full_like(theta, float(r0))
    for k, (a, phi) in enumerate(zip(amplitudes, phases), start=1):
        radius += r0 * a * np.cos(k * theta + phi)
    return (np.hypot(dx, dy) <= radius).astype(np.uint8)


def is_connected(mask):
    _, count = ndimage.label(mask)
    return count == 1


def sample_scatterer(rng, grid_n, shape_cfg=None, tau=1.0):
    if grid_n < 8:
        raise ConfigurationError(f"scatterer sampling needs grid_n >= 8 (got {grid_n})")
    shape_cfg = shape_cfg or ShapeParams()
    margin = shape_cfg.margin
    area_lo, area_hi = shape_cfg.area_range
    for attempt in range(MAX_SHAPE_RETRIES):
        r0 = rng.uniform(*shape_cfg.r0_range) * grid_n
        amps = rng.uniform(-shape_cfg.amplitude, shape_cfg.amplitude, size=shape_cfg.harmonics)
        phases = rng.uniform(0, 2 * np.pi, size=shape_cfg.harmonics)
        reach = r0 * (1 + np.abs(amps).sum())
        lo, hi = margin + reach, grid_n - margin - reach
        if lo >= hi:
            continue
        center = rng.uniform(lo, hi, size=2)
        mask = rasterize_radial_shape(grid_n, center, r0, amps, phases)
        area = mask.mean()
        if not area_lo <= area <= area_hi:
            continue
        if mask[:margin].any() or mask[grid_n - margin:].any():
            continue
        if mask[:, :margin].any() or mask[:, grid_n - margin:].any():
            continue
        if not is_connected(mask):
            continue
        logger.debug(f"Scatterer accepted after {attempt + 1} draws (area {area:.3f})")
        return ContrastImage(mask=mask, tau=tau)
    raise GenerationError(f"no admissible scatterer after {MAX_SHAPE_RETRIES} draws on a {grid_n}x{grid_n} grid")


def disk_image(cfg, radius_m, center_m=(0.0, 0.0)):
    grid = make_grid(cfg)
    inside = np.hypot(grid.centers[:, 0] - center_m[0], grid.centers[:, 1] - center_m[1]) <= radius_m
    return ContrastImage(mask=inside.reshape(cfg.grid_n, cfg.grid_n).astype(np.uint8), tau=cfg.tau)


def image_to_contrast(img, grid_n=None):
    if grid_n is not None and img.mask.shape != (grid_n, grid_n):
        raise ShapeError(f"image is {img.mask.shape[0]}x{img.mask.shape[1]}, grid is {grid_n}x{grid_n}")
    return img.tau * img.mask.ravel().astype(np.float64)


def contrast_to_image(contrast, grid_n, tau):
    if tau == 0:
        raise ConfigurationError("a zero contrast value cannot be inverted to a mask")
    contrast = np.asarray(contrast, dtype=np.float64)
    if contrast.size != grid_n * grid_n:
        raise ShapeError(f"contrast vector has {contrast.size} entries, grid needs {grid_n * grid_n}")
    return ContrastImage(mask=np.rint(contrast / tau).reshape(grid_n, grid_n).astype(np.uint8), tau=tau)
