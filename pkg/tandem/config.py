"""
Effective run configuration: scale preset from settings, then a scene file, then flags.
"""
import copy
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

from django.conf import settings
from dotenv import dotenv_values

from .exceptions import ConfigurationError
from .forward import SolverOptions
from .scene import SceneConfig, ShapeParams

logger = logging.getLogger(__name__)

SCENE_KEYS = {
    'domain_side_m': float,
    'grid_n': int,
    'eps_r_scatterer': float,
    'n_tx': int,
    'n_rx': int,
    'antenna_radius_m': float,
    'frequencies_hz': lambda value: [float(part) for part in value.split(',') if part.strip()],
}
SHAPE_KEYS = {
    'shape_r0_min', 'shape_r0_max', 'shape_amp', 'shape_harmonics', 'shape_margin', 'shape_area_min',
    'shape_area_max',
}


@dataclass
class RunConfig:
    scale: str
    scene: SceneConfig
    shape: ShapeParams
    solver: SolverOptions
    samples: int
    aae_split: str
    fnn_split: str
    aae: dict = field(default_factory=dict)
    fnn: dict = field(default_factory=dict)
    inn: dict = field(default_factory=dict)
    seed: int = 0
    workers: int = 1
    out_dir: str = ''
    dtype: str = 'float32'
    checkpoint_every: int = 50
    config_file: str = None

    def as_dict(self):
        data = asdict(self)
        data['scene'] = self.scene.as_dict()
        data['solver'] = self.solver.as_dict()
        return data


def read_scene_file(path):
    """Parse a ``key = value`` scene file into (scene overrides, shape overrides)."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} does not exist")
    scene, shape = {}, {}
    for key, value in dotenv_values(path).items():
        if value is None:
            raise ConfigurationError(f"{path}: key {key!r} has no value")
        if key in SCENE_KEYS:
            try:
                scene[key] = SCENE_KEYS[key](value)
            except ValueError as exc:
                raise ConfigurationError(f"{path}: bad value for {key!r}: {value!r}") from exc
        elif key in SHAPE_KEYS:
            shape[key] = value
        else:
            raise ConfigurationError(f"{path}: unknown config key {key!r}")
    return scene, shape


def _apply(section, overrides):
    for key, value in overrides.items():
        if value is not None:
            section[key] = value
    return section


def resolve(scale=None, config_path=None, seed=None, workers=None, out_dir=None, solver=None, tol=None,
            samples=None, aae=None, fnn=None, inn=None):
    """Build the RunConfig; every explicit (non-None) argument wins over file and preset."""
    tandem = settings.TANDEM
    scale = scale or tandem['DEFAULT_SCALE']
    if scale not in tandem['SCALES']:
        raise ConfigurationError(f"unknown scale {scale!r} (choose from {', '.join(tandem['SCALES'])})")
    preset = copy.deepcopy(tandem['SCALES'][scale])
    scene_values = preset['scene']
    shape_values = {}
    if config_path:
        file_scene, shape_values = read_scene_file(config_path)
        scene_values.update(file_scene)
    try:
        shape = ShapeParams.from_dict(shape_values)
    except ValueError as exc:
        raise ConfigurationError(f"bad shape parameter: {exc}") from exc
    solver_values = _apply(dict(tandem['SOLVER']), {'method': solver, 'tolerance': tol})
    if workers is not None and workers < 1:
        raise ConfigurationError(f"--workers must be >= 1 (got {workers})")
    if seed is not None and seed < 0:
        raise ConfigurationError(f"--seed must be >= 0 (got {seed})")
    config = RunConfig(
        scale=scale,
        scene=SceneConfig.from_dict(scene_values),
        shape=shape,
        solver=SolverOptions(**solver_values),
        samples=samples if samples is not None else preset['samples'],
        aae_split=preset['aae_split'],
        fnn_split=preset['fnn_split'],
        aae=_apply(preset['aae'], aae or {}),
        fnn=_apply(preset['fnn'], fnn or {}),
        inn=_apply(preset['inn'], inn or {}),
        seed=seed if seed is not None else 0,
        workers=workers or 1,
        out_dir=str(out_dir or tandem['OUTPUT_DIR']),
        dtype=tandem['DTYPE'],
        checkpoint_every=tandem['CHECKPOINT_EVERY'],
        config_file=str(config_path) if config_path else None,
    )
    logger.debug(f"Resolved {scale} configuration: {config.as_dict()}")
    return config
