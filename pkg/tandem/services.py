import json
import logging
import math
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np
from django.db import DatabaseError

from . import forward, validation
from .aae import AAEHyper, AAEModel, reconstruct_mean, train_aae
from .dataset import generate_dataset, read_dataset
from .exceptions import ConfigurationError, IntegrationError, ShapeError, TandemError, ValidationFailed
from .exports import save_pgm, write_csv
from .fnn import FNNHyper, FNNModel, train_fnn
from .inn import INNHyper, INNModel, check_compatible, frozen_refs, invert, train_inn
from .models import DatasetRecord, ModelCheckpoint, RunReport
from .neural.bundle import file_sha256, load_bundle
from .neural.metrics import R2Accumulator, metric_bce, metric_ssim, regression_fit
from .scene import SceneConfig

logger = logging.getLogger(__name__)

SSIM_SAMPLE_LIMIT = 500


def json_safe(value):
    """Plain-JSON copy: numpy scalars/arrays unwrapped, non-finite floats -> None."""
    if isinstance(value, dict):
        return {str(k): json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return json_safe(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, Path):
        return str(value)
    return value


def _build(cls, architecture, **kwargs):
    try:
        return cls(**kwargs, **(architecture or {}))
    except TypeError as exc:
        raise ConfigurationError(f"bad architecture override for {cls.__name__}: {exc}") from exc


def _hyper(cls, values, checkpoint_every=None):
    names = {f.name for f in dataclass_fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigurationError(f"unknown {cls.__name__} keys: {', '.join(sorted(unknown))}")
    kwargs = dict(values)
    if checkpoint_every is not None and 'checkpoint_every' in names:
        kwargs.setdefault('checkpoint_every', checkpoint_every)
    return cls(**kwargs)


class RegistryService:
    """Run registry writes; a missing or unmigrated database only costs a warning."""

    @staticmethod
    def record_dataset(path, manifest):
        try:
            record, _ = DatasetRecord.objects.update_or_create(
                path=str(Path(path).resolve()),
                defaults={
                    'n_samples': manifest.n_samples,
                    'grid_n': manifest.grid_n,
                    'field_length': manifest.field_length,
                    'seed': manifest.seed,
                    'sha256': manifest.sha256,
                    'manifest': json_safe(json.loads(manifest.to_json())),
                },
            )
            return record
        except DatabaseError as e:
            logger.warning(f"Registry unavailable, dataset {path} not recorded: {e}")
            return None

    @staticmethod
    def record_checkpoint(kind, path, dataset_path=None):
        try:
            bundle = load_bundle(path)
            dataset = None
            if dataset_path:
                dataset = DatasetRecord.objects.filter(path=str(Path(dataset_path).resolve())).first()
            return ModelCheckpoint.objects.create(
                kind=kind,
                path=str(Path(path).resolve()),
                sha256=file_sha256(path),
                architecture=json_safe(bundle.architecture),
                metadata=json_safe(bundle.metadata),
                dataset=dataset,
            )
        except DatabaseError as e:
            logger.warning(f"Registry unavailable, checkpoint {path} not recorded: {e}")
            return None

    @staticmethod
    def record_run(report):
        try:
            return RunReport.objects.create(
                command=report['command'],
                status=report['status'],
                config=report['config'],
                metrics=report['metrics'],
                artifacts=report['artifacts'],
                timings=report['timings'],
                error_class=report.get('error_class', ''),
                error_message=report.get('error_message', ''),
            )
        except DatabaseError as e:
            logger.warning(f"Registry unavailable, run report not recorded: {e}")
            return None


class RunReportService:

    @staticmethod
    def build(command, status, config, metrics=None, artifacts=None, timings=None, error=None):
        report = {
            'command': command,
            'status': status,
            'config': json_safe(config),
            'metrics': json_safe(metrics or {}),
            'artifacts': [str(a) for a in (artifacts or [])],
            'timings': json_safe(timings or {}),
        }
        if error is not None:
            # Anything outside the toolkit hierarchy is reported as an internal error.
            report['error_class'] = error.__class__.__name__ if isinstance(error, TandemError) else 'InternalError'
            report['error_message'] = str(error)
        return report

    @staticmethod
    def emit(out_dir, report):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / 'report.json'
        path.write_text(json.dumps(report, indent=2, sort_keys=True))
        RegistryService.record_run(report)
        return path


class DatasetService:

    @staticmethod
    def generate(config, out_dir, n=None, snr_db=math.inf, redraw_on_failure=False, dump_index=None, resume=True):
        n = n or config.samples
        manifest = generate_dataset(
            out_dir, n, config.scene, config.solver,
            seed=config.seed,
            workers=config.workers,
            snr_db=snr_db,
            shape_params=config.shape,
            redraw_on_failure=redraw_on_failure,
            resume=resume,
        )
        artifacts = [Path(out_dir) / 'samples.bin', Path(out_dir) / 'manifest.json']
        if dump_index is not None:
            reader = read_dataset(out_dir, verify=False)
            img, _ = reader[dump_index]
            path = Path(out_dir) / f"fields_{dump_index}.npz"
            forward.dump_fields(img, config.scene, config.solver, path)
            artifacts.append(path)
        RegistryService.record_dataset(out_dir, manifest)
        metrics = {'n_samples': n, 'field_length': manifest.field_length, 'sha256': manifest.sha256}
        return metrics, artifacts


def _load_split(dataset_path, scheme, name):
    reader = read_dataset(dataset_path, split=name, scheme=scheme)
    images, fields = reader.arrays()
    return reader, images, fields


class TrainingService:

    @staticmethod
    def _metadata(config, reader):
        return {
            'scene': reader.manifest.scene,
            'dataset_path': str(reader.root),
            'dataset_sha256': reader.manifest.sha256,
            'seed': config.seed,
        }

    @staticmethod
    def train_aae(config, dataset_path, out_dir, architecture=None):
        reader, train_images, _ = _load_split(dataset_path, config.aae_split, 'train')
        val_images = None
        if 'val' in reader.manifest.splits.get(config.aae_split, {}):
            _, val_images, _ = _load_split(dataset_path, config.aae_split, 'val')
        rng = np.random.default_rng(config.seed)
        model = _build(AAEModel, architecture, image_size=reader.manifest.grid_n ** 2, rng=rng,
                       dtype=np.dtype(config.dtype))
        hyper = _hyper(AAEHyper, config.aae, config.checkpoint_every)
        metadata = TrainingService._metadata(config, reader)
        model, history = train_aae(train_images, hyper, rng, val_images=val_images, model=model, out_dir=out_dir,
                                   metadata=metadata)
        path = model.save(Path(out_dir) / 'aae.tndb', {**metadata, 'hyper': vars(hyper), 'epochs_run': len(history)})
        RegistryService.record_checkpoint('aae', path, dataset_path)
        last = history[-1]
        metrics = {key: last[key] for key in ('recon_bce', 'val_recon_bce', 'disc_prior_mean', 'disc_latent_mean')}
        metrics['epochs'] = len(history)
        if reader.manifest.grid_n >= 11:
            subset = train_images[:SSIM_SAMPLE_LIMIT]
            n = reader.manifest.grid_n
            recon = reconstruct_mean(model, subset)
            metrics['train_mean_ssim'] = float(np.mean([
                metric_ssim((r.reshape(n, n) >= 0.5).astype(float), img) for r, img in zip(recon, subset)
            ]))
        return metrics, [path, Path(out_dir) / 'aae_history.csv']

    @staticmethod
    def train_fnn(config, dataset_path, out_dir, architecture=None):
        reader, train_images, train_fields = _load_split(dataset_path, config.fnn_split, 'train')
        _, test_images, test_fields = _load_split(dataset_path, config.fnn_split, 'test')
        rng = np.random.default_rng(config.seed)
        model = _build(FNNModel, architecture, grid_n=reader.manifest.grid_n, field_length=reader.manifest.field_length,
                       rng=rng, dtype=np.dtype(config.dtype))
        hyper = _hyper(FNNHyper, config.fnn, config.checkpoint_every)
        metadata = TrainingService._metadata(config, reader)
        model, history = train_fnn(train_images, train_fields, test_images, test_fields, hyper, rng, model=model,
                                   out_dir=out_dir, metadata=metadata)
        path = model.save(Path(out_dir) / 'fnn.tndb', model.training_metadata)
        RegistryService.record_checkpoint('fnn', path, dataset_path)
        best = model.training_metadata['best_epoch']
        metrics = {
            'epochs': len(history),
            'best_epoch': best,
            'best_test_mse': model.training_metadata['best_test_mse'],
            'test_r2': history[best - 1]['test_r2'],
            'first_test_mse': history[0]['test_mse'],
        }
        return metrics, [path, Path(out_dir) / 'fnn_history.csv']

    @staticmethod
    def train_inn(config, dataset_path, aae_path, fnn_path, out_dir, architecture=None):
        reader, _, train_fields = _load_split(dataset_path, config.fnn_split, 'train')
        _, _, test_fields = _load_split(dataset_path, config.fnn_split, 'test')
        refs = frozen_refs(aae_path, fnn_path)
        aae_bundle, fnn_bundle = load_bundle(aae_path), load_bundle(fnn_path)
        aae_model = AAEModel.from_bundle(aae_bundle)
        fnn_model = FNNModel.from_bundle(fnn_bundle)
        check_compatible(aae_model, fnn_model, aae_bundle.metadata, fnn_bundle.metadata)
        if fnn_model.field_length != reader.manifest.field_length:
            raise IntegrationError(
                f"FNN predicts {fnn_model.field_length} amplitudes, dataset has {reader.manifest.field_length}"
            )
        rng = np.random.default_rng(config.seed)
        model = _build(INNModel, architecture, generator_model=aae_model, fnn_model=fnn_model, rng=rng, frozen_refs=refs)
        model.tau = reader.manifest.scene_config().tau
        hyper = _hyper(INNHyper, config.inn, config.checkpoint_every)
        metadata = TrainingService._metadata(config, reader)
        model, history = train_inn(model, train_fields, test_fields, hyper, rng, out_dir=out_dir, metadata=metadata)
        if frozen_refs(aae_path, fnn_path) != refs:
            raise IntegrationError("a frozen checkpoint file changed during INN training")
        path = model.save(Path(out_dir) / 'inn.tndb', {**metadata, 'hyper': vars(hyper), 'epochs_run': len(history)})
        RegistryService.record_checkpoint('inn', path, dataset_path)
        best = min(history, key=lambda row: row['test_loss'])
        metrics = {
            'epochs': len(history),
            'best_epoch': best['epoch'],
            'best_test_loss': best['test_loss'],
            'first_test_loss': history[0]['test_loss'],
            'consistency_bound': model.consistency_bound,
        }
        return metrics, [path, Path(out_dir) / 'inn_history.csv']


def load_fields_file(path):
    path = Path(path)
    if path.suffix == '.npy':
        return np.load(path).astype(np.float64).ravel()
    return np.loadtxt(path, delimiter=',' if path.suffix == '.csv' else None, dtype=np.float64).ravel()


def field_rows(scene, measured, predicted):
    rows = []
    for f_index, frequency in enumerate(scene.frequencies_hz):
        for tx in range(scene.n_tx):
            for rx in range(scene.n_rx):
                k = forward.field_index(scene, f_index, tx, rx)
                rows.append({
                    'frequency_hz': frequency,
                    'tx': tx,
                    'rx': rx,
                    'measured': float(measured[k]),
                    'predicted': float(predicted[k]),
                })
    return rows


class InversionService:

    @staticmethod
    def invert(config, inn_path, out_dir, fields_path=None, dataset_path=None, indices=(), split=None, scheme=None):
        model = INNModel.load(inn_path)
        bundle_scene = load_bundle(inn_path).metadata.get('scene')
        scene = SceneConfig.from_dict(bundle_scene) if bundle_scene else config.scene
        out_dir = Path(out_dir)
        jobs = []
        if fields_path:
            jobs.append(('input', load_fields_file(fields_path), None))
        if dataset_path is not None:
            reader = read_dataset(dataset_path, split=split, scheme=scheme or config.fnn_split)
            for index in indices:
                try:
                    img, fields = reader[index]
                except IndexError as exc:
                    raise ConfigurationError(f"--index {index}: {exc}") from exc
                jobs.append((str(index), fields, img))
        if not jobs:
            raise ConfigurationError("invert needs --fields or --dataset with --index")
        artifacts, per_sample = [], []
        for label, fields, truth in jobs:
            if fields.shape[0] != model.field_length:
                raise ShapeError(f"field vector has {fields.shape[0]} values, model expects {model.field_length}")
            result = invert(model, fields)
            artifacts.append(save_pgm(out_dir / f"image_{label}.pgm", result.image.mask))
            artifacts.append(save_pgm(out_dir / f"soft_{label}.pgm", result.soft_image))
            artifacts.append(write_csv(out_dir / f"fields_{label}.csv", field_rows(scene, fields, result.predicted_fields)))
            row = {
                'sample': label,
                'residual_l1': result.residual_l1,
                'consistent': result.consistent,
                'area_fraction': result.image.area_fraction,
            }
            if truth is not None:
                row['bce'] = metric_bce(np.clip(result.soft_image, 0, 1), truth.mask)
                if truth.grid_n >= 11:
                    row['ssim'] = metric_ssim(result.image.mask, truth.mask)
            per_sample.append(row)
            logger.info(f"Inverted sample {label}: " + ' '.join(f"{k}={v}" for k, v in row.items() if k != 'sample'))
        return {'samples': per_sample, 'consistency_bound': model.consistency_bound}, artifacts


class ReportService:

    @staticmethod
    def evaluate(config, kind, model_path, dataset_path, out_dir, split='test', scheme=None):
        scheme = scheme or (config.aae_split if kind == 'aae' else config.fnn_split)
        reader = read_dataset(dataset_path, split=split, scheme=scheme)
        images, fields = reader.arrays()
        n = reader.manifest.grid_n
        rows = []
        summary = {'kind': kind, 'split': split, 'scheme': scheme, 'n_samples': len(reader)}
        if kind == 'aae':
            model = AAEModel.load(model_path)
            recon = reconstruct_mean(model, images)
            for index, (soft, img) in enumerate(zip(recon, images)):
                row = {'index': index, 'bce': metric_bce(soft, img.ravel())}
                if n >= 11:
                    row['ssim'] = metric_ssim((soft.reshape(n, n) >= 0.5).astype(float), img)
                rows.append(row)
        elif kind == 'fnn':
            model = FNNModel.load(model_path)
            r2 = R2Accumulator()
            predictions = []
            for index, (img, target) in enumerate(zip(images, fields)):
                predicted = model.scaler.inverse(model.forward_standardized(img))[0]
                standardized = model.scaler.transform(target) - model.scaler.transform(predicted)
                rows.append({'index': index, 'mse': float(np.mean(standardized ** 2))})
                r2.update(predicted, target)
                predictions.append(predicted)
            summary['r2'] = r2.result()
            summary['slope'], summary['intercept'] = regression_fit(np.array(predictions), fields)
        elif kind == 'inn':
            model = INNModel.load(model_path)
            for index, (img, target) in enumerate(zip(images, fields)):
                result = invert(model, target)
                row = {
                    'index': index,
                    'bce': metric_bce(np.clip(result.soft_image, 0, 1), img),
                    'l1': result.residual_l1,
                    'consistent': result.consistent,
                }
                if n >= 11:
                    row['ssim'] = metric_ssim(result.image.mask, img)
                rows.append(row)
            summary['consistent_fraction'] = float(np.mean([row['consistent'] for row in rows]))
        else:
            raise ConfigurationError(f"unknown model kind {kind!r}")
        for key in ('bce', 'ssim', 'mse', 'l1'):
            values = [row[key] for row in rows if key in row]
            if values:
                summary[f"mean_{key}"] = float(np.mean(values))
        path = write_csv(Path(out_dir) / f"{kind}_{split}_per_sample.csv", rows)
        return summary, [path]


class ValidationService:

    @staticmethod
    def run(config, include_large=True):
        rng = np.random.default_rng(config.seed)
        results = validation.run_checks(config.scene, rng, opts=config.solver, include_large=include_large)
        metrics = {'checks': [r.as_dict() for r in results], 'all_passed': all(r.passed for r in results)}
        return metrics, results

    @staticmethod
    def raise_on_failure(results, metrics=None):
        failed = [r.name for r in results if not r.passed]
        if failed:
            raise ValidationFailed(f"{len(failed)} solver check(s) failed: {', '.join(failed)}", metrics=metrics)
