import csv
import logging
from pathlib import Path

import numpy as np
from PIL import Image

logger = logging.getLogger(__name__)


def write_csv(path, rows, fieldnames=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = list(rows)
    fieldnames = fieldnames or (list(rows[0]) if rows else [])
    with open(path, 'w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    return path


def read_csv(path):
    with open(path, newline='') as handle:
        return list(csv.DictReader(handle))


def save_pgm(path, image):
    """Grayscale portable image; probabilities in [0, 1] or a 0/1 mask map to 0..255."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pixels = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.rint(pixels * 255).astype(np.uint8)).save(path, format='PPM')
    logger.debug(f"Image written to {path}")
    return path


def load_pgm(path):
    with Image.open(path) as img:
        return np.asarray(img.convert('L'), dtype=np.float64) / 255.0
