"""
ModelBundle checkpoint file.

    b'TNDB' | version u32 | header length u64 | UTF-8 JSON header | float32 LE payload | SHA-256

The JSON header holds kind, architecture, metadata and a tensor table of
(name, shape, offset, count); the trailer hashes every byte before it.
"""
import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..exceptions import CorruptionError, FormatError

logger = logging.getLogger(__name__)

BUNDLE_MAGIC = b'TNDB'
BUNDLE_VERSION = 1
_PREFIX = struct.Struct('<4sIQ')
_DIGEST_SIZE = 32


@dataclass
class ModelBundle:
    kind: str
    architecture: dict
    metadata: dict = field(default_factory=dict)
    tensors: dict = field(default_factory=dict)


def save_bundle(path, bundle):
    path = Path(path)
    table = []
    offset = 0
    chunks = []
    for name, value in bundle.tensors.items():
        data = np.ascontiguousarray(value, dtype='<f4')
        table.append({'name': name, 'shape': list(data.shape), 'offset': offset, 'count': int(data.size)})
        chunks.append(data.tobytes())
        offset += data.size
    header = json.dumps({
        'kind': bundle.kind,
        'architecture': bundle.architecture,
        'metadata': bundle.metadata,
        'tensors': table,
    }, sort_keys=True).encode('utf-8')
    body = _PREFIX.pack(BUNDLE_MAGIC, BUNDLE_VERSION, len(header)) + header + b''.join(chunks)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + '.tmp')
    tmp.write_bytes(body + hashlib.sha256(body).digest())
    tmp.replace(path)
    logger.info(f"Saved {bundle.kind} bundle to {path} ({offset} parameters)")
    return path


def load_bundle(path):
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size + _DIGEST_SIZE:
        raise CorruptionError(f"{path}: file too short for a model bundle")
    magic, version, header_len = _PREFIX.unpack_from(raw)
    if magic != BUNDLE_MAGIC:
        raise FormatError(f"{path}: not a model bundle (magic {magic!r})")
    if version != BUNDLE_VERSION:
        raise FormatError(f"{path}: bundle version {version} is not supported (expected {BUNDLE_VERSION})")
    body, digest = raw[:-_DIGEST_SIZE], raw[-_DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptionError(f"{path}: checksum mismatch")
    start = _PREFIX.size
    header = json.loads(body[start:start + header_len].decode('utf-8'))
    payload = np.frombuffer(body, dtype='<f4', offset=start + header_len)
    tensors = {}
    for entry in header['tensors']:
        chunk = payload[entry['offset']:entry['offset'] + entry['count']]
        if chunk.size != entry['count']:
            raise CorruptionError(f"{path}: tensor {entry['name']} is truncated")
        tensors[entry['name']] = chunk.reshape(entry['shape']).astype(np.float64)
    return ModelBundle(
        kind=header['kind'],
        architecture=header['architecture'],
        metadata=header['metadata'],
        tensors=tensors,
    )


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for block in iter(lambda: handle.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()


def param_checksum(*networks):
    """SHA-256 over the raw parameter bytes of one or more Sequentials."""
    digest = hashlib.sha256()
    for network in networks:
        for name, value in network.named_parameters():
            digest.update(name.encode('utf-8'))
            digest.update(np.ascontiguousarray(value).tobytes())
    return digest.hexdigest()
