"""Content-addressed on-disk cache for operator matrices and JSON artifacts.

Operator files use a little-endian binary layout::

    magic   4s   b"ABTO"
    version u32
    E       f64
    lam     f64
    n_max   u32
    M       u32
    variant u8   (0 plain, 1 unitary)
    frame   u8   (0 raw, 1 tilde)
    pad     2x
    digest  32s  sha256 of the payload
    payload      row-major complex128, (2 n_max + 1)^2 entries
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
from pathlib import Path

import numpy as np

from .errors import CacheCorrupt

log = logging.getLogger(__name__)

MAGIC = b"ABTO"
VERSION = 1
HEADER = struct.Struct("<4sIddIIBB2x32s")
VARIANTS = ("plain", "unitary")
FRAMES = ("raw", "tilde")
ENV_VAR = "ABLAB_CACHE_DIR"


def content_key(**params) -> str:
    blob = json.dumps(params, sort_keys=True, default=repr).encode()
    return hashlib.sha256(blob).hexdigest()


def operator_key(E, lam, n_max, M, variant, frame) -> str:
    return content_key(kind="operator", E=float(E).hex(), lam=float(lam).hex(),
                       n_max=int(n_max), M=int(M), variant=variant, frame=frame)


def write_operator(path, entries: np.ndarray, E, lam, n_max, M, variant, frame) -> None:
    payload = np.ascontiguousarray(entries, dtype="<c16").tobytes()
    header = HEADER.pack(MAGIC, VERSION, float(E), float(lam), int(n_max), int(M),
                         VARIANTS.index(variant), FRAMES.index(frame),
                         hashlib.sha256(payload).digest())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    os.replace(tmp, path)


def read_operator(path):
    """Return ``(entries, meta)``; raises CacheCorrupt on any inconsistency."""
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise CacheCorrupt(f"{path}: truncated header")
    magic, version, E, lam, n_max, M, variant, frame, digest = HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise CacheCorrupt(f"{path}: bad magic/version")
    payload = data[HEADER.size:]
    size = 2 * n_max + 1
    if len(payload) != size * size * 16:
        raise CacheCorrupt(f"{path}: payload has {len(payload)} bytes, expected {size * size * 16}")
    if hashlib.sha256(payload).digest() != digest:
        raise CacheCorrupt(f"{path}: hash mismatch")
    entries = np.frombuffer(payload, dtype="<c16").reshape(size, size).copy()
    meta = dict(E=E, lam=lam, n_max=n_max, M=M, variant=VARIANTS[variant], frame=FRAMES[frame])
    return entries, meta


class ArtifactCache:
    """Directory-backed store keyed by content hashes."""

    def __init__(self, root):
        self.root = Path(root)
        self.hits = 0
        self.misses = 0

    @classmethod
    def from_env(cls, default):
        return cls(os.environ.get(ENV_VAR) or default)

    def operator_path(self, key):
        return self.root / "operators" / f"{key}.abto"

    def load_operator(self, key):
        path = self.operator_path(key)
        if not path.exists():
            self.misses += 1
            return None
        try:
            entries, meta = read_operator(path)
        except CacheCorrupt as exc:
            log.warning("cache corrupt, recomputing: %s", exc)
            self.misses += 1
            return None
        self.hits += 1
        log.info("cache hit %s", key[:12])
        return entries, meta

    def store_operator(self, key, entries, **meta):
        write_operator(self.operator_path(key), entries, **meta)

    def json_path(self, key):
        return self.root / "json" / f"{key}.json"

    def load_json(self, key):
        path = self.json_path(key)
        if not path.exists():
            self.misses += 1
            return None
        try:
            doc = json.loads(path.read_text())
            body = json.dumps(doc["payload"], sort_keys=True).encode()
            if hashlib.sha256(body).hexdigest() != doc["digest"]:
                raise CacheCorrupt(f"{path}: hash mismatch")
        except (ValueError, KeyError, CacheCorrupt) as exc:
            log.warning("cache corrupt, recomputing: %s", exc)
            self.misses += 1
            return None
        self.hits += 1
        log.info("cache hit %s", key[:12])
        return doc["payload"]

    def store_json(self, key, payload):
        body = json.dumps(payload, sort_keys=True)
        doc = {"digest": hashlib.sha256(body.encode()).hexdigest(), "payload": json.loads(body)}
        path = self.json_path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, sort_keys=True))
