"""On-disk cache of grouped multiset record tables.

Layout (little-endian throughout)::

    b"MVT1"            magic
    u16                format version
    32 bytes           system fingerprint (SHA-256)
    u64                record count
    records            per record: F x i64 exact sums, W x i128 fixed-point
                       window sums, u64 weight
"""

from __future__ import annotations

import logging
import os
import struct
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

MAGIC = b"MVT1"
VERSION = 1
_HEADER = struct.Struct("<4sH32sQ")
CACHE_ENV = "MVTLAB_CACHE_DIR"


def resolve_cache_dir(cache_dir=None):
    """Explicit directory, else the MVTLAB_CACHE_DIR environment variable, else None."""
    if cache_dir:
        return Path(cache_dir)
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else None


def _record_dtype(n_exact: int, n_window: int) -> np.dtype:
    fields = [(f"e{i}", "<i8") for i in range(n_exact)]
    for i in range(n_window):
        fields += [(f"w{i}lo", "<u8"), (f"w{i}hi", "<i8")]
    fields.append(("weight", "<u8"))
    return np.dtype(fields)


def cache_path(cache_dir, fingerprint: bytes) -> Path:
    return Path(cache_dir) / f"{fingerprint.hex()}.mvt"


def cache_store(path, fingerprint: bytes, exact: np.ndarray, window: np.ndarray, weight: np.ndarray) -> None:
    """Write one record table. ``exact`` is (F, M), ``window`` is (W, M), ``weight`` is (M,)."""
    n_exact, n_window, m = exact.shape[0], window.shape[0], weight.shape[0]
    rec = np.empty(m, dtype=_record_dtype(n_exact, n_window))
    for i in range(n_exact):
        rec[f"e{i}"] = exact[i]
    for i in range(n_window):
        v = window[i].astype(np.int64)
        rec[f"w{i}lo"] = v.view(np.uint64)
        rec[f"w{i}hi"] = np.where(v < 0, -1, 0)
    rec["weight"] = weight.astype(np.uint64)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, fingerprint, m))
        fh.write(rec.tobytes())
    os.replace(tmp, path)


def cache_load(path, fingerprint: bytes, n_exact: int, n_window: int):
    """Return (exact, window, weight) or None if the file is missing, stale or foreign."""
    path = Path(path)
    if not path.exists():
        return None
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        log.warning("cache file %s truncated; recomputing", path)
        return None
    magic, version, fp, m = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        log.warning("cache file %s has magic %r version %d; recomputing", path, magic, version)
        return None
    if fp != fingerprint:
        log.warning("cache file %s fingerprint mismatch; recomputing", path)
        return None
    dt = _record_dtype(n_exact, n_window)
    if len(data) != _HEADER.size + m * dt.itemsize:
        log.warning("cache file %s has unexpected size; recomputing", path)
        return None
    rec = np.frombuffer(data, dtype=dt, offset=_HEADER.size, count=m)
    exact = np.empty((n_exact, m), np.int64)
    window = np.empty((n_window, m), np.int64)
    for i in range(n_exact):
        exact[i] = rec[f"e{i}"]
    for i in range(n_window):
        lo = rec[f"w{i}lo"].view(np.int64)
        hi = rec[f"w{i}hi"]
        if np.any(hi != np.where(lo < 0, -1, 0)):
            log.warning("cache file %s holds window values beyond 64 bits; recomputing", path)
            return None
        window[i] = lo
    weight = rec["weight"].astype(np.int64)
    return exact, window, weight
