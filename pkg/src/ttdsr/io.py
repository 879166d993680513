"""On-disk formats: TTD1 tensors, factor sets, operator bundles.

A TTD1 file is 4 magic bytes ``TTD1``, three little-endian unsigned 64-bit
dimensions, then ``n1*n2*n3`` little-endian float64 values in layout order
(first index fastest).  Matrices ride along as tensors with a third
dimension of 1.  Readers reject wrong magic and payloads whose size does
not match the header.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .degradation import SpatialOperator, SpectralOperator
from .triple import TripleFactors

__all__ = [
    "MAGIC",
    "read_tensor",
    "write_tensor",
    "read_matrix",
    "write_matrix",
    "save_factors",
    "load_factors",
    "save_operators",
    "load_operators",
]

MAGIC = b"TTD1"
_HEADER = struct.Struct("<QQQ")


def write_tensor(path, t):
    """Serialize an order-3 tensor (see module docstring for the layout)."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 3:
        raise ValueError(f"only order-3 tensors are serializable, got shape {t.shape}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(*t.shape))
        fh.write(np.ravel(t, order="F").astype("<f8").tobytes())


def read_tensor(path):
    """Read a TTD1 file; rejects bad magic and truncated or oversized payloads."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a TTD1 file (magic {raw[:4]!r})")
    if len(raw) < 4 + _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    dims = _HEADER.unpack_from(raw, 4)
    if any(d == 0 for d in dims):
        raise ValueError(f"{path}: zero dimension in header {dims}")
    count = dims[0] * dims[1] * dims[2]
    payload = raw[4 + _HEADER.size :]
    if len(payload) < 8 * count:
        raise ValueError(
            f"{path}: truncated payload ({len(payload)} bytes for {count} values)"
        )
    if len(payload) > 8 * count:
        raise ValueError(f"{path}: {len(payload) - 8 * count} trailing bytes")
    data = np.frombuffer(payload, dtype="<f8")
    return data.reshape(dims, order="F").astype(np.float64)


def write_matrix(path, m):
    """Store a matrix as a TTD1 tensor with a trailing dimension of 1."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {m.shape}")
    write_tensor(path, m[:, :, None])


def read_matrix(path):
    t = read_tensor(path)
    if t.shape[2] != 1:
        raise ValueError(f"{path}: expected a matrix (third dimension 1), got {t.shape}")
    return t[:, :, 0]


_FACTOR_FILES = {"a": "factor_a.ttd", "b": "factor_b.ttd", "c": "factor_c.ttd"}
_FACTOR_HEADER = "factors.txt"


def save_factors(dirpath, factors):
    """Write the three factor tensors plus a text header recording the rank."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    for name, fname in _FACTOR_FILES.items():
        write_tensor(d / fname, getattr(factors, name))
    (d / _FACTOR_HEADER).write_text(f"rank={factors.rank}\n")


def load_factors(dirpath):
    d = Path(dirpath)
    header = (d / _FACTOR_HEADER).read_text().strip()
    if not header.startswith("rank="):
        raise ValueError(f"{d / _FACTOR_HEADER}: expected a 'rank=<r>' line, got {header!r}")
    rank = int(header.split("=", 1)[1])
    factors = TripleFactors(*(read_tensor(d / _FACTOR_FILES[n]) for n in "abc"))
    if factors.rank != rank:
        raise ValueError(
            f"{d}: header rank {rank} does not match factor shapes (rank {factors.rank})"
        )
    return factors


_OPS_SIDECAR = "ops.txt"


def save_operators(dirpath, spatial, spectral):
    """Write p1/p2/p3 as TTD1 matrices plus a provenance sidecar."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix(d / "p1.ttd", spatial.p1)
    write_matrix(d / "p2.ttd", spatial.p2)
    write_matrix(d / "p3.ttd", spectral.p3)
    offset = (spatial.d + 1) // 2  # 1-based position of the first kept pixel
    (d / _OPS_SIDECAR).write_text(
        f"d={spatial.d}\nq={spatial.q}\nsigma={spatial.kernel_sigma!r}\noffset={offset}\n"
    )


def _band_ranges_from_matrix(p3):
    ranges = []
    for row in p3:
        idx = np.flatnonzero(row)
        if idx.size == 0 or idx[-1] - idx[0] + 1 != idx.size:
            raise ValueError("spectral operator rows must have contiguous support")
        ranges.append((int(idx[0]), int(idx[-1]) + 1))
    return tuple(ranges)


def load_operators(dirpath):
    d = Path(dirpath)
    params = {}
    for line in (d / _OPS_SIDECAR).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        params[key] = value
    spatial = SpatialOperator(
        p1=read_matrix(d / "p1.ttd"),
        p2=read_matrix(d / "p2.ttd"),
        d=int(params["d"]),
        q=int(params["q"]),
        kernel_sigma=float(params["sigma"]),
    )
    p3 = read_matrix(d / "p3.ttd")
    spectral = SpectralOperator(p3=p3, band_ranges=_band_ranges_from_matrix(p3))
    return spatial, spectral
