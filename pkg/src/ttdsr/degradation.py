"""Spatial and spectral degradation operators.

The spatial path maps a fine image to a coarse one by Gaussian blurring
followed by decimation; one such matrix acts on each of the two spatial
modes.  The spectral path aggregates fine bands into a few broad bands by
uniform averaging over contiguous groups.  Both kinds of operator are
row-stochastic, so constant images degrade to the same constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import mode_k_product

__all__ = [
    "SpatialOperator",
    "SpectralOperator",
    "build_spatial",
    "build_spatial_operator",
    "build_spectral",
    "degrade_spatial",
    "degrade_spectral",
    "add_white_gaussian_noise",
]

_ROW_SUM_TOL = 1e-9


def _check_row_stochastic(m, name):
    sums = m.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > _ROW_SUM_TOL):
        raise ValueError(f"{name} rows must sum to 1, got row sums {sums}")


@dataclass(frozen=True)
class SpatialOperator:
    """Blur-and-decimate matrices for the two spatial modes.

    ``p1`` is ``(m1/d) x m1`` and ``p2`` is ``(m2/d) x m2``; both are built
    by :func:`build_spatial` with the same ``d``, ``q`` and
    ``kernel_sigma``.
    """

    p1: np.ndarray
    p2: np.ndarray
    d: int
    q: int
    kernel_sigma: float

    def __post_init__(self):
        object.__setattr__(self, "p1", np.asarray(self.p1, dtype=np.float64))
        object.__setattr__(self, "p2", np.asarray(self.p2, dtype=np.float64))
        _check_row_stochastic(self.p1, "p1")
        _check_row_stochastic(self.p2, "p2")


@dataclass(frozen=True)
class SpectralOperator:
    """Band-aggregation matrix plus the contiguous groups it averages.

    ``band_ranges`` holds ``(start, stop)`` half-open 0-based index ranges,
    one per output band, disjoint and covering the fine bands in order.
    """

    p3: np.ndarray
    band_ranges: tuple

    def __post_init__(self):
        p3 = np.asarray(self.p3, dtype=np.float64)
        object.__setattr__(self, "p3", p3)
        object.__setattr__(self, "band_ranges", tuple(tuple(r) for r in self.band_ranges))
        if np.any(p3 < 0):
            raise ValueError("spectral operator entries must be nonnegative")
        _check_row_stochastic(p3, "p3")
        support = (p3 > 0).astype(int).sum(axis=0)
        if np.any(support > 1):
            raise ValueError("spectral operator rows must have disjoint supports")


def _gaussian_taps(q, sigma):
    # Truncated at half-width (q-1)/2 and renormalized to sum 1.
    half = (q - 1) // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    w = np.exp(-0.5 * (offsets / sigma) ** 2)
    return offsets.astype(int), w / w.sum()


def _reflect_index(j, m):
    # Mirror across the edges (0 and m-1 are the pivots) until in range.
    while j < 0 or j >= m:
        if j < 0:
            j = -j
        else:
            j = 2 * (m - 1) - j
    return j


def build_spatial(m, d, q, kernel_sigma=None):
    """One spatial degradation factor: decimation after Gaussian blur.

    Parameters
    ----------
    m : int
        Fine size; must be divisible by ``d``.
    d : int
        Decimation ratio.  Kept pixels sit at 1-based positions
        ``ceil(d/2), ceil(d/2)+d, ...`` (the center of each block).
    q : int
        Odd number of blur taps.  ``q = 1`` is the identity blur.
    kernel_sigma : float, optional
        Gaussian standard deviation in pixels; defaults to ``q / 6`` so the
        truncation keeps roughly +-3 sigma of mass.

    Returns
    -------
    ndarray, shape (m/d, m)
        Row-stochastic matrix.  Blur rows use mirror handling at the
        edges, so no mass is lost on the boundary.
    """
    m = int(m)
    d = int(d)
    q = int(q)
    if m <= 0 or d <= 0:
        raise ValueError(f"sizes must be positive, got m={m}, d={d}")
    if m % d != 0:
        raise ValueError(f"decimation ratio {d} does not divide size {m}")
    if q < 1 or q % 2 == 0:
        raise ValueError(f"blur width must be odd and positive, got {q}")
    sigma = float(kernel_sigma) if kernel_sigma is not None else q / 6.0
    if sigma <= 0:
        raise ValueError(f"kernel_sigma must be positive, got {sigma}")

    offsets, w = _gaussian_taps(q, sigma)
    blur = np.zeros((m, m))
    for i in range(m):
        for o, wt in zip(offsets, w):
            blur[i, _reflect_index(i + o, m)] += wt

    start = math.ceil(d / 2) - 1
    select = np.zeros((m // d, m))
    select[np.arange(m // d), start + d * np.arange(m // d)] = 1.0
    return select @ blur


def build_spatial_operator(m1, m2, d, q, kernel_sigma=None):
    """Build both spatial factors with shared parameters."""
    sigma = float(kernel_sigma) if kernel_sigma is not None else q / 6.0
    return SpatialOperator(
        p1=build_spatial(m1, d, q, sigma),
        p2=build_spatial(m2, d, q, sigma),
        d=int(d),
        q=int(q),
        kernel_sigma=sigma,
    )


def build_spectral(n3, m3):
    """Aggregate ``n3`` fine bands into ``m3`` contiguous groups.

    Groups are as equal as possible (earlier groups take the remainder);
    each output band is the uniform average of its group.
    """
    n3 = int(n3)
    m3 = int(m3)
    if m3 < 1 or n3 < 1:
        raise ValueError(f"band counts must be positive, got n3={n3}, m3={m3}")
    if m3 > n3:
        raise ValueError(f"cannot aggregate {n3} bands into {m3} broader bands")
    base, extra = divmod(n3, m3)
    p3 = np.zeros((m3, n3))
    ranges = []
    start = 0
    for j in range(m3):
        width = base + (1 if j < extra else 0)
        p3[j, start : start + width] = 1.0 / width
        ranges.append((start, start + width))
        start += width
    return SpectralOperator(p3=p3, band_ranges=tuple(ranges))


def degrade_spatial(z, op):
    """Coarsen both spatial modes of ``z``: apply ``p1`` to mode 1 and
    ``p2`` to mode 2 (equivalently ``p1 @ slice @ p2.T`` per band)."""
    return mode_k_product(mode_k_product(z, op.p1, 1), op.p2, 2)


def degrade_spectral(z, op):
    """Aggregate the band mode of ``z`` (``p3 @ fiber`` per pixel)."""
    return mode_k_product(z, op.p3, 3)


def add_white_gaussian_noise(t, snr_db, seed):
    """Add i.i.d. Gaussian noise at the requested signal-to-noise ratio.

    The noise variance is ``||t||_F^2 / (N * 10^(snr_db/10))`` with ``N``
    the element count, so the realized SNR concentrates on ``snr_db`` for
    large tensors.  ``snr_db = inf`` is the documented no-noise sentinel
    and returns a copy of ``t`` unchanged.  Fixed seeds give identical
    noise.
    """
    t = np.asarray(t, dtype=np.float64)
    if math.isinf(snr_db) and snr_db > 0:
        return t.copy()
    power = float(np.sum(t * t))
    if power == 0.0:
        raise ValueError("cannot scale noise against an all-zero tensor")
    variance = power / (t.size * 10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    return t + math.sqrt(variance) * rng.standard_normal(t.shape)
