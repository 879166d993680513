"""Triple factor sets and reconstruction of the tensor they encode.

A factor set ``(A, B, C)`` with shared internal size ``r`` encodes the
``(m1, m2, n3)`` tensor whose entry ``(i, j, k)`` is

    sum over t, p, q of  A[i, p, q] * B[t, j, q] * C[t, p, k],

with ``A`` of shape ``(m1, r, r)``, ``B`` of shape ``(r, m2, r)`` and ``C``
of shape ``(r, r, n3)``.  :func:`reconstruct_elementwise` evaluates that sum
literally and serves as the reference oracle; :func:`reconstruct_matricized`
is the production path and computes the same tensor through one of three
matrix-product identities, one per choice of row mode.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .tensor import UnfoldSpec, fold, kron, unfold

__all__ = [
    "TripleFactors",
    "FACTOR_UNFOLDS",
    "factor_to_matrix",
    "matrix_to_factor",
    "reconstruct_elementwise",
    "reconstruct_matricized",
    "random_factors",
]


@dataclass(frozen=True)
class TripleFactors:
    """The three factor tensors, treated as read-only after construction.

    The shared size ``r`` couples the factors: ``a`` is ``(m1, r, r)``,
    ``b`` is ``(r, m2, r)`` and ``c`` is ``(r, r, n3)``.  Construction
    warns (does not fail) when ``r`` exceeds the median of
    ``(m1, m2, n3)``; the decomposition is still well defined there, the
    bound only matters for minimality.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        for name in ("a", "b", "c"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 3:
                raise ValueError(f"factor {name} must be a 3-d array, got shape {arr.shape}")
            object.__setattr__(self, name, arr)
        r = self.a.shape[1]
        if r < 1:
            raise ValueError("factor rank must be at least 1")
        expected = {
            "a": (self.a.shape[0], r, r),
            "b": (r, self.b.shape[1], r),
            "c": (r, r, self.c.shape[2]),
        }
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ValueError(
                    f"factor {name} has shape {got}, expected {shape} for shared rank {r}"
                )
        mid = sorted(self.dims)[1]
        if r > mid:
            warnings.warn(
                f"rank {r} exceeds the median dimension {mid} of {self.dims}; "
                "the factorization is valid but not minimal",
                UserWarning,
                stacklevel=2,
            )

    @property
    def rank(self):
        return self.a.shape[1]

    @property
    def dims(self):
        return (self.a.shape[0], self.b.shape[1], self.c.shape[2])


# Canonical matricization of each factor: its own mode as rows, the two
# shared modes sweeping the columns.  Every matrix-form computation in this
# package moves between factor tensors and factor matrices through this
# single table (and fold/unfold), nowhere else.
FACTOR_UNFOLDS = {
    "a": UnfoldSpec(1, (3, 2)),
    "b": UnfoldSpec(2, (1, 3)),
    "c": UnfoldSpec(3, (1, 2)),
}


def factor_to_matrix(arr, which):
    """Canonical matrix layout of one factor array (``which`` in 'abc')."""
    return unfold(arr, FACTOR_UNFOLDS[which])


def matrix_to_factor(mat, which, shape):
    """Inverse of :func:`factor_to_matrix` for a factor of shape ``shape``."""
    return fold(mat, FACTOR_UNFOLDS[which], shape)


def reconstruct_elementwise(factors):
    """Evaluate the defining contraction entry by entry (reference oracle).

    Deliberately dumb and loop-based; use :func:`reconstruct_matricized`
    for anything but verification.
    """
    m1, m2, n3 = factors.dims
    r = factors.rank
    al = factors.a.tolist()
    bl = factors.b.tolist()
    cl = factors.c.tolist()
    out = np.empty((m1, m2, n3))
    rr = range(r)
    for i in range(m1):
        ai = al[i]
        for j in range(m2):
            for k in range(n3):
                acc = 0.0
                for t in rr:
                    bt = bl[t]
                    ct = cl[t]
                    for p in rr:
                        aip = ai[p]
                        ctp = ct[p]
                        for q in rr:
                            acc += aip[q] * bt[j][q] * ctp[k]
                out[i, j, k] = acc
    return out


def reconstruct_matricized(factors, mode=1):
    """Rebuild the full tensor through the matrix identity for ``mode``.

    All three modes produce the same tensor (up to floating-point
    reassociation); the mode only selects which factor supplies the rows
    of the product.
    """
    m1, m2, n3 = factors.dims
    r = factors.rank
    er = np.eye(r)
    if mode == 1:
        a1 = factor_to_matrix(factors.a, "a")
        bn = unfold(factors.b, UnfoldSpec(3, (2, 1)))
        c3 = factor_to_matrix(factors.c, "c")
        z1 = a1 @ kron(er, bn) @ kron(c3.T, np.eye(m2))
        return fold(z1, UnfoldSpec(1, (2, 3)), (m1, m2, n3))
    if mode == 2:
        b2 = factor_to_matrix(factors.b, "b")
        cl = unfold(factors.c, UnfoldSpec(1, (3, 2)))
        amn = unfold(factors.a, UnfoldSpec(1, (2, 3)))
        z2 = b2 @ kron(er, cl) @ kron(amn.T, np.eye(n3))
        return fold(z2, UnfoldSpec(2, (3, 1)), (m1, m2, n3))
    if mode == 3:
        c3 = factor_to_matrix(factors.c, "c")
        bl = unfold(factors.b, UnfoldSpec(1, (2, 3)))
        anm = factor_to_matrix(factors.a, "a")
        z3 = c3 @ kron(er, bl) @ kron(anm.T, np.eye(m2))
        return fold(z3, UnfoldSpec(3, (2, 1)), (m1, m2, n3))
    raise ValueError(f"mode must be 1, 2 or 3, got {mode}")


def random_factors(dims, rank, seed):
    """Standard-normal factor set from a seeded PCG64 generator.

    Identical seeds give bit-identical factors.
    """
    if rank < 1:
        raise ValueError(f"rank must be at least 1, got {rank}")
    m1, m2, n3 = dims
    rng = np.random.default_rng(seed)
    return TripleFactors(
        rng.standard_normal((m1, rank, rank)),
        rng.standard_normal((rank, m2, rank)),
        rng.standard_normal((rank, rank, n3)),
    )
