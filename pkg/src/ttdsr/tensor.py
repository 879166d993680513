"""Dense order-3 tensor algebra over an explicit column-major layout.

Every tensor handled by this package is a third-order ``numpy.ndarray`` of
float64, and every layout-sensitive operation (vectorization, matricization,
file serialization) follows a single convention: the first index varies
fastest, then the second, then the third.  Entry ``(i, j, k)`` of a tensor
with shape ``(n1, n2, n3)`` therefore sits at flat offset
``i + j*n1 + k*n1*n2`` (0-based).

Matricizations never rely on an implicit reshape of some other convention.
Each of the six unfoldings of an order-3 tensor is described by an
:class:`UnfoldSpec` naming the row mode and the sweep order of the two
column modes, and :func:`unfold`/:func:`fold` place entries by that index
arithmetic alone.  Getting this wrong does not crash anything; it silently
corrupts every gradient built on top, which is why the placement rule lives
in exactly one place.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "UnfoldSpec",
    "ALL_UNFOLD_SPECS",
    "mode_k_product",
    "unfold",
    "fold",
    "kron",
    "vectorize",
    "frobenius_norm",
]


def _as_float_array(x, ndim, name):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimensions, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class UnfoldSpec:
    """Description of one matricization of an order-3 tensor.

    Parameters
    ----------
    row_mode : int
        The mode (1, 2 or 3) whose fibers become the rows.
    column_order : tuple of int
        The two remaining modes; the first listed sweeps the columns
        fastest.  ``UnfoldSpec(1, (3, 2))`` on a ``(n1, n2, n3)`` tensor
        yields an ``n1 x (n3*n2)`` matrix with entry ``(i, k + j*n3)``
        equal to ``t[i, j, k]`` (0-based).
    """

    row_mode: int
    column_order: tuple[int, int]

    def __post_init__(self):
        modes = (self.row_mode,) + tuple(self.column_order)
        if sorted(modes) != [1, 2, 3]:
            raise ValueError(
                f"unfold spec must name modes 1, 2, 3 exactly once, got {modes}"
            )
        object.__setattr__(self, "column_order", tuple(self.column_order))


#: The six distinct matricizations of an order-3 tensor.
ALL_UNFOLD_SPECS = (
    UnfoldSpec(1, (2, 3)),
    UnfoldSpec(1, (3, 2)),
    UnfoldSpec(2, (3, 1)),
    UnfoldSpec(2, (1, 3)),
    UnfoldSpec(3, (1, 2)),
    UnfoldSpec(3, (2, 1)),
)

_EINSUM_BY_MODE = {1: "ti,ijk->tjk", 2: "pj,ijk->ipk", 3: "qk,ijk->ijq"}


def mode_k_product(t, m, k):
    """Contract mode ``k`` of tensor ``t`` against the columns of matrix ``m``.

    Parameters
    ----------
    t : ndarray, shape (n1, n2, n3)
    m : ndarray, shape (rows, t.shape[k-1])
    k : int
        Mode index in {1, 2, 3}.

    Returns
    -------
    ndarray
        Tensor with ``t.shape`` except that dimension ``k`` becomes
        ``m.shape[0]``.  For ``k = 2`` the entries are
        ``out[i, p, k] = sum_j m[p, j] * t[i, j, k]`` and analogously for
        the other modes.
    """
    t = _as_float_array(t, 3, "tensor")
    m = _as_float_array(m, 2, "matrix")
    if k not in _EINSUM_BY_MODE:
        raise ValueError(f"mode index must be 1, 2 or 3, got {k}")
    if m.shape[1] != t.shape[k - 1]:
        raise ValueError(
            f"mode-{k} product needs a matrix with {t.shape[k - 1]} columns "
            f"to match tensor dimension {k} of shape {t.shape}; got {m.shape[1]}"
        )
    return np.einsum(_EINSUM_BY_MODE[k], m, t)


def unfold(t, spec):
    """Matricize ``t`` according to ``spec``.

    The row index is the ``spec.row_mode`` index; the column index is
    ``x + y * dim(first)`` where ``x`` runs over the first-listed column
    mode (fastest) and ``y`` over the second.
    """
    t = _as_float_array(t, 3, "tensor")
    r, (c1, c2) = spec.row_mode, spec.column_order
    perm = (r - 1, c1 - 1, c2 - 1)
    moved = np.transpose(t, perm)
    return moved.reshape(t.shape[r - 1], t.shape[c1 - 1] * t.shape[c2 - 1], order="F")


def fold(mat, spec, dims):
    """Inverse of :func:`unfold`: rebuild the tensor of shape ``dims``.

    ``fold(unfold(t, s), s, t.shape)`` reproduces ``t`` bit-exactly.
    """
    mat = _as_float_array(mat, 2, "matrix")
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d <= 0 for d in dims):
        raise ValueError(f"dims must be three positive integers, got {dims}")
    r, (c1, c2) = spec.row_mode, spec.column_order
    expected = (dims[r - 1], dims[c1 - 1] * dims[c2 - 1])
    if mat.shape != expected:
        raise ValueError(
            f"matrix shape {mat.shape} inconsistent with dims {dims} and "
            f"spec rows=mode {r}, columns=modes {spec.column_order} "
            f"(expected {expected})"
        )
    cube = mat.reshape(dims[r - 1], dims[c1 - 1], dims[c2 - 1], order="F")
    perm = (r - 1, c1 - 1, c2 - 1)
    inv = tuple(perm.index(ax) for ax in range(3))
    return np.transpose(cube, inv)


def kron(a, b):
    """Kronecker product: block matrix with ``a[i, j] * b`` as block (i, j).

    For ``a`` of shape (m, n) and ``b`` of shape (p, q) the result has shape
    (m*p, n*q) with entry ``(i*p + s, j*q + t)`` equal to ``a[i, j] * b[s, t]``.
    """
    return np.kron(_as_float_array(a, 2, "a"), _as_float_array(b, 2, "b"))


def vectorize(t):
    """Stack the entries of ``t`` in layout order (first index fastest)."""
    return np.ravel(_as_float_array(t, 3, "tensor"), order="F")


def frobenius_norm(t):
    """Square root of the sum of squared entries."""
    t = np.asarray(t, dtype=np.float64)
    return float(np.linalg.norm(t.ravel()))
