"""The regularized fusion objective and its gradient.

The objective measures how well a factor set explains the two observations:

    f(A, B, C) = || Yh - model_h(A, B, C) ||_F^2
               + || Ym - model_m(A, B, C) ||_F^2
               + mu * (||A||_F^2 + ||B||_F^2 + ||C||_F^2)

where ``model_h`` degrades the reconstruction spatially and ``model_m``
spectrally.  Rewriting the model through the three matricization identities
turns ``f`` into a function of one factor matrix at a time with the other
two frozen inside six helper matrices; the gradient then follows from
trace-derivative rules and is assembled entirely from ordinary matrix
products (:func:`gradient`).

:func:`gradient_vectorized` recomputes the same gradient along a completely
different route: stack each factor into a long vector, materialize the
model as one explicit matrix of Kronecker products acting on that vector,
and differentiate the resulting linear least squares.  Those materialized
matrices grow fast, so this form is guarded by an element budget and kept
as a verification oracle.  :func:`finite_difference_gradient` is the third,
derivative-free route; :func:`gradient_check` compares all three.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import UnfoldSpec, kron, mode_k_product, unfold, vectorize
from .triple import TripleFactors, factor_to_matrix, matrix_to_factor

__all__ = [
    "FusionProblem",
    "FactorGradient",
    "HelperMats",
    "helper_mats",
    "objective_value",
    "gradient",
    "objective_and_gradient",
    "gradient_vectorized",
    "finite_difference_gradient",
    "GradientCheckResult",
    "gradient_check",
]

# Row-mode matricizations of the two observed tensors, one per factor block.
_OBS_UNFOLDS = {
    "a": UnfoldSpec(1, (2, 3)),
    "b": UnfoldSpec(2, (3, 1)),
    "c": UnfoldSpec(3, (2, 1)),
}


@dataclass(frozen=True)
class FusionProblem:
    """Immutable bundle of the observations, operators and hyperparameters.

    ``yh`` is the spatially coarse / spectrally fine observation with shape
    ``(n1, n2, n3)``; ``ym`` the spatially fine / spectrally coarse one with
    shape ``(m1, m2, m3)``.  The operator shapes must chain: ``p1`` is
    ``(n1, m1)``, ``p2`` is ``(n2, m2)`` and ``p3`` is ``(m3, n3)``.
    """

    yh: np.ndarray
    ym: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray
    mu: float
    rank: int

    def __post_init__(self):
        for name, ndim in (("yh", 3), ("ym", 3), ("p1", 2), ("p2", 2), ("p3", 2)):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != ndim:
                raise ValueError(f"{name} must have {ndim} dimensions, got {arr.shape}")
            object.__setattr__(self, name, arr)
        n1, n2, n3 = self.yh.shape
        m1, m2, m3 = self.ym.shape
        expected = {"p1": (n1, m1), "p2": (n2, m2), "p3": (m3, n3)}
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ValueError(
                    f"operator {name} has shape {got}, expected {shape} given "
                    f"observations {self.yh.shape} and {self.ym.shape}"
                )
        if self.mu < 0:
            raise ValueError(f"regularization weight must be nonnegative, got {self.mu}")
        if self.rank < 1:
            raise ValueError(f"rank must be at least 1, got {self.rank}")

    @property
    def dims(self):
        """Target reconstruction shape (m1, m2, n3)."""
        return (self.ym.shape[0], self.ym.shape[1], self.yh.shape[2])


@dataclass(frozen=True)
class FactorGradient:
    """Partial derivatives, one array per factor, in factor-tensor layout."""

    da: np.ndarray
    db: np.ndarray
    dc: np.ndarray

    def norm_inf(self):
        return max(
            float(np.max(np.abs(block))) for block in (self.da, self.db, self.dc)
        )


@dataclass(frozen=True)
class HelperMats:
    """Degraded factors and the six frozen coefficient matrices.

    ``h``, ``k``, ``g`` are the spatially/spectrally degraded factor
    tensors.  ``d1``/``e1`` multiply the a-block from the right in the two
    residual terms, ``f1``/``g1`` the b-block, ``h1``/``k1`` the c-block.
    Everything here depends on the current factors and is rebuilt at every
    evaluation.
    """

    h: np.ndarray
    k: np.ndarray
    g: np.ndarray
    d1: np.ndarray
    e1: np.ndarray
    f1: np.ndarray
    g1: np.ndarray
    h1: np.ndarray
    k1: np.ndarray


class _Parts:
    """Shared unfoldings for one (problem, factors) evaluation point."""

    def __init__(self, problem, factors):
        if factors.rank != problem.rank:
            raise ValueError(
                f"factor rank {factors.rank} does not match problem rank {problem.rank}"
            )
        if factors.dims != problem.dims:
            raise ValueError(
                f"factor dims {factors.dims} do not match problem dims {problem.dims}"
            )
        self.problem = problem
        self.factors = factors
        self.r = factors.rank
        self.er = np.eye(self.r)
        self.n1, self.n2, self.n3 = problem.yh.shape
        self.m1, self.m2, self.m3 = problem.ym.shape
        # Degraded factors.
        self.ht = mode_k_product(factors.a, problem.p1, 1)
        self.kt = mode_k_product(factors.b, problem.p2, 2)
        self.gt = mode_k_product(factors.c, problem.p3, 3)
        # Canonical factor matrices (own mode as rows).
        self.a1 = factor_to_matrix(factors.a, "a")
        self.b2 = factor_to_matrix(factors.b, "b")
        self.c3 = factor_to_matrix(factors.c, "c")
        self.g3 = factor_to_matrix(self.gt, "c")

    # -- right-hand coefficient matrices, built on demand ----------------
    def d1(self):
        kn = unfold(self.kt, UnfoldSpec(3, (2, 1)))
        return kron(self.er, kn) @ kron(self.c3.T, np.eye(self.n2))

    def e1(self):
        bn = unfold(self.factors.b, UnfoldSpec(3, (2, 1)))
        return kron(self.er, bn) @ kron(self.g3.T, np.eye(self.m2))

    def f1(self):
        cl = unfold(self.factors.c, UnfoldSpec(1, (3, 2)))
        hmn = unfold(self.ht, UnfoldSpec(1, (2, 3)))
        return kron(self.er, cl) @ kron(hmn.T, np.eye(self.n3))

    def g1(self):
        gl = unfold(self.gt, UnfoldSpec(1, (3, 2)))
        amn = unfold(self.factors.a, UnfoldSpec(1, (2, 3)))
        return kron(self.er, gl) @ kron(amn.T, np.eye(self.m3))

    def h1(self):
        kl = unfold(self.kt, UnfoldSpec(1, (2, 3)))
        hnm = unfold(self.ht, UnfoldSpec(1, (3, 2)))
        return kron(self.er, kl) @ kron(hnm.T, np.eye(self.n2))

    def k1(self):
        bl = unfold(self.factors.b, UnfoldSpec(1, (2, 3)))
        return kron(self.er, bl) @ kron(self.a1.T, np.eye(self.m2))

    # -- residual pairs, one per block ------------------------------------
    def residuals_a(self, d1, e1):
        hrow = unfold(self.ht, UnfoldSpec(1, (3, 2)))
        res_h = hrow @ d1 - unfold(self.problem.yh, _OBS_UNFOLDS["a"])
        res_m = self.a1 @ e1 - unfold(self.problem.ym, _OBS_UNFOLDS["a"])
        return res_h, res_m

    def residuals_b(self, f1, g1):
        krow = factor_to_matrix(self.kt, "b")
        res_h = krow @ f1 - unfold(self.problem.yh, _OBS_UNFOLDS["b"])
        res_m = self.b2 @ g1 - unfold(self.problem.ym, _OBS_UNFOLDS["b"])
        return res_h, res_m

    def residuals_c(self, h1, k1):
        res_h = self.c3 @ h1 - unfold(self.problem.yh, _OBS_UNFOLDS["c"])
        res_m = self.g3 @ k1 - unfold(self.problem.ym, _OBS_UNFOLDS["c"])
        return res_h, res_m

    def tikhonov(self):
        f = self.factors
        return float(
            np.sum(f.a * f.a) + np.sum(f.b * f.b) + np.sum(f.c * f.c)
        )


def helper_mats(problem, factors):
    """All six coefficient matrices plus the degraded factor tensors."""
    parts = _Parts(problem, factors)
    return HelperMats(
        h=parts.ht,
        k=parts.kt,
        g=parts.gt,
        d1=parts.d1(),
        e1=parts.e1(),
        f1=parts.f1(),
        g1=parts.g1(),
        h1=parts.h1(),
        k1=parts.k1(),
    )


def objective_value(problem, factors, path=1):
    """Evaluate the fusion objective.

    ``path`` selects which factor's matricization carries the evaluation
    (1, 2 or 3).  All three give the same scalar up to rounding; the
    redundancy exists so tests can cross-check the matrix identities.
    """
    parts = _Parts(problem, factors)
    if path == 1:
        res_h, res_m = parts.residuals_a(parts.d1(), parts.e1())
    elif path == 2:
        res_h, res_m = parts.residuals_b(parts.f1(), parts.g1())
    elif path == 3:
        res_h, res_m = parts.residuals_c(parts.h1(), parts.k1())
    else:
        raise ValueError(f"path must be 1, 2 or 3, got {path}")
    return float(
        np.sum(res_h * res_h) + np.sum(res_m * res_m) + problem.mu * parts.tikhonov()
    )


def _gradient_matrices(parts):
    problem = parts.problem
    d1, e1 = parts.d1(), parts.e1()
    res_h, res_m = parts.residuals_a(d1, e1)
    value = float(np.sum(res_h * res_h) + np.sum(res_m * res_m))
    da = 2.0 * (
        problem.p1.T @ res_h @ d1.T + res_m @ e1.T + problem.mu * parts.a1
    )
    f1, g1 = parts.f1(), parts.g1()
    res_h, res_m = parts.residuals_b(f1, g1)
    db = 2.0 * (
        problem.p2.T @ res_h @ f1.T + res_m @ g1.T + problem.mu * parts.b2
    )
    h1, k1 = parts.h1(), parts.k1()
    res_h, res_m = parts.residuals_c(h1, k1)
    dc = 2.0 * (
        res_h @ h1.T + problem.p3.T @ res_m @ k1.T + problem.mu * parts.c3
    )
    return value, da, db, dc


def gradient(problem, factors):
    """Gradient in matrix form, folded back to factor-tensor layout.

    This is the production path: each block is a handful of dense matrix
    products against the helper matrices, no large Kronecker product is
    ever materialized.
    """
    parts = _Parts(problem, factors)
    _, da, db, dc = _gradient_matrices(parts)
    return FactorGradient(
        da=matrix_to_factor(da, "a", factors.a.shape),
        db=matrix_to_factor(db, "b", factors.b.shape),
        dc=matrix_to_factor(dc, "c", factors.c.shape),
    )


def objective_and_gradient(problem, factors):
    """Value and gradient sharing one helper-matrix assembly."""
    parts = _Parts(problem, factors)
    value, da, db, dc = _gradient_matrices(parts)
    value += problem.mu * parts.tikhonov()
    grad = FactorGradient(
        da=matrix_to_factor(da, "a", factors.a.shape),
        db=matrix_to_factor(db, "b", factors.b.shape),
        dc=matrix_to_factor(dc, "c", factors.c.shape),
    )
    return value, grad


def _kron3(a, b, c, budget):
    rows = a.shape[0] * b.shape[0] * c.shape[0]
    cols = a.shape[1] * b.shape[1] * c.shape[1]
    if rows * cols > budget:
        raise ValueError(
            f"vectorized gradient would materialize a {rows} x {cols} matrix "
            f"({rows * cols} elements, budget {budget:g}); use gradient() instead"
        )
    return kron(kron(a, b), c)


def gradient_vectorized(problem, factors, element_budget=10**8):
    """Gradient via explicit vectorization of the factors (oracle form).

    Each residual becomes ``M x - d`` for a materialized matrix ``M`` built
    from Kronecker products, and the block gradient is ``2 M^T (M x - d)``
    plus the regularization.  Refuses to run when any materialized matrix
    would exceed ``element_budget`` elements.
    """
    parts = _Parts(problem, factors)
    p = parts.problem
    er = parts.er
    n1, n2, n3 = parts.n1, parts.n2, parts.n3
    m1, m2, m3 = parts.m1, parts.m2, parts.m3
    mu = p.mu

    kn = unfold(parts.kt, UnfoldSpec(3, (2, 1)))
    bn = unfold(parts.factors.b, UnfoldSpec(3, (2, 1)))
    cl = unfold(parts.factors.c, UnfoldSpec(1, (3, 2)))
    gl = unfold(parts.gt, UnfoldSpec(1, (3, 2)))
    kl = unfold(parts.kt, UnfoldSpec(1, (2, 3)))
    bl = unfold(parts.factors.b, UnfoldSpec(1, (2, 3)))
    hmn = unfold(parts.ht, UnfoldSpec(1, (2, 3)))
    hnm = unfold(parts.ht, UnfoldSpec(1, (3, 2)))
    amn = unfold(parts.factors.a, UnfoldSpec(1, (2, 3)))

    def block(left, right, x, data):
        m = left @ right
        res = m @ x - data
        return 2.0 * (m.T @ res)

    # a-block: observations vectorized through their mode-1 matricization.
    avec = parts.a1.ravel(order="F")
    dh = vectorize(p.yh)
    dm = vectorize(p.ym)
    ga = (
        block(
            _kron3(parts.c3, np.eye(n2), p.p1, element_budget),
            _kron3(er, kn.T, np.eye(m1), element_budget),
            avec,
            dh,
        )
        + block(
            kron(parts.g3, np.eye(m1 * m2)),
            _kron3(er, bn.T, np.eye(m1), element_budget),
            avec,
            dm,
        )
        + 2.0 * mu * avec
    )

    # b-block: observations through their mode-2 matricization.
    bvec = parts.b2.ravel(order="F")
    dh = unfold(p.yh, _OBS_UNFOLDS["b"]).ravel(order="F")
    dm = unfold(p.ym, _OBS_UNFOLDS["b"]).ravel(order="F")
    gb = (
        block(
            _kron3(hmn, np.eye(n3), p.p2, element_budget),
            _kron3(er, cl.T, np.eye(m2), element_budget),
            bvec,
            dh,
        )
        + block(
            kron(amn, np.eye(m2 * m3)),
            _kron3(er, gl.T, np.eye(m2), element_budget),
            bvec,
            dm,
        )
        + 2.0 * mu * bvec
    )

    # c-block: observations through their mode-3 matricization.
    cvec = parts.c3.ravel(order="F")
    dh = unfold(p.yh, _OBS_UNFOLDS["c"]).ravel(order="F")
    dm = unfold(p.ym, _OBS_UNFOLDS["c"]).ravel(order="F")
    gc = (
        block(
            kron(hnm, np.eye(n2 * n3)),
            _kron3(er, kl.T, np.eye(n3), element_budget),
            cvec,
            dh,
        )
        + block(
            _kron3(parts.a1, np.eye(m2), p.p3, element_budget),
            _kron3(er, bl.T, np.eye(n3), element_budget),
            cvec,
            dm,
        )
        + 2.0 * mu * cvec
    )

    r = parts.r
    return FactorGradient(
        da=matrix_to_factor(ga.reshape(m1, r * r, order="F"), "a", factors.a.shape),
        db=matrix_to_factor(gb.reshape(m2, r * r, order="F"), "b", factors.b.shape),
        dc=matrix_to_factor(gc.reshape(n3, r * r, order="F"), "c", factors.c.shape),
    )


def finite_difference_gradient(problem, factors, step=1e-6):
    """Central-difference gradient, the derivative-free oracle."""
    arrays = [factors.a.copy(), factors.b.copy(), factors.c.copy()]

    def value():
        return objective_value(problem, TripleFactors(*arrays))

    grads = []
    for arr in arrays:
        g = np.empty_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + step
            f_plus = value()
            arr[idx] = orig - step
            f_minus = value()
            arr[idx] = orig
            g[idx] = (f_plus - f_minus) / (2.0 * step)
        grads.append(g)
    return FactorGradient(da=grads[0], db=grads[1], dc=grads[2])


@dataclass(frozen=True)
class GradientCheckResult:
    """Per-block and overall relative errors between the three gradient routes.

    Each entry of ``blocks`` maps a block name to the triple
    (finite-difference vs matrix form, finite-difference vs vectorized
    form, matrix vs vectorized form); the three scalar fields are the
    maxima over blocks.  Errors are componentwise differences scaled by
    ``max(1, ||g||_inf)`` of the matrix-form gradient.
    """

    fd_vs_matrix: float
    fd_vs_vector: float
    matrix_vs_vector: float
    blocks: dict

    def passed(self, tol_fd=1e-6, tol_forms=1e-10):
        return (
            self.fd_vs_matrix <= tol_fd
            and self.fd_vs_vector <= tol_fd
            and self.matrix_vs_vector <= tol_forms
        )


def gradient_check(problem, factors, step=1e-6, element_budget=10**8, _perturb=0.0):
    """Compare the three gradient routes at one point.

    ``_perturb`` deliberately corrupts the matrix-form gradient and exists
    only as a negative-control hook for tests of the check itself.
    """
    g_mat = gradient(problem, factors)
    if _perturb:
        da = g_mat.da.copy()
        da.flat[0] += _perturb
        g_mat = FactorGradient(da=da, db=g_mat.db, dc=g_mat.dc)
    g_vec = gradient_vectorized(problem, factors, element_budget)
    g_fd = finite_difference_gradient(problem, factors, step)

    blocks = {}
    for name in ("a", "b", "c"):
        ref = getattr(g_mat, "d" + name)
        scale = max(1.0, float(np.max(np.abs(ref))))
        fd = getattr(g_fd, "d" + name)
        vec = getattr(g_vec, "d" + name)
        blocks[name] = (
            float(np.max(np.abs(fd - ref))) / scale,
            float(np.max(np.abs(fd - vec))) / scale,
            float(np.max(np.abs(ref - vec))) / scale,
        )
    return GradientCheckResult(
        fd_vs_matrix=max(v[0] for v in blocks.values()),
        fd_vs_vector=max(v[1] for v in blocks.values()),
        matrix_vs_vector=max(v[2] for v in blocks.values()),
        blocks=blocks,
    )
