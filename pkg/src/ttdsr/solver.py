"""Limited-memory BFGS driver for the fusion objective.

The optimization variable is the flat stack of the three factor matrices,
``x = (vec A; vec B; vec C)``, each block in factor-tensor layout order.
Search directions come from the classic two-loop recursion over a ring
buffer of curvature pairs ``(s, y)``, seeded each iteration with a
Barzilai-Borwein diagonal ``gamma * I``.  Pairs with curvature
``y.s`` below a threshold are stored with a zero weight, which makes them
exactly inert in the recursion and keeps the implicit matrix positive
definite.  Steps are chosen by Armijo backtracking.

The driver records one row per iteration (value, gradient norms, step
size, direction diagnostics, timing) plus a terminal row for the final
iterate, and tags the trace with why it stopped.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .objective import gradient, objective_and_gradient, objective_value
from .triple import TripleFactors

__all__ = [
    "SolverConfig",
    "LbfgsHistory",
    "IterationRecord",
    "IterationTrace",
    "LineSearchError",
    "NumericalBreakdownError",
    "bb_scaling",
    "two_loop_direction",
    "armijo_backtrack",
    "flatten_factors",
    "unflatten_factors",
    "flatten_gradient",
    "solve",
]

TRACE_CSV_HEADER = "iter,f,gnorm_inf,gnorm_2,alpha,backtracks,ptg,gamma,ms"


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters of the solver.

    Defaults are the reference settings: memory 5, Armijo constant 0.01,
    backtracking ratio 0.5, regularization weight 1, at most 400
    iterations, and stopping when the gradient sup-norm drops below 1e-10
    or when both the step sup-norm falls below 1e-16 and the value change
    below 1e-2.
    """

    memory: int = 5
    armijo_sigma: float = 0.01
    backtrack_beta: float = 0.5
    mu: float = 1.0
    curvature_eps: float = 1e-10
    max_iter: int = 400
    tol_grad_inf: float = 1e-10
    tol_x_inf: float = 1e-16
    tol_f_abs: float = 1e-2
    bb_variant: str = "BB1"
    max_backtracks: int = 60
    seed: int = 0

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError(f"memory must be positive, got {self.memory}")
        if not 0.0 < self.armijo_sigma < 1.0:
            raise ValueError(f"armijo_sigma must lie in (0, 1), got {self.armijo_sigma}")
        if not 0.0 < self.backtrack_beta < 1.0:
            raise ValueError(f"backtrack_beta must lie in (0, 1), got {self.backtrack_beta}")
        if self.mu < 0:
            raise ValueError(f"mu must be nonnegative, got {self.mu}")
        if not 0.0 < self.curvature_eps < 1.0:
            raise ValueError(f"curvature_eps must lie in (0, 1), got {self.curvature_eps}")
        if self.bb_variant not in ("BB1", "BB2"):
            raise ValueError(f"bb_variant must be 'BB1' or 'BB2', got {self.bb_variant!r}")
        if self.max_iter < 0 or self.max_backtracks < 0:
            raise ValueError("iteration budgets must be nonnegative")


class LineSearchError(RuntimeError):
    """Backtracking exhausted its budget without sufficient decrease."""


class NumericalBreakdownError(RuntimeError):
    """Objective or gradient became non-finite."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite value at iteration {iteration}")


class LbfgsHistory:
    """Ring buffer of at most ``capacity`` curvature pairs ``(s, y, rho)``.

    ``rho = 1 / (y.s)`` when the curvature ``y.s`` clears ``curvature_eps``
    and 0 otherwise; zero-weight pairs occupy a slot but contribute nothing
    to the two-loop recursion.
    """

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError(f"history capacity must be positive, got {capacity}")
        self._pairs = deque(maxlen=capacity)

    def push(self, s, y, curvature_eps):
        s = np.asarray(s, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        ys = float(y @ s)
        rho = 1.0 / ys if ys >= curvature_eps else 0.0
        self._pairs.append((s, y, rho))
        return rho

    def __len__(self):
        return len(self._pairs)

    def __iter__(self):
        """Oldest to newest."""
        return iter(self._pairs)


def bb_scaling(s, y, variant="BB1", eps=1e-10):
    """Barzilai-Borwein diagonal scale from one curvature pair.

    BB1 is ``y.s / ||y||^2`` and BB2 is ``||s||^2 / y.s``.  When the
    curvature ``y.s`` falls below ``eps`` the scale degrades to 1, which
    matches the skip rule for the pair itself.
    """
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    ys = float(y @ s)
    if ys < eps:
        return 1.0
    if variant == "BB1":
        return ys / float(y @ y)
    if variant == "BB2":
        return float(s @ s) / ys
    raise ValueError(f"variant must be 'BB1' or 'BB2', got {variant!r}")


def two_loop_direction(history, g, gamma):
    """Direction ``-H g`` for the implicit matrix seeded with ``gamma * I``.

    An empty history (or one of all-skipped pairs) gives plain scaled
    steepest descent ``-gamma * g``.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    q = np.array(g, dtype=np.float64, copy=True)
    pairs = list(history)
    alphas = [0.0] * len(pairs)
    for i in range(len(pairs) - 1, -1, -1):
        s, y, rho = pairs[i]
        a = rho * float(s @ q)
        alphas[i] = a
        q -= a * y
    r = gamma * q
    for i, (s, y, rho) in enumerate(pairs):
        b = rho * float(y @ r)
        r += (alphas[i] - b) * s
    return -r


def armijo_backtrack(fun, x, p, g, f_x, sigma=0.01, beta=0.5, max_backtracks=60):
    """Find the smallest ``omega`` with ``f(x + beta^omega p)`` below the
    Armijo line ``f(x) + sigma * beta^omega * p.g``.

    Parameters
    ----------
    fun : callable
        Maps a point to its objective value.
    x, p, g : ndarray
        Current point, search direction, gradient at ``x``.
    f_x : float
        Objective at ``x``.

    Returns
    -------
    (alpha, f_new, omega)
        Accepted step size ``beta^omega``, its value and the backtrack
        count.

    Raises
    ------
    ValueError
        If ``p`` is not a descent direction (``p.g >= 0``).
    LineSearchError
        If no step within the budget satisfies the condition.
    """
    ptg = float(np.asarray(p) @ np.asarray(g))
    if ptg >= 0:
        raise ValueError(f"not a descent direction: p.g = {ptg:.6e} >= 0")
    for omega in range(max_backtracks + 1):
        alpha = beta**omega
        f_new = fun(x + alpha * p)
        if f_new <= f_x + sigma * alpha * ptg:
            return alpha, f_new, omega
    raise LineSearchError(
        f"no sufficient decrease within {max_backtracks} backtracks "
        f"(f = {f_x:.6e}, p.g = {ptg:.6e})"
    )


def flatten_factors(factors):
    """Stack the factors into one vector, a then b then c, layout order."""
    return np.concatenate(
        [
            np.ravel(factors.a, order="F"),
            np.ravel(factors.b, order="F"),
            np.ravel(factors.c, order="F"),
        ]
    )


def unflatten_factors(x, dims, rank):
    """Inverse of :func:`flatten_factors` for the given shape parameters."""
    m1, m2, n3 = dims
    r = rank
    sizes = (m1 * r * r, m2 * r * r, n3 * r * r)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != sum(sizes):
        raise ValueError(
            f"flat vector of length {x.size} does not match dims {dims} rank {r} "
            f"(expected {sum(sizes)})"
        )
    a, b, c = np.split(x, np.cumsum(sizes)[:-1])
    return TripleFactors(
        a.reshape((m1, r, r), order="F"),
        b.reshape((r, m2, r), order="F"),
        c.reshape((r, r, n3), order="F"),
    )


def flatten_gradient(grad):
    """Flatten a block gradient with the same layout as the variables."""
    return np.concatenate(
        [
            np.ravel(grad.da, order="F"),
            np.ravel(grad.db, order="F"),
            np.ravel(grad.dc, order="F"),
        ]
    )


@dataclass(frozen=True)
class IterationRecord:
    """One trace row.

    Rows with ``alpha > 0`` describe an accepted step taken from iterate
    ``k``; the terminal row has ``alpha = 0`` and only reports the final
    iterate's value and gradient norms.
    """

    k: int
    f: float
    gnorm_inf: float
    gnorm_2: float
    alpha: float
    backtracks: int
    ptg: float
    gamma: float
    ms: float


@dataclass
class IterationTrace:
    """Per-iteration records plus the reason the driver stopped.

    Termination reasons: ``gradient-tolerance``, ``step-tolerance``,
    ``max-iterations``, ``line-search-failure``.
    """

    records: list = field(default_factory=list)
    reason: str = ""

    def f_values(self):
        return np.array([rec.f for rec in self.records])

    @property
    def final(self):
        return self.records[-1]

    def write_csv(self, path):
        lines = [TRACE_CSV_HEADER]
        for r in self.records:
            lines.append(
                f"{r.k},{r.f!r},{r.gnorm_inf!r},{r.gnorm_2!r},{r.alpha!r},"
                f"{r.backtracks},{r.ptg!r},{r.gamma!r},{r.ms:.3f}"
            )
        lines.append(f"# reason={self.reason}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _initial_factors(problem, seed):
    # Entry scale 1/sqrt(r) keeps the initial reconstruction O(1).
    m1, m2, n3 = problem.dims
    r = problem.rank
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(r)
    return TripleFactors(
        scale * rng.standard_normal((m1, r, r)),
        scale * rng.standard_normal((r, m2, r)),
        scale * rng.standard_normal((r, r, n3)),
    )


def solve(problem, config=None, init=None):
    """Minimize the fusion objective; return final factors and the trace.

    Parameters
    ----------
    problem : FusionProblem
        Observations, operators and the regularization weight actually
        used by the objective (``config.mu`` is consumed by callers that
        construct the problem, not here).
    config : SolverConfig, optional
    init : TripleFactors, optional
        Starting point; defaults to a seeded random draw with entries of
        standard deviation ``1/sqrt(rank)``.

    Raises
    ------
    NumericalBreakdownError
        If the value or gradient turns non-finite at any iterate.
    """
    cfg = config if config is not None else SolverConfig()
    dims = problem.dims
    r = problem.rank
    factors = init if init is not None else _initial_factors(problem, cfg.seed)
    if factors.rank != r or factors.dims != dims:
        raise ValueError(
            f"initial factors for dims {factors.dims} rank {factors.rank} do not "
            f"match problem dims {dims} rank {r}"
        )

    def fun(xv):
        return objective_value(problem, unflatten_factors(xv, dims, r))

    x = flatten_factors(factors)
    f, grad0 = objective_and_gradient(problem, factors)
    g = flatten_gradient(grad0)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NumericalBreakdownError(0)

    history = LbfgsHistory(cfg.memory)
    gamma = 1.0
    records = []
    reason = "max-iterations"

    k = 0
    while k < cfg.max_iter:
        gnorm_inf = float(np.max(np.abs(g)))
        if gnorm_inf < cfg.tol_grad_inf:
            reason = "gradient-tolerance"
            break
        t0 = time.perf_counter()
        p = two_loop_direction(history, g, gamma)
        ptg = float(p @ g)
        if ptg >= 0:
            reason = "line-search-failure"
            break
        try:
            alpha, f_new, omega = armijo_backtrack(
                fun, x, p, g, f,
                sigma=cfg.armijo_sigma,
                beta=cfg.backtrack_beta,
                max_backtracks=cfg.max_backtracks,
            )
        except LineSearchError:
            reason = "line-search-failure"
            break
        x_new = x + alpha * p
        g_new = flatten_gradient(gradient(problem, unflatten_factors(x_new, dims, r)))
        if not np.isfinite(f_new) or not np.all(np.isfinite(g_new)):
            raise NumericalBreakdownError(k + 1)
        s = x_new - x
        y = g_new - g
        history.push(s, y, cfg.curvature_eps)
        gamma_used = gamma
        gamma = bb_scaling(s, y, cfg.bb_variant, cfg.curvature_eps)
        records.append(
            IterationRecord(
                k=k,
                f=f,
                gnorm_inf=gnorm_inf,
                gnorm_2=float(np.linalg.norm(g)),
                alpha=alpha,
                backtracks=omega,
                ptg=ptg,
                gamma=gamma_used,
                ms=(time.perf_counter() - t0) * 1e3,
            )
        )
        step_converged = (
            float(np.max(np.abs(s))) < cfg.tol_x_inf
            and abs(f_new - f) < cfg.tol_f_abs
        )
        x, f, g = x_new, f_new, g_new
        k += 1
        if step_converged:
            reason = "step-tolerance"
            break

    records.append(
        IterationRecord(
            k=k,
            f=f,
            gnorm_inf=float(np.max(np.abs(g))),
            gnorm_2=float(np.linalg.norm(g)),
            alpha=0.0,
            backtracks=0,
            ptg=0.0,
            gamma=gamma,
            ms=0.0,
        )
    )
    return unflatten_factors(x, dims, r), IterationTrace(records=records, reason=reason)
