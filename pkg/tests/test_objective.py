"""Objective and gradient: path equivalence and oracle agreement."""

import numpy as np
import pytest

from ttdsr.degradation import (
    build_spatial_operator,
    build_spectral,
    degrade_spatial,
    degrade_spectral,
)
from ttdsr.objective import (
    FusionProblem,
    finite_difference_gradient,
    gradient,
    gradient_check,
    gradient_vectorized,
    helper_mats,
    objective_and_gradient,
    objective_value,
)
from ttdsr.solver import flatten_factors, flatten_gradient
from ttdsr.tensor import frobenius_norm
from ttdsr.triple import TripleFactors, random_factors, reconstruct_matricized


def make_problem(dims=(8, 8, 6), r=2, mu=0.0, d=2, q=3, m3=3, seed=0, unit_norm=False):
    """Noiseless instance whose observations come from known rank-r factors."""
    m1, m2, n3 = dims
    truth = random_factors(dims, r, seed)
    z = reconstruct_matricized(truth)
    if unit_norm:
        scale = 1.0 / frobenius_norm(z)
        truth = TripleFactors(scale * truth.a, truth.b, truth.c)
        z = reconstruct_matricized(truth)
    sp = build_spatial_operator(m1, m2, d, q)
    sc = build_spectral(n3, m3)
    problem = FusionProblem(
        yh=degrade_spatial(z, sp),
        ym=degrade_spectral(z, sc),
        p1=sp.p1,
        p2=sp.p2,
        p3=sc.p3,
        mu=mu,
        rank=r,
    )
    return problem, truth


def max_rel_err(g1, g2, ref):
    scale = max(1.0, max(np.max(np.abs(getattr(ref, b))) for b in ("da", "db", "dc")))
    return max(
        np.max(np.abs(getattr(g1, b) - getattr(g2, b))) for b in ("da", "db", "dc")
    ) / scale


class TestObjectiveValue:
    def test_zero_factors_value_is_data_energy(self):
        problem, _ = make_problem(mu=3.0)
        r = problem.rank
        zeros = TripleFactors(
            np.zeros((8, r, r)), np.zeros((r, 8, r)), np.zeros((r, r, 6))
        )
        expected = float(np.sum(problem.yh**2) + np.sum(problem.ym**2))
        assert objective_value(problem, zeros) == pytest.approx(expected, rel=1e-14)

    def test_exact_fit_is_zero_on_unit_norm_data(self):
        problem, truth = make_problem(mu=0.0, unit_norm=True)
        assert objective_value(problem, truth) <= 1e-20

    def test_three_paths_agree(self):
        problem, _ = make_problem(mu=1.0)
        f = random_factors(problem.dims, problem.rank, seed=5)
        vals = [objective_value(problem, f, path=p) for p in (1, 2, 3)]
        assert vals[1] == pytest.approx(vals[0], rel=1e-12)
        assert vals[2] == pytest.approx(vals[0], rel=1e-12)

    def test_nonnegativity_floor_is_regularizer(self):
        problem, _ = make_problem(mu=2.0)
        for seed in range(5):
            f = random_factors(problem.dims, problem.rank, seed=seed)
            floor = problem.mu * (
                np.sum(f.a**2) + np.sum(f.b**2) + np.sum(f.c**2)
            )
            assert objective_value(problem, f) >= floor

    def test_rank_mismatch_rejected(self):
        problem, _ = make_problem()
        with pytest.raises(ValueError, match="rank"):
            objective_value(problem, random_factors(problem.dims, 3, 0))


class TestGradient:
    def test_zero_at_exact_fit_without_regularization(self):
        problem, truth = make_problem(mu=0.0, unit_norm=True)
        g = gradient(problem, truth)
        assert g.norm_inf() <= 1e-12

    @pytest.mark.parametrize("mu", [0.0, 1.0])
    def test_matches_finite_differences(self, mu):
        problem, _ = make_problem(mu=mu, seed=3)
        f = random_factors(problem.dims, problem.rank, seed=11)
        g = gradient(problem, f)
        fd = finite_difference_gradient(problem, f, step=1e-6)
        assert max_rel_err(fd, g, g) <= 1e-6

    def test_matches_vectorized_form(self):
        problem, _ = make_problem(dims=(6, 6, 5), r=2, mu=1.0, m3=2, seed=4)
        f = random_factors(problem.dims, problem.rank, seed=12)
        g = gradient(problem, f)
        gv = gradient_vectorized(problem, f)
        assert max_rel_err(g, gv, g) <= 1e-10

    def test_objective_and_gradient_consistent(self):
        problem, _ = make_problem(mu=0.5)
        f = random_factors(problem.dims, problem.rank, seed=13)
        value, grad = objective_and_gradient(problem, f)
        assert value == pytest.approx(objective_value(problem, f), rel=1e-13)
        assert max_rel_err(grad, gradient(problem, f), grad) == 0.0

    def test_directional_derivative_slope(self):
        # f(x + eps p) - f(x) - eps g.p must shrink at second order.
        problem, _ = make_problem(mu=1.0, seed=6)
        f = random_factors(problem.dims, problem.rank, seed=14)
        x = flatten_factors(f)
        g = flatten_gradient(gradient(problem, f))
        rng = np.random.default_rng(15)
        p = rng.standard_normal(x.size)
        p /= np.linalg.norm(p)
        from ttdsr.solver import unflatten_factors

        def fun(v):
            return objective_value(problem, unflatten_factors(v, problem.dims, problem.rank))

        f0 = fun(x)
        errs = []
        epss = [1e-2 / 2**i for i in range(6)]
        for eps in epss:
            errs.append(abs(fun(x + eps * p) - f0 - eps * float(g @ p)))
        slope = np.polyfit(np.log2(epss), np.log2(errs), 1)[0]
        assert slope >= 1.9


class TestVectorizedForm:
    def test_regularizer_only_problem(self):
        # Zero data and zero operators leave only the 2*mu*x term.
        r, dims = 2, (5, 4, 6)
        m1, m2, n3 = dims
        n1, n2, m3 = 3, 2, 2
        problem = FusionProblem(
            yh=np.zeros((n1, n2, n3)),
            ym=np.zeros((m1, m2, m3)),
            p1=np.zeros((n1, m1)),
            p2=np.zeros((n2, m2)),
            p3=np.zeros((m3, n3)),
            mu=0.7,
            rank=r,
        )
        f = random_factors(dims, r, seed=16)
        g = gradient_vectorized(problem, f)
        np.testing.assert_allclose(g.da, 2 * 0.7 * f.a, rtol=1e-13)
        np.testing.assert_allclose(g.db, 2 * 0.7 * f.b, rtol=1e-13)
        np.testing.assert_allclose(g.dc, 2 * 0.7 * f.c, rtol=1e-13)

    def test_zero_factors_agree_with_matrix_form(self):
        problem, _ = make_problem(mu=1.0)
        r = problem.rank
        zeros = TripleFactors(
            np.zeros((8, r, r)), np.zeros((r, 8, r)), np.zeros((r, r, 6))
        )
        gm = gradient(problem, zeros)
        gv = gradient_vectorized(problem, zeros)
        for b in ("da", "db", "dc"):
            np.testing.assert_array_equal(getattr(gm, b), np.zeros_like(getattr(gm, b)))
            np.testing.assert_array_equal(getattr(gv, b), np.zeros_like(getattr(gv, b)))

    def test_element_budget_guard(self):
        problem, _ = make_problem()
        f = random_factors(problem.dims, problem.rank, seed=17)
        with pytest.raises(ValueError, match="budget"):
            gradient_vectorized(problem, f, element_budget=100)


class TestHelperMats:
    def test_shapes(self):
        problem, _ = make_problem(dims=(8, 6, 5), r=2, d=2, q=3, m3=2)
        f = random_factors(problem.dims, problem.rank, seed=18)
        h = helper_mats(problem, f)
        r = problem.rank
        assert h.h.shape == (4, r, r)
        assert h.k.shape == (r, 3, r)
        assert h.g.shape == (r, r, 2)
        assert h.d1.shape == (r * r, 3 * 5)
        assert h.e1.shape == (r * r, 6 * 2)
        assert h.f1.shape == (r * r, 5 * 4)
        assert h.g1.shape == (r * r, 2 * 8)
        assert h.h1.shape == (r * r, 3 * 4)
        assert h.k1.shape == (r * r, 6 * 8)


class TestProblemValidation:
    def test_operator_shape_mismatch(self):
        with pytest.raises(ValueError, match="p1"):
            FusionProblem(
                yh=np.zeros((4, 4, 6)),
                ym=np.zeros((8, 8, 3)),
                p1=np.zeros((4, 7)),
                p2=np.zeros((4, 8)),
                p3=np.zeros((3, 6)),
                mu=0.0,
                rank=2,
            )

    def test_negative_mu_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            FusionProblem(
                yh=np.zeros((4, 4, 6)),
                ym=np.zeros((8, 8, 3)),
                p1=np.zeros((4, 8)),
                p2=np.zeros((4, 8)),
                p3=np.zeros((3, 6)),
                mu=-1.0,
                rank=2,
            )


class TestGradientCheck:
    def test_clean_gradient_passes(self):
        problem, _ = make_problem(dims=(6, 6, 5), r=2, mu=1.0, m3=2)
        f = random_factors(problem.dims, problem.rank, seed=19)
        result = gradient_check(problem, f)
        assert result.passed()
        assert set(result.blocks) == {"a", "b", "c"}

    def test_perturbed_gradient_fails(self):
        problem, _ = make_problem(dims=(6, 6, 5), r=2, mu=1.0, m3=2)
        f = random_factors(problem.dims, problem.rank, seed=19)
        result = gradient_check(problem, f, _perturb=1.0)
        assert not result.passed()
