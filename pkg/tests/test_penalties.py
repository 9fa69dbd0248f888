import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from mscatter.diagnostics import check_gconvexity
from mscatter.errors import EtaTooSmall, InvalidInput, Unsupported
from mscatter.losses import gaussian_objective
from mscatter.penalties import (PENALTY_NAMES, GaussianSubproblem, check_eta,
                                eta_is_admissible, gaussian_subproblem_objective,
                                generic_geodesic_descent, make_penalty,
                                pava_log_eigen, penalty_grad_inv,
                                penalty_infimum, penalty_value,
                                solve_subproblem)
from mscatter.spd import expm, inv, random_spd, riemannian_distance, sym

from oracles import pava_grid_oracle, random_target


def every_penalty(p):
    a = np.linspace(1.0, -0.5, p)
    return [make_penalty(n, a=a) if n == "elasso" else make_penalty(n) for n in PENALTY_NAMES]


SMOOTH = ("kl", "symkl", "trace_precision", "riemannian", "riemannian_shape")


class TestValues:
    def test_examples(self):
        assert penalty_value(make_penalty("kl"), np.eye(3)) == pytest.approx(3.0)
        assert penalty_value(make_penalty("riemannian"), np.diag([np.e ** 2, 1.0])) == pytest.approx(4.0)
        assert penalty_value(make_penalty("logcn"), np.diag([4.0, 1.0])) == pytest.approx(np.log(4.0))
        assert penalty_value(make_penalty("symkl"), np.diag([2.0, 1.0])) == pytest.approx(3 + 1.5)
        assert penalty_value(make_penalty("tp"), np.diag([2.0, 4.0])) == pytest.approx(0.75)

    def test_riemannian_shape(self):
        S = np.diag([np.e ** 2, 1.0])
        assert penalty_value(make_penalty("rs"), S) == pytest.approx(2.0)

    def test_elasso_pairs_descending(self):
        pen = make_penalty("elasso", a=[2.0, -1.0])
        # eigenvalues 4 and 1 pair with a = 2 and -1 regardless of position
        assert penalty_value(pen, np.diag([1.0, 4.0])) == pytest.approx(2 * np.log(4.0))

    def test_lower_bounds(self, rng):
        for _ in range(30):
            S = random_spd(3, rng, 2.0)
            assert penalty_value(make_penalty("kl"), S) >= 3 - 1e-12
            assert penalty_value(make_penalty("symkl"), S) >= 6 - 1e-12
            assert penalty_value(make_penalty("r"), S) >= 0
            assert penalty_value(make_penalty("logcn"), S) >= 0

    def test_shape_invariance(self, rng):
        for pen in every_penalty(3):
            S = random_spd(3, rng)
            same = abs(penalty_value(pen, S) - penalty_value(pen, 3 * S)) < 1e-10
            assert same == pen.shape_invariant, pen.name

    def test_elasso_zero_sum_is_shape_invariant(self):
        assert make_penalty("elasso", a=[1.0, 0.0, -1.0]).shape_invariant

    def test_infimum(self):
        assert penalty_infimum(make_penalty("kl"), 3) == 3
        assert penalty_infimum(make_penalty("symkl"), 3) == 6
        assert penalty_infimum(make_penalty("logcn"), 3) == 0
        assert penalty_infimum(make_penalty("elasso", a=[1.0, 0.5]), 2) == -np.inf

    @pytest.mark.parametrize("a", [[1.0, 2.0], [np.nan, 0.0]])
    def test_bad_elasso(self, a):
        with pytest.raises(InvalidInput):
            make_penalty("elasso", a=a)

    def test_unknown(self):
        with pytest.raises(InvalidInput):
            make_penalty("lasso")
        with pytest.raises(InvalidInput):
            make_penalty("elasso")

    @pytest.mark.parametrize("name", PENALTY_NAMES)
    def test_gconvex(self, name):
        pen = make_penalty(name, a=[1.0, 0.2, -0.7]) if name == "elasso" else make_penalty(name)
        assert check_gconvexity(lambda S: penalty_value(pen, S), 3, trials=150, seed=3).passed


class TestGradInv:
    def test_examples(self, rng):
        np.testing.assert_array_equal(penalty_grad_inv(make_penalty("tp"), random_spd(3, rng)), np.eye(3))
        np.testing.assert_allclose(penalty_grad_inv(make_penalty("r"), np.eye(2)), np.zeros((2, 2)))
        np.testing.assert_allclose(penalty_grad_inv(make_penalty("kl"), np.diag([2.0, 1.0])),
                                   np.diag([-1.0, 0.0]))

    @pytest.mark.parametrize("name", SMOOTH)
    def test_finite_difference(self, name, rng):
        pen = make_penalty(name)
        for _ in range(5):
            S = random_spd(3, rng)
            Om = inv(S)
            G = penalty_grad_inv(pen, S)
            E = sym(rng.standard_normal((3, 3)))
            h = 1e-6
            fd = (penalty_value(pen, inv(Om + h * E)) - penalty_value(pen, inv(Om - h * E))) / (2 * h)
            assert fd == pytest.approx(np.sum(G * E), rel=1e-5, abs=1e-8)

    @pytest.mark.parametrize("name", ["logcn", "elasso"])
    def test_nonsmooth(self, name):
        pen = make_penalty(name, a=[1.0, -1.0]) if name == "elasso" else make_penalty(name)
        with pytest.raises(Unsupported):
            penalty_grad_inv(pen, np.eye(2))


class TestAdmissibility:
    def test_smooth_any_eta(self):
        for name in SMOOTH:
            assert eta_is_admissible(make_penalty(name), 100.0, 3)

    def test_logcn_any_eta(self):
        # the penalty is nonnegative, so the subproblem stays coercive
        assert eta_is_admissible(make_penalty("logcn"), 50.0, 3)

    def test_elasso_prefix_rule(self):
        pen = make_penalty("elasso", a=[0.0, -1.0])
        assert eta_is_admissible(pen, 1.9, 2)
        assert not eta_is_admissible(pen, 2.0, 2)
        with pytest.raises(EtaTooSmall):
            check_eta(pen, 2.0, 2)
        with pytest.raises(EtaTooSmall):
            solve_subproblem(GaussianSubproblem(np.eye(2), 2.0, pen))

    def test_negative_eta(self):
        with pytest.raises(InvalidInput):
            check_eta(make_penalty("kl"), -0.1, 2)


class TestPava:
    def test_no_pooling(self):
        lam = pava_log_eigen([np.e ** 2, 1.0], [1.0, -1.0], 0.5)
        np.testing.assert_allclose(lam, [np.e ** 2 / 1.5, 2.0])

    def test_full_pool(self):
        np.testing.assert_allclose(pava_log_eigen([1.0, 1.0], [1.0, -1.0], 0.5), [1.0, 1.0])

    def test_eta_zero(self, rng):
        d = np.sort(rng.uniform(0.1, 5, 4))[::-1]
        np.testing.assert_allclose(pava_log_eigen(d, np.linspace(1, -1, 4), 0.0), d)

    def test_grid_oracle(self):
        g = np.random.default_rng(7)
        pooled = 0
        for _ in range(12):
            d = np.sort(g.uniform(0.2, 5.0, 2))[::-1]
            a = np.sort(g.uniform(-1.0, 2.0, 2))[::-1]
            eta = g.uniform(0.0, 0.9)
            lam = pava_log_eigen(d, a, eta)
            pooled += lam[0] == pytest.approx(lam[1])
            np.testing.assert_allclose(lam, pava_grid_oracle(d, a, eta), atol=1e-4)
        assert pooled > 0

    def test_kkt(self, rng):
        for _ in range(30):
            p = 5
            d = np.sort(rng.uniform(0.1, 10, p))[::-1]
            a = np.sort(rng.uniform(-1, 2, p))[::-1]
            eta = 0.5
            lam = pava_log_eigen(d, a, eta)
            c = 1 + eta * a
            assert np.all(np.diff(lam) <= 1e-12 * lam[:-1])
            for level in np.unique(np.round(lam, 10)):
                blk = np.isclose(lam, level, rtol=1e-10)
                assert level == pytest.approx(d[blk].sum() / c[blk].sum(), rel=1e-10)

    def test_monotone_in_d(self, rng):
        for _ in range(30):
            d = np.sort(rng.uniform(0.1, 5, 4))[::-1]
            a = np.sort(rng.uniform(-0.5, 1.5, 4))[::-1]
            bump = 1 + rng.uniform(0, 0.5, 4)
            d2 = np.sort(d * bump)[::-1]
            if np.any(d2 < d):
                continue
            assert np.all(pava_log_eigen(d2, a, 0.7) >= pava_log_eigen(d, a, 0.7) - 1e-12)

    def test_invalid(self):
        with pytest.raises(InvalidInput):
            pava_log_eigen([1.0, 0.0], [1.0, 0.0], 0.1)
        with pytest.raises(EtaTooSmall):
            pava_log_eigen([1.0, 1.0], [0.0, -1.0], 2.5)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.05, 20.0), min_size=2, max_size=6),
       st.floats(-1.0, 1.0), st.floats(0.0, 0.95))
def test_pava_beats_feasible_perturbations(d, slope, eta):
    d = np.sort(np.array(d))[::-1]
    p = d.size
    a = np.linspace(1.0, -1.0, p) * abs(slope)
    theta = np.log(pava_log_eigen(d, a, eta))
    c = 1 + eta * a

    def obj(t):
        return np.sum(d * np.exp(-t) + c * t)

    f0 = obj(theta)
    g = np.random.default_rng(p)
    for _ in range(20):
        t = np.sort(theta + 0.1 * g.standard_normal(p))[::-1]
        assert f0 <= obj(t) + 1e-10


class TestSubproblem:
    def test_kl(self):
        S = solve_subproblem(GaussianSubproblem(np.diag([3.0, 1.0]), 1.0, make_penalty("kl")))
        np.testing.assert_allclose(S, np.diag([2.0, 1.0]))

    def test_symkl_identity(self):
        for eta in (0.1, 1.0, 7.0):
            S = solve_subproblem(GaussianSubproblem(np.eye(3), eta, make_penalty("symkl")))
            np.testing.assert_allclose(S, np.eye(3), atol=1e-14)

    def test_trace_precision(self, rng):
        X = rng.standard_normal((20, 3))
        Sn = X.T @ X / 20
        S = solve_subproblem(GaussianSubproblem(Sn, 0.5, make_penalty("tp")))
        np.testing.assert_allclose(S, Sn + 0.5 * np.eye(3), atol=1e-14)

    @pytest.mark.parametrize("eta", [0.1, 0.5, 3.0])
    def test_riemannian_scalar_root(self, eta):
        c = optimize.brentq(lambda c: -np.e / c + 1 + 2 * eta * np.log(c), 1e-3, 10, xtol=1e-15)
        S = solve_subproblem(GaussianSubproblem(np.e * np.eye(2), eta, make_penalty("r")))
        np.testing.assert_allclose(S, c * np.eye(2), atol=1e-10)

    def test_eta_zero(self, rng):
        M = random_spd(3, rng)
        np.testing.assert_allclose(solve_subproblem(GaussianSubproblem(M, 0.0, make_penalty("kl"))), M)
        with pytest.raises(Unsupported):
            solve_subproblem(GaussianSubproblem(np.diag([1.0, 0.0]), 0.0, make_penalty("kl")))

    def test_singular_target_penalized(self):
        M = np.diag([2.0, 0.0])
        for name in ("kl", "symkl", "tp", "r"):
            S = solve_subproblem(GaussianSubproblem(M, 0.5, make_penalty(name)))
            assert np.linalg.eigvalsh(S)[0] > 0

    @pytest.mark.parametrize("name", PENALTY_NAMES)
    def test_local_optimality(self, name):
        g = np.random.default_rng(17)
        pen = make_penalty(name, a=[1.0, 0.3, -0.4]) if name == "elasso" else make_penalty(name)
        for _ in range(5):
            M = random_target(3, g)
            eta = 0.5
            S = solve_subproblem(GaussianSubproblem(M, eta, pen))
            f0 = gaussian_objective(S, M, eta, pen)
            for _ in range(50):
                D = sym(g.standard_normal((3, 3)))
                D *= g.uniform(0, 0.5) / np.linalg.norm(D)
                R = np.linalg.cholesky(S)
                T = R @ expm(D) @ R.T
                assert riemannian_distance(S, T) <= 0.5 + 1e-9
                assert f0 <= gaussian_objective(T, M, eta, pen) + 1e-9

    @pytest.mark.parametrize("name", ["kl", "symkl", "trace_precision", "riemannian", "riemannian_shape"])
    def test_closed_form_vs_generic(self, name):
        g = np.random.default_rng(23)
        pen = make_penalty(name)
        for _ in range(10):
            M = random_target(3, g)
            eta = g.uniform(0.1, 2.0)
            auto = solve_subproblem(GaussianSubproblem(M, eta, pen))
            geo = solve_subproblem(GaussianSubproblem(M, eta, pen), method="geodesic")
            assert np.linalg.norm(auto - geo) < 1e-7

    def test_geodesic_needs_smooth(self):
        with pytest.raises(Unsupported):
            solve_subproblem(GaussianSubproblem(np.eye(2), 0.5, make_penalty("logcn")), method="geodesic")

    def test_unknown_method(self):
        with pytest.raises(InvalidInput):
            solve_subproblem(GaussianSubproblem(np.eye(2), 0.5, make_penalty("kl")), method="newton")

    @pytest.mark.parametrize("name", PENALTY_NAMES)
    def test_subproblem_objective_gconvex(self, name):
        pen = make_penalty(name, a=[1.0, 0.3, -0.4]) if name == "elasso" else make_penalty(name)
        M = random_target(3, np.random.default_rng(2))
        rep = check_gconvexity(lambda S: gaussian_objective(S, M, 0.8, pen), 3, trials=100, seed=4)
        assert rep.passed


class TestGenericDescent:
    def test_riemannian_identity(self):
        f, grad = gaussian_subproblem_objective(np.eye(3), 1.0, make_penalty("r"))
        np.testing.assert_allclose(generic_geodesic_descent(f, grad, np.eye(3)), np.eye(3))

    @pytest.mark.parametrize("name,closed", [
        ("kl", lambda M, e: (M + e * np.eye(M.shape[0])) / (1 + e)),
        ("tp", lambda M, e: M + e * np.eye(M.shape[0])),
    ])
    def test_matches_closed_form(self, name, closed, rng):
        M = random_target(4, rng)
        f, grad = gaussian_subproblem_objective(M, 0.7, make_penalty(name))
        S = generic_geodesic_descent(f, grad, 3 * np.eye(4))
        assert np.linalg.norm(S - closed(M, 0.7)) < 1e-8

    def test_no_convergence(self, rng):
        from mscatter.errors import NoConvergence
        M = random_target(3, rng, spread=2.0)
        f, grad = gaussian_subproblem_objective(M, 0.5, make_penalty("r"))
        with pytest.raises(NoConvergence) as info:
            generic_geodesic_descent(f, grad, 50 * np.eye(3), max_iter=2)
        assert info.value.best is not None
