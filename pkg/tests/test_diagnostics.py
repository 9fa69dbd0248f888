import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mscatter.diagnostics import (DISCLAIMER, check_gconvexity,
                                  directional_optimality, existence_check,
                                  gcoercivity_probe)
from mscatter.errors import BudgetExceeded
from mscatter.losses import gaussian_objective, make_loss, penalized_loss, sample_cov
from mscatter.penalties import (GaussianSubproblem, make_penalty,
                                penalty_value, solve_subproblem)
from mscatter.spd import logdet
from oracles import existence_oracle

PENALTIES = [make_penalty(n) for n in ("kl", "symkl", "tp", "r", "rs", "logcn")] + \
    [make_penalty("elasso", a=[1.0, 0.0, -0.5])]


class TestGConvexity:
    def test_logdet_both_signs(self):
        for sign in (1.0, -1.0):
            rep = check_gconvexity(lambda S: sign * logdet(S), 3, trials=100, seed=1)
            assert abs(rep.max_violation) <= 1e-9
            assert rep.passed

    def test_negative_trace_fails(self):
        rep = check_gconvexity(lambda S: -np.trace(S), 3, trials=50, seed=2)
        assert not rep.passed
        assert rep.max_violation > 1e-3
        S0, S1, t = rep.worst_case
        assert 0 < t < 1 and S0.shape == S1.shape == (3, 3)

    @pytest.mark.parametrize("pen", PENALTIES, ids=lambda q: q.name)
    def test_penalties(self, pen):
        assert check_gconvexity(lambda S: penalty_value(pen, S), 3, trials=150, seed=3).passed

    def test_disclaimer(self):
        assert check_gconvexity(logdet, 2, trials=2).disclaimer == DISCLAIMER


class TestExistence:
    def test_tyler_general_position(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        rep = existence_check(X, make_loss("tyler", p=2))
        assert rep.holds and rep.witness is None

    def test_tyler_collinear(self):
        X = np.array([[1.0, 1.0], [-2.0, -2.0], [1.0, 0.0]])
        rep = existence_check(X, make_loss("tyler", p=2))
        assert not rep.holds
        w = rep.witness[:, 0]
        assert abs(abs(w @ np.array([1.0, 1.0])) / np.sqrt(2) - 1) < 1e-12
        assert rep.mass == pytest.approx(2 / 3) and rep.bound == pytest.approx(0.5)

    def test_gaussian_general_position(self, rng):
        assert existence_check(rng.standard_normal((5, 3)), make_loss("gaussian")).holds

    def test_gaussian_degenerate(self):
        X = np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
        assert not existence_check(X, make_loss("gaussian")).holds

    def test_student_zero_rows_count(self):
        # zero-subspace bound for t3 in 2-D is 1 - 2/5 = 0.6
        L = make_loss("student_t", p=2, nu=3)
        X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        assert existence_check(X, L).holds
        rep = existence_check(np.vstack([X, [[0.0, 0.0]]]), L)
        assert not rep.holds and rep.witness.shape == (2, 0)
        assert rep.mass == pytest.approx(0.6)

    def test_budget(self, rng):
        X = rng.standard_normal((60, 5))
        with pytest.raises(BudgetExceeded) as err:
            existence_check(X, make_loss("tyler", p=5), budget=1000)
        assert err.value.fallback.heuristic and err.value.fallback.holds
        rep = existence_check(X, make_loss("tyler", p=5), budget=1000, allow_heuristic=True, mc_draws=500)
        assert rep.heuristic and rep.holds

    @settings(max_examples=60, deadline=None)
    @given(data=st.lists(st.lists(st.integers(-2, 2), min_size=3, max_size=3), min_size=1, max_size=6),
           fam=st.sampled_from(["tyler", "t3", "gaussian"]))
    def test_matches_oracle(self, data, fam):
        X = np.array(data, float)
        if fam == "tyler" and not np.any(X):
            return
        L = {"tyler": make_loss("tyler", p=3), "t3": make_loss("student_t", p=3, nu=3),
             "gaussian": make_loss("gaussian")}[fam]
        assert existence_check(X, L).holds == existence_oracle(X, L.sill, fam == "tyler")


class TestCoercivity:
    def test_riemannian(self):
        pen = make_penalty("r")
        rep = gcoercivity_probe(lambda S: penalty_value(pen, S), 3, rays=20, seed=4)
        assert rep.min_growth > 0

    def test_shape_penalty_flat_on_scale_ray(self):
        pen = make_penalty("logcn")
        rep = gcoercivity_probe(lambda S: penalty_value(pen, S), 3, rays=5, seed=5)
        assert rep.min_growth == pytest.approx(0.0, abs=1e-9)
        assert rep.growths[0] == pytest.approx(0.0, abs=1e-9)

    def test_student_riemannian_no_data(self):
        L = make_loss("student_t", p=3, nu=3)
        pen = make_penalty("r")
        rep = gcoercivity_probe(lambda S: penalized_loss(L, np.zeros((0, 3)), S, pen, 0.5), 3, seed=6)
        assert rep.min_growth > 0

    def test_unpenalized_logdet_not_coercive(self):
        rep = gcoercivity_probe(logdet, 2, rays=3)
        assert rep.min_growth < 0

    def test_overflow_is_infinite(self):
        rep = gcoercivity_probe(lambda S: np.exp(np.exp(np.trace(S))), 2, rays=2)
        assert np.inf in rep.growths

    def test_shape_functional_along_vanishing_eigenvalue(self):
        pen = make_penalty("rs")
        vals = [logdet(np.diag([1.0, g])) + 0.5 * penalty_value(pen, np.diag([1.0, g]))
                for g in (1e-2, 1e-4, 1e-6)]
        assert vals[0] < vals[1] < vals[2]


class TestDirectional:
    def test_smooth_optimum(self, rng):
        X = rng.standard_normal((30, 3))
        Sn = sample_cov(X)
        pen = make_penalty("tp")
        rep = directional_optimality(lambda S: gaussian_objective(S, Sn, 0.5, pen), Sn + 0.5 * np.eye(3))
        assert rep.min_derivative >= -1e-8

    @pytest.mark.parametrize("d", [[3.0, 2.0, 1.0], [1.0, 1.5, 4.0]])
    def test_elasso_pava_optimum(self, d):
        Q, _ = np.linalg.qr(np.random.default_rng(8).standard_normal((3, 3)))
        M = (Q * d) @ Q.T
        pen = make_penalty("elasso", a=[1.0, 0.2, -0.8])
        S = solve_subproblem(GaussianSubproblem(M, 0.7, pen))
        rep = directional_optimality(lambda T: gaussian_objective(T, M, 0.7, pen), S)
        assert rep.min_derivative >= -1e-6

    def test_perturbed_point(self, rng):
        X = rng.standard_normal((30, 3))
        Sn = sample_cov(X)
        pen = make_penalty("tp")
        rep = directional_optimality(lambda S: gaussian_objective(S, Sn, 0.5, pen),
                                     1.5 * (Sn + 0.5 * np.eye(3)))
        assert rep.min_derivative < -1e-3
