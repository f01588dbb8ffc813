import math

import numpy as np
import pytest
from scipy.integrate import quad

from influence_gate.core_model import LogitData, deletion_set
from influence_gate.errors import BudgetError
from influence_gate.logit_gate import (
    classify_logit_prior,
    corollary5_dispatch,
    h_eval,
    max_h_l1_sphere,
    moment_index_logit,
    propriety_certificate,
    theorem51_verdict,
)
from influence_gate.prior_tails import TailClass, ThetaPriorSpec


@pytest.fixture(scope="module")
def two_point():
    return LogitData(design=[[1.0], [1.0]], outcome=[1, 0])


@pytest.fixture(scope="module")
def delete_first():
    return deletion_set([0], 2)


def weight_moment_integrand(beta, r, epsilon):
    """Oracle for the two-point example: w^r * likelihood * prior along the
    1-d parameter axis (unnormalized)."""
    z = beta  # x = 1 for both cases
    log_w = math.log1p(math.exp(z)) - z if z < 30 else math.log1p(math.exp(-z))
    # likelihood of both cases: y = (1, 0)
    loglik = (z - math.log1p(math.exp(z))) + (-math.log1p(math.exp(z)))
    return math.exp(r * log_w + loglik - epsilon * abs(beta))


def truncated_moment(r, epsilon, T):
    val, _ = quad(weight_moment_integrand, -T, T, args=(r, epsilon), limit=200)
    return val


class TestHEval:
    def test_single_term_arithmetic(self):
        data = LogitData(design=[[1.0]], outcome=[1])
        dels = deletion_set([], 1)
        assert h_eval(data, dels, [1.0], 2.0, 1.0) == pytest.approx(-1.0, abs=1e-14)

    def test_two_point_hand_value(self, two_point, delete_first):
        assert h_eval(two_point, delete_first, [-1.0], 2.0, 0.5) == pytest.approx(0.5, abs=1e-14)

    def test_positive_homogeneity(self, two_point, delete_first):
        h1 = h_eval(two_point, delete_first, [-1.0], 2.0, 0.5)
        assert h_eval(two_point, delete_first, [-2.0], 2.0, 0.5) == pytest.approx(2 * h1, abs=1e-12)

    def test_homogeneity_random(self):
        rng = np.random.default_rng(12)
        data = LogitData(design=rng.standard_normal((8, 3)), outcome=rng.integers(0, 2, 8))
        dels = deletion_set([1, 4], 8)
        for _ in range(20):
            beta = rng.standard_normal(3)
            h1 = h_eval(data, dels, beta, 2.5, 0.3)
            for c in (0.5, 2.0, 10.0):
                assert h_eval(data, dels, c * beta, 2.5, 0.3) == pytest.approx(
                    c * h1, abs=1e-10 * max(1.0, abs(c * h1))
                )

    def test_affine_in_r(self):
        rng = np.random.default_rng(13)
        data = LogitData(design=rng.standard_normal((6, 2)), outcome=rng.integers(0, 2, 6))
        dels = deletion_set([0, 3], 6)
        for _ in range(10):
            beta = rng.standard_normal(2)
            v = [h_eval(data, dels, beta, r, 0.2) for r in (1.5, 2.0, 3.0)]
            # collinear: value at 2.0 interpolates 1.5 and 3.0
            interp = v[0] + (v[2] - v[0]) * (2.0 - 1.5) / (3.0 - 1.5)
            assert v[1] == pytest.approx(interp, abs=1e-12 * max(1.0, abs(v[1])))


class TestMaxH:
    def test_two_point_exhaustive(self, two_point, delete_first):
        crit = max_h_l1_sphere(two_point, delete_first, 2.0, 0.5)
        assert crit.max_value == pytest.approx(0.5, abs=1e-14)
        assert crit.argmax == pytest.approx([-1.0])

    def test_argmax_satisfies_l1_constraint(self):
        rng = np.random.default_rng(14)
        data = LogitData(design=rng.standard_normal((12, 3)), outcome=rng.integers(0, 2, 12))
        crit = max_h_l1_sphere(data, deletion_set([2, 5], 12), 2.0, 0.4)
        assert np.abs(crit.argmax).sum() == pytest.approx(1.0, abs=1e-12)
        assert h_eval(data, deletion_set([2, 5], 12), crit.argmax, 2.0, 0.4) == pytest.approx(
            crit.max_value, abs=1e-10
        )

    def test_vertex_max_dominates_random_directions(self):
        rng = np.random.default_rng(15)
        data = LogitData(design=rng.standard_normal((10, 3)), outcome=rng.integers(0, 2, 10))
        dels = deletion_set([0, 7], 10)
        crit = max_h_l1_sphere(data, dels, 2.0, 0.1)
        raw = rng.standard_normal((100_000, 3))
        dirs = raw / np.abs(raw).sum(axis=1, keepdims=True)
        X, y = data.design, data.outcome
        mask = dels.mask()
        Z = dirs @ X.T
        contrib = Z * y[None, :] - np.maximum(Z, 0.0)
        h0 = contrib[:, ~mask].sum(axis=1) - 0.1 * np.abs(dirs).sum(axis=1)
        slope = (-contrib[:, mask]).sum(axis=1)
        sample_max = float(np.max(h0 + slope))
        assert sample_max <= crit.max_value + 1e-9

    def test_separable_no_deletion_negative_max(self):
        # perfectly separated at x = 0: every likelihood factor can be made
        # exact along +beta, so the maximum is exactly -epsilon
        data = LogitData(
            design=[[-2.0], [-1.0], [1.0], [2.0]], outcome=[0, 0, 1, 1]
        )
        dels = deletion_set([], 4)
        eps = 0.7
        crit = max_h_l1_sphere(data, dels, 2.0, eps)
        assert crit.max_value == pytest.approx(-eps, abs=1e-12)
        assert theorem51_verdict(data, dels, 16.0, eps).is_finite

    def test_separable_all_ones_zero_boundary(self):
        data = LogitData(design=[[1.0], [2.0]], outcome=[1, 1])
        dels = deletion_set([], 2)
        crit = max_h_l1_sphere(data, dels, 2.0, 0.0)
        assert crit.max_value == pytest.approx(0.0, abs=1e-14)

    def test_budget_error_and_multistart(self):
        rng = np.random.default_rng(16)
        data = LogitData(design=rng.standard_normal((250, 2)), outcome=rng.integers(0, 2, 250))
        with pytest.raises(BudgetError):
            max_h_l1_sphere(data, deletion_set([0], 250), 2.0, 0.1)
        big = LogitData(design=rng.standard_normal((150, 6)), outcome=rng.integers(0, 2, 150))
        with pytest.raises(BudgetError, match="multistart"):
            max_h_l1_sphere(big, deletion_set([0], 150), 2.0, 0.1)
        approx = max_h_l1_sphere(big, deletion_set([0], 150), 2.0, 0.1, multistart=2000)
        assert approx.approximate


class TestTheorem51Verdict:
    def test_two_point_infinite_then_finite(self, two_point, delete_first):
        assert theorem51_verdict(two_point, delete_first, 2.0, 0.5).is_infinite
        assert theorem51_verdict(two_point, delete_first, 2.0, 2.0).is_finite

    def test_quadrature_oracle_confirms(self, two_point, delete_first):
        # infinite at eps=0.5: truncated moment integral blows up with T
        small = truncated_moment(2.0, 0.5, 20.0)
        large = truncated_moment(2.0, 0.5, 40.0)
        assert large > small * math.exp(0.4 * 20.0) * 0.1
        # finite at eps=2: integral stabilizes
        small2 = truncated_moment(2.0, 2.0, 20.0)
        large2 = truncated_moment(2.0, 2.0, 40.0)
        assert abs(large2 - small2) < 1e-8 * max(small2, 1.0)

    def test_empty_deletion_short_circuits(self, two_point):
        v = theorem51_verdict(two_point, deletion_set([], 2), 64.0, 0.0)
        assert v.is_finite

    def test_monotone_in_r_and_epsilon(self):
        rng = np.random.default_rng(18)
        data = LogitData(design=rng.standard_normal((9, 2)), outcome=rng.integers(0, 2, 9))
        dels = deletion_set([4], 9)
        seen_infinite = False
        for r in (1.5, 2.0, 3.0, 5.0, 9.0, 17.0):
            v = theorem51_verdict(data, dels, r, 0.25)
            if seen_infinite and v.is_finite:
                pytest.fail(f"flip at r={r}")
            seen_infinite = seen_infinite or v.is_infinite
        seen_finite = False
        for eps in (0.0, 0.1, 0.5, 1.0, 4.0, 16.0):
            v = theorem51_verdict(data, dels, 2.0, eps)
            if seen_finite and v.is_infinite:
                pytest.fail(f"flip at eps={eps}")
            seen_finite = seen_finite or v.is_finite

    def test_log_weight_nonnegative(self):
        from influence_gate.is_engine import log_weight

        rng = np.random.default_rng(19)
        data = LogitData(design=rng.standard_normal((7, 3)), outcome=rng.integers(0, 2, 7))
        dels = deletion_set([1, 6], 7)
        draws = rng.standard_normal((500, 3)) * 10.0
        lw = log_weight("logit", draws, data, dels)
        assert np.all(lw >= -1e-12)


class TestCorollary5:
    def test_normal_prior_finite_even_full_deletion(self):
        rng = np.random.default_rng(20)
        data = LogitData(design=rng.standard_normal((6, 2)), outcome=rng.integers(0, 2, 6))
        tail = classify_logit_prior(ThetaPriorSpec.normal([0.0, 0.0], np.eye(2)))
        assert tail.is_thin
        for dels in (deletion_set([0], 6), deletion_set(range(6), 6)):
            for r in (2.0, 16.0):
                assert corollary5_dispatch(data, dels, r, tail).is_finite

    def test_t_prior_dispatches_to_zero_epsilon(self, two_point, delete_first):
        tail = classify_logit_prior(ThetaPriorSpec.student_t(4, [0.0], [[1.0]]))
        assert tail.is_thick
        v = corollary5_dispatch(two_point, delete_first, 2.0, tail)
        assert v == theorem51_verdict(two_point, delete_first, 2.0, 0.0)

    def test_laplace_prior_in_family_uses_scale(self, two_point, delete_first):
        tail = classify_logit_prior(ThetaPriorSpec.laplace([0.0], 2.0))
        assert tail.kind == "in_family"
        assert tail.params["epsilon"] == pytest.approx(0.5)
        v = corollary5_dispatch(two_point, delete_first, 2.0, tail)
        assert v == theorem51_verdict(two_point, delete_first, 2.0, 0.5)

    def test_improper_uniform_via_thick(self, two_point, delete_first):
        v = corollary5_dispatch(two_point, delete_first, 2.0, TailClass.thick())
        assert v == theorem51_verdict(two_point, delete_first, 2.0, 0.0)


class TestMomentIndexLogit:
    def test_two_point_exact_root(self, two_point, delete_first):
        rep = moment_index_logit(two_point, delete_first, 0.5)
        assert rep.r_star == pytest.approx(1.5, abs=1e-12)
        assert math.isinf(rep.r_a) and math.isinf(rep.r_b)
        assert rep.r_c == rep.r_star

    def test_matches_bisection_oracle(self):
        rng = np.random.default_rng(23)
        data = LogitData(design=rng.standard_normal((8, 2)), outcome=rng.integers(0, 2, 8))
        dels = deletion_set([3], 8)
        eps = 0.3
        rep = moment_index_logit(data, dels, eps)
        lo, hi = 1.0 + 1e-9, 64.0
        if theorem51_verdict(data, dels, hi, eps).is_finite:
            assert math.isinf(rep.r_star)
            return
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if theorem51_verdict(data, dels, mid, eps).is_finite:
                lo = mid
            else:
                hi = mid
        assert rep.r_star == pytest.approx(0.5 * (lo + hi), abs=1e-6)

    def test_cap_convention(self, two_point, delete_first):
        rep = moment_index_logit(two_point, delete_first, 1e6)
        assert math.isinf(rep.r_star)
        assert "cap" in rep.binding

    def test_empty_deletion_infinite(self, two_point):
        rep = moment_index_logit(two_point, deletion_set([], 2), 0.5)
        assert math.isinf(rep.r_star)


class TestProprietyCertificate:
    def test_non_separable_flat_prior_true(self):
        data = LogitData(design=[[1.0], [1.0], [1.0]], outcome=[1, 0, 1])
        assert propriety_certificate(data, 0.0)

    def test_separable_flat_prior_no_conclusion(self):
        data = LogitData(design=[[-1.0], [1.0]], outcome=[0, 1])
        assert not propriety_certificate(data, 0.0)

    def test_quadrature_backs_both(self):
        # non-separable 1-d: posterior normalizer finite by quadrature
        def norm_const(ys, T=60.0):
            def f(b):
                out = 0.0
                for y in ys:
                    out += y * b - math.log1p(math.exp(b)) if b < 30 else y * b - b
                return math.exp(out)
            val, _ = quad(f, -T, T, limit=300)
            return val

        assert norm_const([1, 0, 1], T=40) == pytest.approx(norm_const([1, 0, 1], T=80), rel=1e-6)
        # separable 1-d: normalizer grows without bound
        assert norm_const([1, 1], T=80) > norm_const([1, 1], T=40) + 30.0

    def test_positive_epsilon_bounded_data_true(self):
        data = LogitData(design=[[-1.0], [1.0]], outcome=[0, 1])
        assert propriety_certificate(data, 0.5)
