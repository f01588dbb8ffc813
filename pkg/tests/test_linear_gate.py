import math

import numpy as np
import pytest

from influence_gate.core_model import RegressionData, deletion_set
from influence_gate.errors import SingularLeverageError
from influence_gate.linear_gate import (
    LinearPrior,
    bounded_support_M,
    bounded_support_verdict,
    corollary3_dispatch,
    fold_moment_indices,
    leverage_minor,
    moment_index_linear,
    rss_star,
    scan_deletion_subsets,
    theorem31_verdict,
)
from influence_gate.prior_tails import TailClass, ThetaPriorSpec

from conftest import random_regression

NONINF = LinearPrior.noninformative()


def conj(alpha, beta):
    return LinearPrior.conjugate(alpha, beta, ThetaPriorSpec.normal([0.0], [[1.0]]))


# --- oracles -------------------------------------------------------------------


def refit_rss(data: RegressionData, dels) -> float:
    """Independent oracle: least squares on the case-deleted rows."""
    keep = [i for i in range(data.n) if i not in dels.indices]
    X, y = data.design[keep], data.response[keep]
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    return float(r @ r)


def explicit_hat(data: RegressionData) -> np.ndarray:
    X = data.design
    return X @ np.linalg.inv(X.T @ X) @ X.T


def rc_reference(data, dels, prior, tol=1e-12) -> float:
    """Bisection oracle on the raw definition of rss_star."""
    rep = leverage_minor(data, dels)
    lam_max = rep.lambda_max
    r_hi = (1.0 / lam_max if lam_max > 1e-14 else 1e9) - 1e-9
    thr = prior.rss_threshold

    def value(r):
        M = np.eye(dels.cardinality) - r * rep.minor
        return rep.rss - r * rep.deleted_residuals @ np.linalg.solve(M, rep.deleted_residuals)

    if value(r_hi) > thr:
        return 1.0 / lam_max if lam_max > 1e-14 else math.inf
    lo, hi = 0.0, r_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if value(mid) > thr:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --- leverage / rss_star ---------------------------------------------------------


class TestLeverageMinor:
    def test_intercept_only_single_case(self):
        data = RegressionData(design=np.ones((4, 1)), response=[1.0, 2.0, 3.0, 4.0])
        rep = leverage_minor(data, deletion_set([0], 4))
        assert rep.eigenvalues[0] == pytest.approx(0.25, abs=1e-12)

    def test_singleton_matches_hat_diagonal(self):
        rng = np.random.default_rng(11)
        data = random_regression(rng, 10, 3)
        H = explicit_hat(data)
        for i in range(10):
            rep = leverage_minor(data, deletion_set([i], 10))
            assert rep.eigenvalues[0] == pytest.approx(H[i, i], abs=1e-10)

    def test_empty_deletion_rejected(self, derived_linear):
        with pytest.raises(ValueError):
            leverage_minor(derived_linear, deletion_set([], 4))

    def test_theta_tilde_matches_solve(self):
        rng = np.random.default_rng(3)
        data = random_regression(rng, 12, 3)
        dels = deletion_set([2, 7], 12)
        r = 1.7
        rep = leverage_minor(data, dels, r=r)
        X, y = data.design, data.response
        idx = dels.index_array()
        Xi = X[idx]
        G = X.T @ X - r * Xi.T @ Xi
        b = X.T @ y - r * Xi.T @ y[idx]
        assert rep.theta_tilde == pytest.approx(np.linalg.solve(G, b), abs=1e-8)
        assert rep.theta_tilde_r == r

    def test_qr_path_matches_direct(self):
        rng = np.random.default_rng(7)
        data = random_regression(rng, 80, 4)  # above the QR threshold
        H = explicit_hat(data)
        dels = deletion_set([5, 40, 79], 80)
        rep = leverage_minor(data, dels)
        idx = dels.index_array()
        assert rep.minor == pytest.approx(H[np.ix_(idx, idx)], abs=1e-10)


class TestRssStar:
    def test_derived_example_formula(self, derived_linear, delete_last_of_4):
        # rss_star(r) = 5 - 2.25 r / (1 - 0.25 r)
        for r in (0.5, 1.2, 2.0, 3.0):
            expect = 5.0 - 2.25 * r / (1.0 - 0.25 * r)
            assert rss_star(derived_linear, delete_last_of_4, r) == pytest.approx(expect, abs=1e-12)

    def test_refit_identity_at_r1(self, derived_linear, delete_last_of_4):
        val = rss_star(derived_linear, delete_last_of_4, 1.0)
        assert val == pytest.approx(2.0, abs=1e-12)
        assert val == pytest.approx(refit_rss(derived_linear, delete_last_of_4), rel=1e-12)

    def test_zero_deleted_residual_constant(self):
        # case 4 fits exactly: response equals the deleted-point prediction
        data = RegressionData(design=np.ones((4, 1)), response=[1.0, 2.0, 3.0, 2.0])
        dels = deletion_set([3], 4)
        base = rss_star(data, dels, 0.0)
        for r in (0.5, 1.0, 2.0, 3.0):
            assert rss_star(data, dels, r) == pytest.approx(base, abs=1e-12)

    def test_r_zero_is_rss(self, derived_linear, delete_last_of_4):
        assert rss_star(derived_linear, delete_last_of_4, 0.0) == pytest.approx(5.0, abs=1e-12)

    def test_singularity_names_eigenvalue(self, derived_linear, delete_last_of_4):
        with pytest.raises(SingularLeverageError) as exc:
            rss_star(derived_linear, delete_last_of_4, 4.0)
        assert exc.value.eigenvalue == pytest.approx(0.25, abs=1e-9)

    def test_monotone_decreasing_in_r(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            data = random_regression(rng, 12, 3)
            dels = deletion_set(rng.choice(12, size=2, replace=False), 12)
            rep = leverage_minor(data, dels)
            r_hi = 1.0 / rep.lambda_max
            grid = np.linspace(0.01, r_hi * 0.98, 40)
            vals = [rss_star(data, dels, float(r)) for r in grid]
            diffs = np.diff(vals)
            assert np.all(diffs <= 1e-9)
            if np.linalg.norm(rep.deleted_residuals) > 1e-8:
                assert np.all(diffs < 0)


class TestRefitIdentityPropertySuite:
    def test_refit_and_pd_equivalence_random(self):
        """rss_star(1) equals case-deleted least-squares RSS, and the two
        positive-definiteness tests agree, over many random instances."""
        rng = np.random.default_rng(915)
        checked = 0
        while checked < 250:
            n = int(rng.integers(4, 31))
            k = int(rng.integers(1, min(6, n - 1)))
            I = int(rng.integers(1, 4))
            if n - I <= k:
                continue
            data = random_regression(rng, n, k)
            dels = deletion_set(rng.choice(n, size=I, replace=False), n)
            rep = leverage_minor(data, dels)
            if rep.lambda_max > 1.0 - 1e-6:
                continue
            val = rss_star(data, dels, 1.0)
            oracle = refit_rss(data, dels)
            assert val == pytest.approx(oracle, rel=1e-8, abs=1e-10)
            # spectrum-based vs tilted-Gram positive definiteness
            r = float(rng.uniform(1.01, 3.0))
            idx = dels.index_array()
            Xi = data.design[idx]
            G = data.design.T @ data.design - r * Xi.T @ Xi
            lam_G = np.linalg.eigvalsh((G + G.T) / 2.0)
            pd_via_minor = rep.lambda_max < 1.0 / r
            if abs(rep.lambda_max - 1.0 / r) > 1e-9:
                assert pd_via_minor == bool(lam_G[0] > 0)
            checked += 1

    def test_hat_trace_and_eigen_range(self):
        rng = np.random.default_rng(34)
        for _ in range(25):
            n = int(rng.integers(3, 31))
            k = int(rng.integers(1, min(6, n)))
            data = random_regression(rng, n, k)
            H = explicit_hat(data)
            assert np.trace(H) == pytest.approx(k, abs=1e-10)
            I = int(rng.integers(1, min(4, n + 1)))
            dels = deletion_set(rng.choice(n, size=I, replace=False), n)
            lam = leverage_minor(data, dels).eigenvalues
            assert np.all(lam >= -1e-12)
            assert np.all(lam <= 1.0 + 1e-12)


# --- verdicts ---------------------------------------------------------------------


class TestTheorem31Verdict:
    def test_derived_finite_at_1p2(self, derived_linear, delete_last_of_4):
        v = theorem31_verdict(derived_linear, delete_last_of_4, 1.2, NONINF)
        assert v.is_finite

    def test_derived_infinite_at_2(self, derived_linear, delete_last_of_4):
        v = theorem31_verdict(derived_linear, delete_last_of_4, 2.0, NONINF)
        assert v.is_infinite
        assert "rss_star" in v.detail

    def test_leverage_dominates_residual(self):
        rng = np.random.default_rng(8)
        # single high-leverage point: duplicate direction with one far x
        X = np.vstack([rng.standard_normal((9, 2)), [50.0, 0.0]])
        y = X @ [1.0, -1.0] + rng.standard_normal(10)
        data = RegressionData(design=X, response=y)
        dels = deletion_set([9], 10)
        lam = leverage_minor(data, dels).lambda_max
        r = 2.0 / lam  # guarantees lambda > 1/r
        v = theorem31_verdict(data, dels, r, NONINF)
        assert v.is_infinite
        assert "leverage" in v.detail

    def test_sample_size_equality_is_infinite(self):
        # conjugate: n/2 + alpha == r I/2 must land infinite, not boundary;
        # the deleted case carries negligible leverage so the size condition
        # is the one that fires
        data = RegressionData(design=[[1.0], [2.0], [3.0], [0.01]],
                              response=[1.0, 2.0, 3.0, 0.0])
        dels = deletion_set([3], 4)
        prior = conj(1.0, 1e6)
        r = (4 + 2 * 1.0) / 1  # n/2 + alpha = rI/2 exactly
        v = theorem31_verdict(data, dels, r, prior)
        assert v.is_infinite
        assert "sample size" in v.detail

    def test_boundary_at_leverage(self, derived_linear, delete_last_of_4):
        v = theorem31_verdict(derived_linear, delete_last_of_4, 4.0, NONINF)
        assert v.tag.value == "boundary"

    def test_verdict_monotone_in_r(self):
        rng = np.random.default_rng(99)
        for _ in range(8):
            data = random_regression(rng, 12, 2)
            dels = deletion_set(rng.choice(12, size=2, replace=False), 12)
            seen_infinite = False
            for r in np.linspace(1.05, 5.0, 30):
                v = theorem31_verdict(data, dels, float(r), NONINF)
                if seen_infinite and not v.is_infinite:
                    pytest.fail(f"verdict flipped back to {v.tag} at r={r}")
                seen_infinite = seen_infinite or v.is_infinite

    def test_requires_full_support_theta_prior(self, derived_linear, delete_last_of_4):
        box_prior = LinearPrior.conjugate(
            1.0, 1.0, ThetaPriorSpec.bounded_uniform([[-1.0, 1.0]])
        )
        with pytest.raises(ValueError):
            theorem31_verdict(derived_linear, delete_last_of_4, 2.0, box_prior)


class TestMomentIndexLinear:
    def test_derived_cutoffs(self, derived_linear, delete_last_of_4):
        rep = moment_index_linear(derived_linear, delete_last_of_4, NONINF)
        assert rep.r_a == pytest.approx(4.0, abs=1e-10)
        assert rep.r_b == pytest.approx(3.0, abs=1e-12)
        assert rep.r_c == pytest.approx(10.0 / 7.0, abs=1e-9)
        assert rep.r_star == pytest.approx(10.0 / 7.0, abs=1e-9)
        assert rep.binding == "residual"

    def test_bisection_matches_reference(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            data = random_regression(rng, 15, 3)
            dels = deletion_set(rng.choice(15, size=2, replace=False), 15)
            for prior in (NONINF, conj(0.5, 2.0)):
                rep = moment_index_linear(data, dels, prior)
                assert rep.r_c == pytest.approx(rc_reference(data, dels, prior), abs=1e-6)

    def test_zero_leverage_zero_residual(self):
        # deleted case with zero covariate row and exact-zero residual:
        # only the sample-size cut-off binds
        X = np.array([[1.0], [2.0], [3.0], [0.0]])
        y = np.array([1.0, 2.0, 3.0, 0.0])
        data = RegressionData(design=X, response=y)
        dels = deletion_set([3], 4)
        rep = moment_index_linear(data, dels, NONINF)
        assert math.isinf(rep.r_a)
        assert math.isinf(rep.r_c)
        assert rep.r_star == rep.r_b
        assert rep.binding == "sample-size"

    def test_huge_beta_approaches_noninformative(self, derived_linear, delete_last_of_4):
        base = moment_index_linear(derived_linear, delete_last_of_4, NONINF).r_c
        last = None
        for beta in (1e3, 1e6):
            rc = moment_index_linear(
                derived_linear, delete_last_of_4, conj(1e-9, beta)
            ).r_c
            assert rc > base  # threshold -2/beta < 0 always lets r_c exceed the flat case
            if last is not None:
                assert abs(rc - base) < abs(last - base)
            last = rc
        assert last == pytest.approx(base, abs=1e-4)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(44)
        data = random_regression(rng, 12, 3)
        dels = deletion_set([1, 5, 8], 12)
        rep = moment_index_linear(data, dels, NONINF)
        perm = rng.permutation(12)
        data2 = RegressionData(design=data.design[perm], response=data.response[perm])
        mapped = [int(np.where(perm == i)[0][0]) for i in (1, 5, 8)]
        rep2 = moment_index_linear(data2, deletion_set(mapped, 12), NONINF)
        for field in ("r_a", "r_b", "r_c", "r_star"):
            assert getattr(rep, field) == pytest.approx(getattr(rep2, field), abs=1e-12)

    def test_response_scaling_noninformative(self):
        rng = np.random.default_rng(45)
        data = random_regression(rng, 10, 2)
        dels = deletion_set([0, 4], 10)
        rep = moment_index_linear(data, dels, NONINF)
        for c in (0.5, 3.0, 100.0):
            scaled = RegressionData(design=data.design, response=c * data.response)
            rep2 = moment_index_linear(scaled, dels, NONINF)
            assert rep2.r_a == pytest.approx(rep.r_a, rel=1e-10)
            assert rep2.r_b == rep.r_b
            assert rep2.r_c == pytest.approx(rep.r_c, rel=1e-7)

    def test_response_scaling_conjugate_moves_rc_only(self):
        rng = np.random.default_rng(46)
        data = random_regression(rng, 10, 2)
        dels = deletion_set([3], 10)
        prior = conj(1.0, 0.5)
        rep = moment_index_linear(data, dels, prior)
        scaled = RegressionData(design=data.design, response=10.0 * data.response)
        rep2 = moment_index_linear(scaled, dels, prior)
        assert rep2.r_a == pytest.approx(rep.r_a, rel=1e-10)
        assert rep2.r_b == rep.r_b
        assert rep2.r_c != pytest.approx(rep.r_c, rel=1e-6)


class TestCorollaryDispatch:
    def test_thin_sigma_small_leverage_finite(self, derived_linear):
        v = corollary3_dispatch(
            derived_linear, deletion_set([3], 4), 2.0,
            TailClass.thin(), TailClass.thin(), True,
        )
        # leverage 0.25 < 1/2
        assert v.is_finite

    def test_thick_sigma_negative_rss_infinite(self, derived_linear, delete_last_of_4):
        v = corollary3_dispatch(
            derived_linear, delete_last_of_4, 2.0,
            TailClass.in_family(), TailClass.thick(), True,
        )
        assert v.is_infinite

    def test_thin_thin_large_leverage_indeterminate(self):
        # engineered two-case data with h_11 = 3/4 = 1/2 + 1/sum(x^2)
        data = RegressionData(
            design=np.array([[math.sqrt(3.0)], [1.0]]), response=[1.0, 2.0]
        )
        dels = deletion_set([0], 2)
        assert leverage_minor(data, dels).lambda_max == pytest.approx(0.75, abs=1e-12)
        v = corollary3_dispatch(data, dels, 2.0, TailClass.thin(), TailClass.thin(), True)
        assert v.tag.value == "indeterminate"
        assert "thin" in v.detail

    def test_thin_sigma_thick_theta_large_leverage_infinite(self):
        data = RegressionData(
            design=np.array([[math.sqrt(3.0)], [1.0]]), response=[1.0, 2.0]
        )
        v = corollary3_dispatch(
            data, deletion_set([0], 2), 2.0, TailClass.thick(), TailClass.thin(), True
        )
        assert v.is_infinite

    def test_side_condition_gates_finite_only(self, derived_linear, delete_last_of_4):
        finite_path = corollary3_dispatch(
            derived_linear, delete_last_of_4, 1.2,
            TailClass.in_family(), TailClass.thick(), False,
        )
        assert finite_path.tag.value == "indeterminate"
        infinite_path = corollary3_dispatch(
            derived_linear, delete_last_of_4, 2.0,
            TailClass.in_family(), TailClass.thick(), False,
        )
        assert infinite_path.is_infinite


class TestBoundedSupport:
    def _data(self, seed=0, n=8, k=2):
        rng = np.random.default_rng(seed)
        return random_regression(rng, n, k)

    def test_interior_minimum_matches_closed_form(self):
        data = self._data(seed=5)
        dels = deletion_set([1], data.n)
        r = 1.5
        X, y = data.design, data.response
        idx = [1]
        Xi = X[idx]
        G = X.T @ X - r * Xi.T @ Xi
        b = X.T @ y - r * Xi.T @ y[idx]
        assert np.linalg.eigvalsh(G)[0] > 0
        stat = np.linalg.solve(G, b)
        target = float(stat @ G @ stat - 2 * b @ stat)
        box = np.column_stack([stat - 5.0, stat + 5.0])
        M = bounded_support_M(data, dels, r, box)
        assert M == pytest.approx(target, rel=1e-9, abs=1e-9)

    def test_degenerate_box_evaluates_point(self):
        data = self._data(seed=6)
        dels = deletion_set([0], data.n)
        r = 2.0
        theta0 = np.array([0.3, -0.7])
        box = np.column_stack([theta0, theta0])
        X, y = data.design, data.response
        Xi = X[[0]]
        G = X.T @ X - r * Xi.T @ Xi
        b = X.T @ y - r * Xi.T @ y[[0]]
        target = float(theta0 @ G @ theta0 - 2 * b @ theta0)
        assert bounded_support_M(data, dels, r, box) == pytest.approx(target, rel=1e-12)

    def test_indefinite_form_vertex_oracle(self):
        # push r past the leverage cut-off so the form is indefinite, with a
        # box far in the tail: minimum must match 2^k vertex enumeration
        rng = np.random.default_rng(9)
        X = np.vstack([rng.standard_normal((5, 2)), [8.0, 0.2]])
        y = X @ [1.0, -1.0] + rng.standard_normal(6)
        data = RegressionData(design=X, response=y)
        dels = deletion_set([5], 6)
        lam = leverage_minor(data, dels).lambda_max
        r = 1.5 / lam
        Xi = X[[5]]
        G = X.T @ X - r * Xi.T @ Xi
        assert np.linalg.eigvalsh(G)[0] < 0
        b = X.T @ y - r * Xi.T @ y[[5]]
        box = np.array([[30.0, 40.0], [25.0, 35.0]])
        corners = [
            np.array([bx, by]) for bx in box[0] for by in box[1]
        ]
        oracle = min(float(c @ G @ c - 2 * b @ c) for c in corners)
        M = bounded_support_M(data, dels, r, box)
        assert M == pytest.approx(oracle, rel=1e-9)

    def test_k_above_3_rejected(self):
        data = self._data(seed=10, n=12, k=4)
        with pytest.raises(ValueError):
            bounded_support_M(data, deletion_set([0], 12), 2.0, np.zeros((4, 2)))

    def test_verdict_uses_box_threshold(self):
        data = self._data(seed=12)
        dels = deletion_set([2], data.n)
        prior = conj(2.0, 1.0)
        v = bounded_support_verdict(
            data, dels, 1.5, np.array([[-0.5, 0.5], [-0.5, 0.5]]), prior
        )
        assert v.tag.value in ("finite", "infinite", "boundary")


class TestSubsetScan:
    def test_matches_per_subset_reports(self):
        rng = np.random.default_rng(77)
        data = random_regression(rng, 12, 3)
        result = scan_deletion_subsets(data, 2, NONINF)
        assert result.count == math.comb(12, 2)
        pick = rng.choice(result.count, size=12, replace=False)
        for i in pick:
            dels = deletion_set(result.subsets[i], 12)
            rep = moment_index_linear(data, dels, NONINF)
            assert result.r_star[i] == pytest.approx(rep.r_star, rel=1e-6)
            assert result.r_a[i] == pytest.approx(rep.r_a, rel=1e-9)

    def test_fold_indices_match_singletons(self):
        rng = np.random.default_rng(78)
        data = random_regression(rng, 9, 2)
        folds = [[i] for i in range(9)]
        vals = fold_moment_indices(data, folds, NONINF)
        for i in range(9):
            rep = moment_index_linear(data, deletion_set([i], 9), NONINF)
            assert vals[i] == pytest.approx(rep.r_star, abs=1e-10)
