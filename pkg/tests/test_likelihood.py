import math

import numpy as np
import pytest

from pscare import (ComparisonEvent, CovariateSet, IdentifiabilityError,
                    ParamVector, SegmentSpan, project_to_theta, segment_nll,
                    segment_nll_gradient, sigmoid, softplus, win_probability)
from pscare.likelihood import (PairStats, constraint_basis,
                               constraint_residual, design_vector,
                               full_design_matrix, pair_stats)

from conftest import balanced_pairs, make_dataset


def random_cov(n, d, seed=0):
    rng = np.random.default_rng(seed)
    return CovariateSet(n=n, d=d, Z=rng.uniform(-0.5, 0.5, size=(n, d)))


def random_events(n, T, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(T):
        i, j = rng.choice(n, size=2, replace=False) + 1
        out.append((int(i), int(j), int(rng.integers(0, 2))))
    return out


class TestScalarFunctions:
    def test_softplus_matches_naive_in_safe_range(self):
        x = np.linspace(-30, 30, 101)
        assert np.allclose(softplus(x), np.log(1 + np.exp(x)), atol=1e-12)

    def test_softplus_no_overflow(self):
        assert softplus(np.array([800.0]))[0] == 800.0
        assert softplus(np.array([-800.0]))[0] == 0.0

    def test_sigmoid_matches_naive_and_is_stable(self):
        x = np.linspace(-30, 30, 101)
        assert np.allclose(sigmoid(x), 1 / (1 + np.exp(-x)), atol=1e-15)
        assert sigmoid(np.array([800.0]))[0] == 1.0
        assert sigmoid(np.array([-800.0]))[0] == 0.0


class TestDesignVector:
    def test_basis_difference_no_covariates(self):
        cov = CovariateSet.without_covariates(3)
        v = design_vector(ComparisonEvent(t=1, i=1, j=2, y=1), cov)
        assert np.array_equal(v, [1.0, -1.0, 0.0])

    def test_covariate_block(self):
        cov = CovariateSet(n=3, d=1, Z=np.array([[0.4], [-0.1], [0.2]]))
        v = design_vector(ComparisonEvent(t=1, i=1, j=2, y=1), cov)
        assert np.allclose(v, [1.0, -1.0, 0.0, 0.5])

    def test_matches_dense_construction(self, rng):
        cov = random_cov(5, 2, seed=7)
        Zt = full_design_matrix(cov)
        for _ in range(20):
            i, j = rng.choice(5, size=2, replace=False) + 1
            v = design_vector(ComparisonEvent(t=1, i=int(i), j=int(j), y=1), cov)
            assert np.allclose(v, Zt[i - 1] - Zt[j - 1], atol=1e-15)

    def test_sparse_structure(self, rng):
        cov = random_cov(8, 3, seed=1)
        v = design_vector(ComparisonEvent(t=1, i=3, j=6, y=0), cov)
        head = v[:8]
        assert np.count_nonzero(head) == 2
        assert head.sum() == 0.0


class TestProjection:
    def test_fixed_point(self):
        cov = random_cov(6, 2, seed=2)
        p = project_to_theta(np.concatenate([np.zeros(6), [1.0, -1.0]]), cov)
        q = project_to_theta(p.xi, cov)
        assert np.allclose(p.xi, q.xi, atol=1e-12)

    def test_annihilates_column_space(self):
        cov = random_cov(6, 2, seed=3)
        W = np.column_stack([np.ones(6), cov.Z])
        alpha = W @ np.array([0.7, -1.2, 0.3])
        p = project_to_theta(np.concatenate([alpha, np.zeros(2)]), cov)
        assert np.allclose(p.alpha, 0.0, atol=1e-12)

    def test_matches_regression_residual_oracle(self, rng):
        cov = random_cov(6, 2, seed=4)
        alpha = rng.normal(size=6)
        beta = rng.normal(size=2)
        p = project_to_theta(np.concatenate([alpha, beta]), cov)
        W = np.column_stack([np.ones(6), cov.Z])
        fit, *_ = np.linalg.lstsq(W, alpha, rcond=None)
        assert np.allclose(p.alpha, alpha - W @ fit, atol=1e-12)
        assert np.array_equal(p.beta, beta)

    def test_result_satisfies_constraint(self, rng):
        cov = random_cov(7, 3, seed=5)
        p = project_to_theta(rng.normal(size=10), cov)
        assert constraint_residual(p, cov) <= 1e-8

    def test_rank_deficient_w_is_reported(self):
        # constant covariate column duplicates the intercept
        cov = CovariateSet(n=5, d=1, Z=np.ones((5, 1)))
        with pytest.raises(IdentifiabilityError, match="c1"):
            constraint_basis(cov)


class TestWinProbability:
    def test_symmetric_at_zero(self):
        cov = CovariateSet.without_covariates(4)
        p = ParamVector(alpha=np.zeros(4), beta=[])
        assert win_probability(p, ComparisonEvent(1, 1, 2, 1), cov) == 0.5

    def test_log3_gap_gives_three_quarters(self):
        cov = CovariateSet.without_covariates(2)
        p = project_to_theta(np.array([math.log(3) / 2, -math.log(3) / 2]), cov)
        assert abs(win_probability(p, ComparisonEvent(1, 1, 2, 1), cov) - 0.75) < 1e-12

    def test_complement_identity(self, rng):
        cov = random_cov(5, 2, seed=6)
        p = project_to_theta(rng.normal(size=7), cov)
        for _ in range(10):
            i, j = rng.choice(5, size=2, replace=False) + 1
            pij = win_probability(p, ComparisonEvent(1, int(i), int(j), 1), cov)
            pji = win_probability(p, ComparisonEvent(1, int(j), int(i), 1), cov)
            assert abs(pij + pji - 1.0) <= 1e-15

    def test_matches_two_exponential_oracle(self, rng):
        cov = random_cov(5, 2, seed=8)
        p = project_to_theta(rng.normal(size=7), cov)
        theta = p.scores(cov)
        for _ in range(10):
            i, j = rng.choice(5, size=2, replace=False) + 1
            got = win_probability(p, ComparisonEvent(1, int(i), int(j), 1), cov)
            want = math.exp(theta[i - 1]) / (math.exp(theta[i - 1]) + math.exp(theta[j - 1]))
            assert abs(got - want) <= 1e-12


class TestSegmentNll:
    def test_zero_params_give_log2_per_event(self):
        data = make_dataset(4, random_events(4, 12, seed=1))
        p = ParamVector(alpha=np.zeros(4), beta=[])
        nll = segment_nll(p, data, SegmentSpan(1, 12))
        assert abs(nll - 12 * math.log(2)) < 1e-12

    def test_single_event_analytic(self):
        cov = CovariateSet.without_covariates(2)
        data = make_dataset(2, [(1, 2, 1)])
        p = project_to_theta(np.array([math.log(3) / 2, -math.log(3) / 2]), cov)
        assert abs(segment_nll(p, data, SegmentSpan(1, 1)) + math.log(0.75)) < 1e-12

    def test_matches_per_event_oracle(self, rng):
        data = make_dataset(5, random_events(5, 20, seed=2), d=2)
        p = project_to_theta(rng.normal(size=7), data.covariates)
        want = 0.0
        for e in data.events():
            prob = win_probability(p, e, data.covariates)
            want -= math.log(prob if e.y == 1 else 1 - prob)
        got = segment_nll(p, data, SegmentSpan(1, 20))
        assert abs(got - want) < 1e-10

    def test_additive_over_adjacent_spans(self, rng):
        data = make_dataset(5, random_events(5, 30, seed=3), d=2)
        p = project_to_theta(rng.normal(size=7), data.covariates)
        whole = segment_nll(p, data, SegmentSpan(1, 30))
        parts = (segment_nll(p, data, SegmentSpan(1, 13))
                 + segment_nll(p, data, SegmentSpan(14, 30)))
        assert abs(whole - parts) < 1e-10

    def test_invariant_under_scalar_alpha_shift(self, rng):
        data = make_dataset(5, random_events(5, 25, seed=4))
        raw = rng.normal(size=5)
        a = ParamVector(alpha=raw, beta=[])
        b = ParamVector(alpha=raw + 3.7, beta=[])
        span = SegmentSpan(1, 25)
        assert abs(segment_nll(a, data, span) - segment_nll(b, data, span)) < 1e-10

    def test_rejects_bad_span(self):
        data = make_dataset(3, random_events(3, 5, seed=5))
        p = ParamVector(alpha=np.zeros(3), beta=[])
        with pytest.raises(Exception):
            segment_nll(p, data, SegmentSpan(1, 6))


class TestGradient:
    def test_zero_on_balanced_data(self):
        data = make_dataset(4, balanced_pairs(4, 2))
        p = ParamVector(alpha=np.zeros(4), beta=[])
        g = segment_nll_gradient(p, data, SegmentSpan(1, data.T))
        assert np.allclose(g, 0.0, atol=1e-14)

    def test_single_event_half_design(self):
        data = make_dataset(3, [(1, 3, 1)])
        p = ParamVector(alpha=np.zeros(3), beta=[])
        g = segment_nll_gradient(p, data, SegmentSpan(1, 1))
        v = design_vector(data.event(1), data.covariates)
        assert np.allclose(g, -0.5 * v, atol=1e-15)

    @pytest.mark.parametrize("n,d", [(5, 0), (8, 3), (20, 5)])
    def test_matches_central_finite_differences(self, n, d, rng):
        data = make_dataset(n, random_events(n, 60, seed=n + d), d=d)
        span = SegmentSpan(5, 55)
        for rep in range(10):
            p = project_to_theta(0.5 * rng.normal(size=n + d), data.covariates)
            g = segment_nll_gradient(p, data, span)
            h = 1e-5
            fd = np.empty(n + d)
            for k in range(n + d):
                e = np.zeros(n + d)
                e[k] = h
                fp = segment_nll(ParamVector.from_xi(p.xi + e, n), data, span)
                fm = segment_nll(ParamVector.from_xi(p.xi - e, n), data, span)
                fd[k] = (fp - fm) / (2 * h)
            scale = np.maximum(np.abs(fd), 1.0)
            assert np.max(np.abs(g - fd) / scale) <= 1e-6


class TestPairStats:
    def test_counts_match_direct_enumeration(self, rng):
        data = make_dataset(5, random_events(5, 40, seed=9))
        st = pair_stats(data)
        assert isinstance(st, PairStats)
        span = SegmentSpan(8, 31)
        m, w = st.span_counts(span)
        for q, (a, b) in enumerate(st.pairs):
            mm = ww = 0
            for e in data.events():
                if not span.start <= e.t <= span.end:
                    continue
                lo, hi = min(e.i, e.j) - 1, max(e.i, e.j) - 1
                if (lo, hi) == (a, b):
                    mm += 1
                    ww += e.y if e.i - 1 == a else 1 - e.y
            assert m[q] == mm and w[q] == ww

    def test_cached_per_dataset(self):
        data = make_dataset(4, random_events(4, 10, seed=10))
        assert pair_stats(data) is pair_stats(data)
