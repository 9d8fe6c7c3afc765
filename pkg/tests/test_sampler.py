import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from graphshrink import (
    Dataset,
    Hyperparams,
    Schedule,
    build_state,
    run_chain,
    run_chains,
    sample_forest_prior,
    step_partition,
    validate_state,
)
from graphshrink.linalg import collapsed_loglik
from graphshrink.partition import SpanningForest
from graphshrink.sampler import (
    _slice_eta,
    _split_log_ratios,
    available_move_probs,
    likelihood_ratio,
    propose_merge,
    propose_split,
    update_beta_tilde,
    update_lambda,
    update_sigma2,
    update_tau,
)

from conftest import grid_graph

seeds = st.integers(0, 2**32 - 1)


def regression_state(rng, g, n=8, frac=0.4, tau=0.9):
    X = rng.standard_normal((n, g.p))
    data = Dataset.from_arrays(X, rng.standard_normal(n))
    f = sample_forest_prior(g, rng)
    f = f.with_cuts(rng.random(len(f.cut_flags)) < frac)
    K = f.n_cut + g.n_c
    lam = np.exp(rng.uniform(-1, 1, size=K))
    return data, build_state(data, f, tau=tau, lam=lam, sigma2=1.3, beta_tilde=rng.standard_normal(K))


def dense_loglik(state, data):
    Xt = data.reduced_design(state.projection)
    return collapsed_loglik(data.y, Xt, state.tau, state.lam)[0]


class TestProposals:
    @given(seeds)
    def test_split_then_merge(self, seed):
        rng = np.random.default_rng(seed)
        g = grid_graph(3, 3)
        data, s = regression_state(rng, g)
        uncut = np.flatnonzero(~s.forest.cut_flags)
        if not len(uncut):
            return
        e = int(rng.choice(uncut))
        t = propose_split(s, data, e, 0.7)
        validate_state(t, data, g)
        assert t.K == s.K + 1
        assert 0.7 in t.lam.tolist()
        back = propose_merge(t, data, e)
        validate_state(back, data, g)
        assert back.partition == s.partition
        # the merged cluster recovers the parent's scale
        assert sorted(back.lam.tolist()) == pytest.approx(sorted(s.lam.tolist()))

    @given(seeds)
    def test_likelihood_ratio_matches_dense(self, seed):
        rng = np.random.default_rng(seed)
        g = grid_graph(3, 3)
        data, s = regression_state(rng, g)
        uncut = np.flatnonzero(~s.forest.cut_flags)
        if not len(uncut):
            return
        t = propose_split(s, data, int(rng.choice(uncut)), 1.5)
        ratio = math.exp(likelihood_ratio(s, t, data.n))
        dense = math.exp(dense_loglik(t, data) - dense_loglik(s, data))
        assert math.isclose(ratio, dense, rel_tol=1e-8)
        assert likelihood_ratio(s, s, data.n) == 0.0
        assert likelihood_ratio(t, s, data.n) == -likelihood_ratio(s, t, data.n)

    def test_incremental_path_for_large_K(self):
        # more than 16 clusters exercises delete/append instead of a dense refactor
        rng = np.random.default_rng(5)
        g = grid_graph(5, 5)
        data, s = regression_state(rng, g, n=30, frac=0.9)
        assert s.K > 16
        for _ in range(20):
            cuts = np.flatnonzero(s.forest.cut_flags)
            s = propose_merge(s, data, int(rng.choice(cuts)))
            uncut = np.flatnonzero(~s.forest.cut_flags)
            s = propose_split(s, data, int(rng.choice(uncut)), float(rng.uniform(0.5, 2)))
            validate_state(s, data, g)

    def test_merge_keeps_scale_of_smaller_vertex(self):
        data = Dataset.normal_means([1.0, 2.0, 3.0])
        f = SpanningForest(np.array([[0, 1], [1, 2]]), np.array([False, True]), 3)
        s = build_state(data, f, tau=1.0, lam=np.array([0.3, 4.0]))
        assert propose_merge(s, data, 1).lam.tolist() == [0.3]

    def test_invalid_edges(self, rng):
        g = grid_graph(2, 2)
        data, s = regression_state(rng, g, frac=0.0)
        with pytest.raises(ValueError):
            propose_merge(s, data, 0)


class TestMoveBookkeeping:
    def test_available_move_probs_boundaries(self):
        probs = (0.3, 0.3, 0.35, 0.05)
        np.testing.assert_allclose(available_move_probs(1, 5, 1, probs), [6 / 7, 0, 0, 1 / 7])
        np.testing.assert_allclose(available_move_probs(5, 5, 1, probs), [0, 0.3 / 0.7, 0.35 / 0.7, 0.05 / 0.7])
        np.testing.assert_allclose(available_move_probs(3, 5, 1, probs), probs)

    def test_split_ratios_hand_computed(self):
        h = Hyperparams(c=0.5, move_probs=(0.3, 0.3, 0.35, 0.05))
        log_A, log_P = _split_log_ratios(1, 5, 1, h)
        assert math.isclose(log_A, math.log(0.5 / 4))
        # at K=1 split has prob 6/7 over 4 edges; at K=2 merge has 0.3 over 1 cut
        assert math.isclose(log_P, math.log(0.3) - math.log((6 / 7) / 4))
        log_A, log_P = _split_log_ratios(2, 5, 1, h)
        assert math.isclose(log_A, math.log(0.5) + math.log(4) - math.log(6))
        assert math.isclose(log_P, math.log(0.3 / 2) - math.log(0.3 / 3))

    @given(st.integers(1, 9), st.floats(0.0, 0.9))
    def test_split_merge_sum_to_zero(self, K, c):
        h = Hyperparams(c=c)
        p, n_c = 10, 1
        split_A, split_P = _split_log_ratios(K, p, n_c, h)
        # the reverse merge from K + 1, computed from scratch
        N = p - n_c
        here = available_move_probs(K + 1, p, n_c, h.move_probs)
        there = available_move_probs(K, p, n_c, h.move_probs)
        merge_A = -math.log1p(-c) + math.log(math.comb(N, K + 1 - n_c)) - math.log(math.comb(N, K - n_c))
        merge_P = math.log(there[0] / (p - K)) - math.log(here[1] / (K + 1 - n_c))
        assert math.isclose(split_A + merge_A, 0.0, abs_tol=1e-12)
        assert math.isclose(split_P + merge_P, 0.0, abs_tol=1e-12)

    def test_boundary_moves_only_split_or_hyper(self, rng):
        g = grid_graph(2, 3)
        data, s = regression_state(rng, g, frac=0.0)
        h = Hyperparams()
        kinds = {step_partition(s, data, g, h, rng)[1].move_kind for _ in range(300)}
        assert kinds == {"split", "hyper"}

    def test_full_partition_never_splits(self, rng):
        g = grid_graph(2, 2)
        data, s = regression_state(rng, g, frac=1.0)
        assert s.K == 4
        kinds = {step_partition(s, data, g, Hyperparams(), rng)[1].move_kind for _ in range(300)}
        assert "split" not in kinds and "merge" in kinds

    def test_moves_change_K_by_at_most_one(self, rng):
        g = grid_graph(3, 3)
        data, s = regression_state(rng, g)
        h = Hyperparams(move_probs=(0.3, 0.3, 0.3, 0.1))
        for _ in range(500):
            t, rec = step_partition(s, data, g, h, rng)
            if rec.move_kind in ("split", "merge") and rec.accepted:
                assert abs(t.K - s.K) == 1
            elif rec.move_kind in ("change", "hyper"):
                assert t.K == s.K
            if rec.move_kind == "hyper":
                assert rec.accepted and t.partition == s.partition
            s = t
            validate_state(s, data, g)


class TestTau:
    def test_same_tau_accepted(self, rng):
        g = grid_graph(2, 2)
        data, s = regression_state(rng, g)
        for _ in range(20):
            _, ok = update_tau(s, data, Hyperparams(), rng, step=1e-300)
            assert ok

    @given(seeds)
    @settings(max_examples=20)
    def test_acceptance_ratio_matches_dense(self, seed):
        # replay the proposal draw and recompute the ratio by dense algebra
        rng = np.random.default_rng(seed)
        g = grid_graph(2, 3)
        data, s = regression_state(rng, g)
        h = Hyperparams(tau0=1.7)
        state_rng = np.random.default_rng(seed + 1)
        replay = np.random.default_rng(seed + 1)
        t, ok = update_tau(s, data, h, state_rng)
        tau_new = s.tau * math.exp(h.mh_step_tau * replay.standard_normal())
        u = replay.random()
        lam = s.lam
        Xt = data.reduced_design(s.projection)
        log_ratio = (collapsed_loglik(data.y, Xt, tau_new, lam)[0] - collapsed_loglik(data.y, Xt, s.tau, lam)[0]
                     - math.log1p((tau_new / 1.7) ** 2) + math.log1p((s.tau / 1.7) ** 2)
                     + math.log(tau_new / s.tau))
        assert ok == (log_ratio >= 0 or u < math.exp(log_ratio))
        if ok:
            assert math.isclose(t.tau, tau_new, rel_tol=1e-15)
            assert math.isclose(dense_loglik(t, data), -0.5 * t.logdet - 0.5 * data.n * math.log(0.5 * t.quad), rel_tol=1e-8)

    def test_y_zero_drifts_to_small_tau(self):
        rng = np.random.default_rng(2)
        g = grid_graph(2, 3)
        data = Dataset.normal_means(np.zeros(6))
        f = sample_forest_prior(g, rng).with_cuts(np.ones(5, dtype=bool))
        s = build_state(data, f, tau=5.0)
        h = Hyperparams()
        taus = np.empty(10_000)
        for i in range(len(taus)):
            s, _ = update_tau(s, data, h, rng)
            taus[i] = s.tau
        # the half-Cauchy prior has median tau0 = 1; the y = 0 target sits below it
        assert np.median(taus) < 0.5
        # while far above the bulk, accepted moves are mostly downward
        early = np.diff(np.r_[5.0, taus[:200]])
        early = early[(early != 0) & (np.r_[5.0, taus[:199]] > 2.0)]
        assert len(early) >= 3 and np.mean(early < 0) > 0.5
        # sign test against the prior: more than 70% of draws below the prior median
        assert np.mean(taus < 1.0) > 0.7


class TestSigma2:
    def test_inverse_gamma_mean(self, rng):
        g = grid_graph(3, 3)
        data, s = regression_state(rng, g, n=20)
        draws = np.array([update_sigma2(s, data, rng).sigma2 for _ in range(100_000)])
        shape, rate = data.n / 2, s.quad / 2
        assert abs(draws.mean() / (rate / (shape - 1)) - 1) < 0.01

    def test_proper_prior_shifts_parameters(self, rng):
        g = grid_graph(2, 2)
        data, s = regression_state(rng, g, n=10)
        h = Hyperparams(sigma2_prior=(3.0, 2.0))
        draws = np.array([update_sigma2(s, data, rng, h).sigma2 for _ in range(100_000)])
        assert abs(draws.mean() / ((2.0 + s.quad / 2) / (5 + 3.0 - 1)) - 1) < 0.01

    def test_tau_zero_limit(self, rng):
        y = rng.standard_normal(5)
        data = Dataset.normal_means(y)
        f = sample_forest_prior(grid_graph(1, 5), rng)
        s = build_state(data, f, tau=1e-9)
        assert math.isclose(s.quad, y @ y, rel_tol=1e-9)

    def test_rate_scales_with_y_squared(self, rng):
        g = grid_graph(2, 3)
        X = rng.standard_normal((6, 6))
        y = rng.standard_normal(6)
        f = sample_forest_prior(g, rng).with_cuts(np.array([True, False, True, False, False]))
        s1 = build_state(Dataset.from_arrays(X, y), f, tau=0.6)
        s2 = build_state(Dataset.from_arrays(X, 2 * y), f, tau=0.6)
        assert math.isclose(s2.quad, 4 * s1.quad, rel_tol=1e-12)


class TestBetaTilde:
    def test_mean_matches_dense(self, rng):
        g = grid_graph(3, 3)
        data, s = regression_state(rng, g)
        A = s.a_matrix()
        Xt = data.reduced_design(s.projection)
        mean = np.linalg.solve(A, Xt.T @ data.y)
        t = update_beta_tilde(s.copy(sigma2=1e-300), data, rng)
        np.testing.assert_allclose(t.beta_tilde, mean, atol=1e-10, rtol=1e-10)

    def test_covariance(self, rng):
        g = grid_graph(2, 3)
        X = rng.standard_normal((8, 6))
        data = Dataset.from_arrays(X, np.zeros(8))
        f = sample_forest_prior(g, rng).with_cuts(np.array([True, True, False, True, False]))
        s = build_state(data, f, tau=0.8, lam=np.array([0.5, 1.0, 2.0, 1.5]), sigma2=2.5)
        draws = np.array([update_beta_tilde(s, data, rng).beta_tilde for _ in range(100_000)])
        cov = 2.5 * np.linalg.inv(s.a_matrix())
        assert np.abs(draws.mean(axis=0)).max() < 0.05 * np.sqrt(np.diag(cov)).max()
        emp = np.cov(draws.T)
        assert np.linalg.norm(emp - cov) / np.linalg.norm(cov) < 0.05
        np.testing.assert_allclose(np.diag(emp), np.diag(cov), rtol=0.05)

    def test_no_shrinkage_limit(self, rng):
        y = rng.standard_normal(4)
        data = Dataset.normal_means(y)
        f = sample_forest_prior(grid_graph(2, 2), rng).with_cuts(np.ones(3, dtype=bool))
        s = build_state(data, f, tau=1.0, lam=np.full(4, 1e8), sigma2=1e-300)
        np.testing.assert_allclose(update_beta_tilde(s, data, rng).beta, y, atol=1e-10)


def eta_cdf(x, b):
    """CDF of the density proportional to exp(-b eta) / (1 + eta) on (0, inf)."""
    return 1.0 - special.exp1(b * (1.0 + x)) / special.exp1(b)


def exact_eta(b, size, rng):
    # rejection from Exp(b) with acceptance 1 / (1 + eta)
    out = np.empty(0)
    while len(out) < size:
        e = rng.exponential(1.0 / b, size=2 * size)
        out = np.concatenate([out, e[rng.random(2 * size) < 1.0 / (1.0 + e)]])
    return out[:size]


class TestLambda:
    def test_cdf_oracle_against_quadrature(self):
        b = 0.7
        Z = integrate.quad(lambda e: math.exp(-b * e) / (1 + e), 0, np.inf)[0]
        for x in (0.1, 1.0, 5.0):
            num = integrate.quad(lambda e: math.exp(-b * e) / (1 + e), 0, x)[0]
            assert math.isclose(num / Z, eta_cdf(x, b), rel_tol=1e-8)

    @pytest.mark.parametrize("b", [0.05, 0.7, 6.0])
    def test_slice_step_preserves_conditional(self, b):
        rng = np.random.default_rng(11)
        n = 4_000_000
        eta = _slice_eta(exact_eta(b, n, rng), np.full(n, b), rng)
        eta.sort()
        F = eta_cdf(eta, b)
        i = np.arange(1, n + 1)
        ks = max(np.max(i / n - F), np.max(F - (i - 1) / n))
        assert ks < 1e-3

    def test_converges_from_bad_start(self):
        rng = np.random.default_rng(12)
        b = 0.7
        n = 1_000_000
        eta = np.full(n, 50.0)
        for _ in range(40):
            eta = _slice_eta(eta, np.full(n, b), rng)
        eta.sort()
        F = eta_cdf(eta, b)
        i = np.arange(1, n + 1)
        assert max(np.max(i / n - F), np.max(F - (i - 1) / n)) < 3e-3

    def test_zero_coefficient_shrinks(self):
        rng = np.random.default_rng(13)
        eta = np.ones(1)
        lam = np.empty(100_000)
        for i in range(len(lam)):
            eta = _slice_eta(eta, np.zeros(1), rng)
            lam[i] = 1 / math.sqrt(eta[0])
        assert np.median(lam) < 1.0

    def test_update_lambda_state(self, rng):
        g = grid_graph(3, 3)
        data, s = regression_state(rng, g)
        t = update_lambda(s, data, rng)
        validate_state(t, data, g)
        assert t.lam.shape == s.lam.shape and not np.array_equal(t.lam, s.lam)

    def test_coordinates_independent(self):
        # each lambda_k's draw depends only on its own beta_tilde_k
        b = np.array([0.2, 3.0, 0.0])
        eta0 = np.array([1.0, 2.0, 0.5])
        a = _slice_eta(eta0, b, np.random.default_rng(1))
        b2 = b.copy()
        b2[2] = 9.0
        c = _slice_eta(eta0, b2, np.random.default_rng(1))
        np.testing.assert_array_equal(a[:2], c[:2])


class TestRunChain:
    def _setup(self):
        rng = np.random.default_rng(0)
        g = grid_graph(3, 3)
        X = rng.standard_normal((12, 9))
        beta = np.r_[np.full(4, 3.0), np.zeros(5)]
        return Dataset.from_arrays(X, X @ beta + rng.standard_normal(12)), g

    def test_schedule_counts(self):
        data, g = self._setup()
        out = run_chain(data, g, Hyperparams(), Schedule(30), np.random.default_rng(1))
        assert len(out) == 30 and out.iteration.tolist() == list(range(1, 31))
        out = run_chain(data, g, Hyperparams(), Schedule(30, burnin=10, thin=4), np.random.default_rng(1))
        assert len(out) == 7 and out.iteration.tolist() == [4, 8, 12, 16, 20, 24, 28]

    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            Schedule(10, thin=0)
        with pytest.raises(ValueError):
            Schedule(-1)

    def test_deterministic(self):
        data, g = self._setup()
        a = run_chain(data, g, Hyperparams(), Schedule(200, 50, 2), np.random.default_rng(7))
        b = run_chain(data, g, Hyperparams(), Schedule(200, 50, 2), np.random.default_rng(7))
        for name in ("iteration", "labels", "beta", "sigma2", "tau", "K"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
        assert a.acceptance == b.acceptance

    def test_run_chains_deterministic_and_pooled(self):
        data, g = self._setup()
        a = run_chains(data, g, Hyperparams(), Schedule(50), seed=3, chains=3)
        b = run_chains(data, g, Hyperparams(), Schedule(50), seed=3, chains=3)
        assert len(a) == 150 and a.chain.tolist() == [0] * 50 + [1] * 50 + [2] * 50
        np.testing.assert_array_equal(a.beta, b.beta)

    def test_debug_mode_and_outputs(self):
        data, g = self._setup()
        out = run_chain(data, g, Hyperparams(), Schedule(300), np.random.default_rng(2), debug=True)
        np.testing.assert_array_equal(out.labels.max(axis=1) + 1, out.K)
        assert set(out.acceptance) >= {"split", "merge", "change", "hyper", "tau", "tau_step"}
        assert out.acceptance["hyper"] == 1.0

    def test_dimension_mismatch(self):
        data, _ = self._setup()
        with pytest.raises(ValueError):
            run_chain(data, grid_graph(2, 2), Hyperparams(), Schedule(1), np.random.default_rng(0))
