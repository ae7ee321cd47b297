import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from dqnsbl.ard import (
    SblConfig,
    ard_update,
    classic_sbl_fit,
    dqn_sbl_fit,
    log_alpha_converged,
)
from dqnsbl.datasets import known_support, uninformative
from dqnsbl.dqn import DqnConfig
from dqnsbl.errors import IllConditionedError, OracleGuardError
from dqnsbl.objective import DesignMatrix


def _targets(ds):
    return (ds.labels > 0).astype(float)


def bisect_root(f, lo, hi, iters=200):
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(lo) * f(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


class TestArdUpdate:
    def test_main_branch(self):
        a, n_fb = ard_update([1.0], [0.5], [0.5], c=1e-4)
        assert a[0] == pytest.approx(2.0)
        assert n_fb == 0

    def test_fallback_branch(self):
        a, n_fb = ard_update([4.0], [0.1], [0.5], c=1e-4)
        assert a[0] == pytest.approx(0.01)
        assert n_fb == 1

    def test_tiny_weight_prunes(self):
        a, _ = ard_update([4.0], [1e-6], [0.5], c=1e-4)
        assert a[0] == pytest.approx(1e8)
        assert a[0] > 1e6

    def test_exact_zero_weight(self):
        a, n_fb = ard_update([1.0, 4.0], [0.0, 0.0], [0.5, 0.5], c=1e-4, alpha_max=1e6)
        np.testing.assert_array_equal(a, [2e6, 2e6])
        assert n_fb == 0

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_branches_exact(self, seed):
        rng = np.random.default_rng(seed)
        n = 6
        alpha = np.exp(rng.uniform(-5, 5, n))
        b = np.exp(rng.uniform(-5, 5, n))
        w = rng.standard_normal(n)
        c = 1e-4
        out, n_fb = ard_update(alpha, w, b, c)
        assert np.all(out > 0)
        fb = 1 - alpha * b <= 0
        assert n_fb == fb.sum()
        np.testing.assert_array_equal(out[fb], c / (w[fb] ** 2))
        np.testing.assert_allclose(out[~fb], (1 - alpha[~fb] * b[~fb]) / w[~fb] ** 2, rtol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ard_update([1.0], [1.0, 2.0], [1.0], 1e-4)


class TestLogAlphaConvergence:
    def test_identical(self):
        assert log_alpha_converged([1.0, 5.0], [1.0, 5.0], 1e-3)

    def test_ratio_e(self):
        assert not log_alpha_converged([1.0, 2.0], [math.e, 2.0], 1e-3)

    def test_empty(self):
        assert log_alpha_converged([], [], 1e-3)

    def test_strict(self):
        assert not log_alpha_converged([1.0], [math.exp(1e-3)], 1e-3)
        assert log_alpha_converged([1.0], [math.exp(0.9e-3)], 1e-3)


class TestSblConfig:
    @pytest.mark.parametrize(
        "kw", [dict(alpha_max=0), dict(delta_logalpha=1.5), dict(c=2.0), dict(init_alpha=-1)]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SblConfig(**kw)

    def test_overrides(self):
        cfg = SblConfig().with_overrides(max_iterations=7, inner_grad_tolerance=1e-3)
        assert cfg.max_iterations == 7
        assert cfg.inner.grad_tolerance == 1e-3
        assert cfg.inner.max_iterations == 100


class TestDqnSblFit:
    def test_signal_feature_survives(self):
        for seed in range(10):
            ds, support, _ = known_support(200, 10, n_informative=1, seed=seed, scale=3.0)
            state, _ = dqn_sbl_fit(DesignMatrix(ds.X), _targets(ds))
            assert support[0] + 1 in state.active

    def test_informative_columns_survive(self):
        kept = 0
        for seed in range(10):
            ds, support, _ = known_support(500, 50, n_informative=5, seed=seed)
            state, report = dqn_sbl_fit(DesignMatrix(ds.X), _targets(ds))
            kept += np.isin(support + 1, state.active).sum() >= 4
            assert report.active_count_history[-1] < 51
        assert kept >= 8

    # Dense Gaussian designs: the diagonal estimate b differs from the exact
    # posterior variance by up to an order of magnitude, the c-branch fires on
    # many columns and noise priors never reach the prune threshold within
    # 100 outer iterations. The exact-covariance engine misses these bounds too.
    @pytest.mark.xfail(strict=True, reason="noise columns are not pruned within MaxIts")
    def test_noise_columns_pruned(self):
        good = 0
        for seed in range(10):
            ds, support, _ = known_support(500, 50, n_informative=5, seed=seed)
            state, _ = dqn_sbl_fit(DesignMatrix(ds.X), _targets(ds))
            feats = state.active[state.active != 0] - 1
            good += feats.size <= 15 and np.isin(support, feats).sum() >= 4
        assert good >= 8

    @pytest.mark.xfail(strict=True, reason="noise columns are not pruned within MaxIts")
    def test_uninformative_collapses(self):
        for seed in range(3):
            ds = uninformative(200, 10, seed=seed)
            state, _ = dqn_sbl_fit(DesignMatrix(ds.X), _targets(ds))
            assert state.active.size <= 2

    def test_uninformative_keeps_bias(self):
        ds = uninformative(200, 10, seed=0)
        state, _ = dqn_sbl_fit(DesignMatrix(ds.X), _targets(ds))
        assert state.active[0] == 0

    def test_invariants(self):
        ds, _, _ = known_support(300, 30, seed=4)
        history = []

        def cb(it, state):
            history.append(state.copy())

        state, report = dqn_sbl_fit(DesignMatrix(ds.X), _targets(ds), callback=cb)
        counts = report.active_count_history
        assert counts[0] == 31
        assert all(b <= a for a, b in zip(counts, counts[1:]))
        assert len(history) == report.outer_iterations == len(report.fallback_count)
        seen_pruned = set()
        for s in history:
            assert np.all(s.alpha > 0) and np.all(s.alpha <= 1e6)
            assert np.intersect1d(s.active, s.pruned).size == 0
            assert np.union1d(s.active, s.pruned).size == 31
            assert seen_pruned <= set(s.pruned.tolist())
            assert not seen_pruned & set(s.active.tolist())
            seen_pruned = set(s.pruned.tolist())
        full = state.full_weights()
        assert np.all(full[state.pruned] == 0)

    def test_pruning_iteration_never_converges(self):
        ds, _, _ = known_support(200, 20, seed=1)
        _, report = dqn_sbl_fit(DesignMatrix(ds.X), _targets(ds))
        h = report.active_count_history
        if report.converged:
            assert h[-1] == h[-2]

    def test_callback_stops(self):
        ds, _, _ = known_support(100, 10, seed=0)
        _, report = dqn_sbl_fit(DesignMatrix(ds.X), _targets(ds),
                                callback=lambda it, s: it >= 3)
        assert report.outer_iterations == 3
        assert not report.converged

    def test_all_pruned_keeps_bias(self):
        ds = uninformative(60, 3, seed=2)
        cfg = SblConfig(prune_bias=True, alpha_max=1e-6)
        state, _ = dqn_sbl_fit(DesignMatrix(ds.X), _targets(ds), cfg)
        np.testing.assert_array_equal(state.active, [0])

    def test_trace_recorded(self):
        ds, _, _ = known_support(100, 5, seed=0)
        _, report = dqn_sbl_fit(DesignMatrix(ds.X), _targets(ds), trace=True,
                                max_iterations=2)
        assert len(report.traces) == 2
        assert report.traces[0][0].iteration == 0

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            dqn_sbl_fit(DesignMatrix(np.zeros((0, 2))), np.zeros(0))
        with pytest.raises(ValueError):
            dqn_sbl_fit(DesignMatrix(np.ones((3, 2))), [0, 1, 2])
        with pytest.raises(ValueError):
            dqn_sbl_fit(DesignMatrix(np.ones((3, 2))), [0, 1])

    def test_deterministic(self):
        ds, _, _ = known_support(150, 20, seed=9)
        a, _ = dqn_sbl_fit(DesignMatrix(ds.X), _targets(ds))
        b, _ = dqn_sbl_fit(DesignMatrix(ds.X), _targets(ds))
        assert a.w.tobytes() == b.w.tobytes()
        assert a.alpha.tobytes() == b.alpha.tobytes()


class TestClassicSblFit:
    def test_identity_design_one_step(self):
        t = np.array([1.0, 0.0, 1.0, 0.0])
        design = DesignMatrix(np.eye(4), active=[1, 2, 3, 4])
        cfg = SblConfig(inner=DqnConfig(grad_tolerance=1e-12))
        state, _ = classic_sbl_fit(design, t, cfg, max_iterations=1)
        a0 = cfg.init_alpha
        for k in range(4):
            # each coordinate decouples: sigmoid(w) - t + a0 * w = 0
            w = bisect_root(lambda v: 1 / (1 + math.exp(-v)) - t[k] + a0 * v, -50, 50)
            y = 1 / (1 + math.exp(-w))
            sigma_kk = 1.0 / (y * (1 - y) + a0)
            assert state.w[k] == pytest.approx(w, abs=1e-9)
            assert state.alpha[k] == pytest.approx((1 - a0 * sigma_kk) / w**2, rel=1e-8)

    def test_guard(self):
        X = sp.random(10, 5001, density=0.001, format="csr", random_state=0)
        with pytest.raises(OracleGuardError):
            classic_sbl_fit(DesignMatrix(X), np.arange(10) % 2)

    def test_ill_conditioned(self):
        x = 1e10 * np.ones((4, 1))
        X = np.hstack([x, x])
        cfg = SblConfig(init_alpha=1e-300)
        with pytest.raises(IllConditionedError):
            classic_sbl_fit(DesignMatrix(X, active=[1, 2]), [0.0, 1.0, 0.0, 1.0], cfg)

    def test_agrees_with_dqn_on_known_support(self):
        same = 0
        for seed in range(10):
            ds, support, _ = known_support(100, 20, seed=seed)
            t = _targets(ds)
            a, _ = dqn_sbl_fit(DesignMatrix(ds.X), t)
            b, _ = classic_sbl_fit(DesignMatrix(ds.X), t)
            ra = np.intersect1d(a.active - 1, support)
            rb = np.intersect1d(b.active - 1, support)
            same += np.array_equal(ra, rb)
            assert max(a.active.size, b.active.size) <= 3 * min(a.active.size, b.active.size)
        assert same >= 8

    def test_separable_toy_close_to_dqn(self):
        X = np.array([[1.0, 2.0], [2.0, 1.0], [1.5, 1.5], [-1.0, -2.0], [-2.0, -1.0],
                      [-1.5, -1.0], [0.2, -0.1], [-0.3, 0.4]])
        t = np.array([1, 1, 1, 0, 0, 0, 1, 0.0])
        cfg = SblConfig(init_alpha=1.0, inner=DqnConfig(grad_tolerance=1e-4))
        a, _ = dqn_sbl_fit(DesignMatrix(X), t, cfg, max_iterations=1)
        b, _ = classic_sbl_fit(DesignMatrix(X), t, cfg, max_iterations=1)
        np.testing.assert_array_equal(a.active, b.active)
        np.testing.assert_allclose(a.w, b.w, atol=1e-2)
