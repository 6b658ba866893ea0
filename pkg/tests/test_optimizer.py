import math

import numpy as np
import pytest
from scipy import optimize

from lagnet import (
    CoefficientBlock,
    FitConfig,
    NetworkSeries,
    build_design,
    fit_all_pairs,
    fit_pair,
    global_penalty_ceiling,
    intercept_only_fit,
    kkt_violation,
    pair_penalty_ceiling,
    soft_threshold,
)
from lagnet.errors import DataError

from test_network import random_series


class TestSoftThreshold:
    def test_basic(self):
        assert soft_threshold(3.0, 1.0) == 2.0
        assert soft_threshold(-0.5, 1.0) == 0.0
        assert soft_threshold(-3.0, 1.0) == -2.0

    def test_identity_at_zero(self):
        for w in (-2.5, 0.0, 0.7):
            assert soft_threshold(w, 0.0) == w

    def test_negative_threshold_rejected(self):
        with pytest.raises(DataError):
            soft_threshold(1.0, -0.1)


def generic_mle_oracle(design):
    """Unpenalized MLE via a generic quasi-Newton optimizer.

    Works on the softmax form of the 4-category log-density, sharing no
    code with the coordinate-descent path.
    """
    m, width = design.X.shape
    X = design.X.astype(float)
    resp = design.responses.astype(int)
    # d(outcome logit)/d(eta_r)
    chain = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 1]], dtype=float)

    def unpack(v):
        return v[:3], v[3:].reshape(3, width)

    def nll(v):
        a, W = unpack(v)
        logits = (a + X @ W.T) @ chain.T
        top = logits.max(axis=1, keepdims=True)
        lse = top[:, 0] + np.log(np.exp(logits - top).sum(axis=1))
        return float(np.sum(lse - logits[np.arange(m), resp]))

    def grad(v):
        a, W = unpack(v)
        logits = (a + X @ W.T) @ chain.T
        top = logits.max(axis=1, keepdims=True)
        p = np.exp(logits - top)
        p /= p.sum(axis=1, keepdims=True)
        resid = p
        resid[np.arange(m), resp] -= 1.0
        d_eta = resid @ chain
        return np.concatenate([d_eta.sum(axis=0), (d_eta.T @ X).ravel()])

    res = optimize.minimize(
        nll,
        np.zeros(3 + 3 * width),
        jac=grad,
        method="L-BFGS-B",
        options=dict(maxiter=20000, ftol=1e-16, gtol=1e-12),
    )
    assert res.success or res.status == 0
    return unpack(res.x)


def full_rank_series(n=3, num_slices=200, seed=42):
    """iid-random slices: full-rank design, no separation at this length."""
    return random_series(n, num_slices, seed=seed, p=0.5)


class TestUnpenalizedEquivalence:
    def test_matches_generic_optimizer(self):
        series = full_rank_series()
        design = build_design(series, 1, 2)
        aug = np.column_stack([np.ones(design.num_rows), design.X.astype(float)])
        assert np.linalg.matrix_rank(aug) == design.width + 1  # nondegenerate
        a_star, w_star = generic_mle_oracle(design)
        fit = fit_pair(
            design,
            FitConfig(
                penalty=0.0,
                max_sweeps=5000,
                objective_tolerance=1e-12,
                kkt_tolerance=1e-8,
            ),
        )
        assert fit.converged
        assert np.abs(fit.coef.intercepts - a_star).max() < 1e-4
        assert np.abs(fit.coef.weights - w_star).max() < 1e-4


class TestNullModel:
    def test_ceiling_zeroes_everything(self):
        series = random_series(5, 40, seed=6)
        design = build_design(series, 2, 4)
        ceiling = pair_penalty_ceiling(design)
        for penalty in (ceiling, ceiling * 1.01, ceiling * 10):
            fit = fit_pair(design, FitConfig(penalty=penalty))
            assert fit.active_size == 0
            assert not fit.coef.weights.any()

    def test_below_ceiling_activates_something(self):
        series = random_series(5, 40, seed=6)
        design = build_design(series, 2, 4)
        ceiling = pair_penalty_ceiling(design)
        fit = fit_pair(design, FitConfig(penalty=ceiling * 0.8))
        assert fit.active_size > 0

    def test_null_fit_intercept_stationarity(self):
        series = random_series(6, 60, seed=13)
        for pair in [(1, 2), (3, 6)]:
            design = build_design(series, *pair)
            fit = intercept_only_fit(design)
            violation, capped = kkt_violation(design, fit.coef, math.inf)
            assert capped == 0
            assert violation < 1e-6 * design.num_rows

    def test_global_ceiling(self):
        series = random_series(4, 30, seed=2)
        ceiling = global_penalty_ceiling(series)
        assert ceiling == max(
            pair_penalty_ceiling(build_design(series, i, j)) for i, j in series.pairs()
        )
        batch = fit_all_pairs(series, FitConfig(penalty=ceiling * 1.05))
        assert all(fit.active_size == 0 for fit in batch.fits.values())


class TestDegenerate:
    def test_all_nn_responses(self):
        # pair (1,2) never links after slice 1: weights stay zero, intercepts
        # dive until the cap clamps them (min_curvature relaxed so the
        # saturation guard does not freeze the march first)
        rng = np.random.default_rng(3)
        y = (rng.random((12, 4, 4)) < 0.5).astype(np.uint8)
        for k in range(4):
            y[:, k, k] = 0
        y[1:, 0, 1] = 0
        y[1:, 1, 0] = 0
        series = NetworkSeries(n=4, num_slices=12, y=y)
        design = build_design(series, 1, 2)
        fit = fit_pair(
            design,
            FitConfig(
                penalty=2.0,
                max_sweeps=500,
                objective_tolerance=1e-16,
                min_curvature=1e-16,
            ),
        )
        assert not fit.coef.weights.any()
        assert fit.coef.intercepts[0] == -30.0
        assert fit.coef.intercepts[1] == -30.0
        assert fit.cap_hits >= 2

    def test_all_nn_default_config_freezes_saturated_intercepts(self):
        # with the default curvature floor the saturated intercepts stop
        # short of the cap but the weights still stay exactly zero
        y = np.zeros((12, 3, 3), dtype=np.uint8)
        series = NetworkSeries(n=3, num_slices=12, y=y)
        design = build_design(series, 1, 2)
        fit = fit_pair(design, FitConfig(penalty=2.0, objective_tolerance=1e-16))
        assert not fit.coef.weights.any()
        assert fit.coef.intercepts[0] < -20

    def test_cap_is_configurable(self):
        y = np.zeros((10, 3, 3), dtype=np.uint8)
        series = NetworkSeries(n=3, num_slices=10, y=y)
        design = build_design(series, 1, 2)
        fit = fit_pair(
            design,
            FitConfig(penalty=1.0, coefficient_cap=5.0, objective_tolerance=1e-16),
        )
        assert np.all(fit.coef.intercepts == -5.0)


class TestMonotonicityAndKkt:
    def test_objective_trace_nondecreasing(self):
        rng = np.random.default_rng(0)
        for trial in range(8):
            series = random_series(6, 50, seed=500 + trial)
            pairs = series.pairs()
            i, j = pairs[int(rng.integers(len(pairs)))]
            design = build_design(series, i, j)
            penalty = float(rng.uniform(0.5, 8.0))
            fit = fit_pair(design, FitConfig(penalty=penalty), track_objective=True)
            trace = np.array(fit.objective_trace)
            assert (np.diff(trace) >= -1e-10).all()
            assert trace[-1] >= trace[0]

    def test_kkt_certificate_at_convergence(self):
        series = random_series(6, 80, seed=77)
        design = build_design(series, 1, 4)
        for penalty in (1.0, 3.0, 8.0):
            fit = fit_pair(design, FitConfig(penalty=penalty))
            assert fit.converged
            violation, capped = kkt_violation(design, fit.coef, penalty)
            assert capped == 0
            assert violation <= 1e-4 * design.num_rows

    def test_final_equals_recomputed_objective(self):
        series = random_series(5, 40, seed=11)
        design = build_design(series, 1, 5)
        fit = fit_pair(design, FitConfig(penalty=2.0))
        from lagnet import pair_loglik

        expected = pair_loglik(design, fit.coef) - 2.0 * np.abs(fit.coef.weights).sum()
        assert fit.objective == expected

    def test_active_set_matches_nonzeros(self):
        series = random_series(6, 60, seed=15)
        design = build_design(series, 2, 3)
        fit = fit_pair(design, FitConfig(penalty=2.0))
        mask = np.zeros((3, design.width), dtype=bool)
        for r, k in fit.active_set:
            mask[r, k] = True
        assert np.array_equal(mask, fit.coef.weights != 0)


class TestWarmStart:
    def test_warm_start_agrees_with_cold(self):
        series = random_series(6, 100, seed=4)
        design = build_design(series, 1, 2)
        cfg_hi = FitConfig(penalty=6.0)
        cfg_lo = FitConfig(penalty=3.0)
        hi = fit_pair(design, cfg_hi)
        warm = fit_pair(design, cfg_lo, warm_start=hi.coef)
        cold = fit_pair(design, cfg_lo)
        assert set(warm.active_set) == set(cold.active_set)
        assert np.abs(warm.coef.weights - cold.coef.weights).max() < 1e-4
        assert np.abs(warm.coef.intercepts - cold.coef.intercepts).max() < 1e-4

    def test_sparsity_roughly_monotone_in_penalty(self):
        # not asserted strictly by theory; log any inversions via message
        series = random_series(6, 80, seed=40)
        design = build_design(series, 1, 6)
        ceiling = pair_penalty_ceiling(design)
        sizes = []
        for penalty in np.geomspace(ceiling / 10, ceiling, 6):
            sizes.append(fit_pair(design, FitConfig(penalty=float(penalty))).active_size)
        inversions = sum(1 for a, b in zip(sizes, sizes[1:]) if b > a)
        assert inversions <= 1, f"active sizes not roughly monotone: {sizes}"


class TestBatch:
    def test_pair_count(self):
        series = random_series(3, 20, seed=1)
        batch = fit_all_pairs(series, FitConfig(penalty=1.0))
        assert len(batch.fits) == 3
        assert not batch.failures

    def test_worker_count_bit_identical(self):
        series = random_series(5, 60, seed=19)
        cfg = FitConfig(penalty=2.0)
        serial = fit_all_pairs(series, cfg, workers=1)
        parallel = fit_all_pairs(series, cfg, workers=2)
        assert list(serial.fits) == list(parallel.fits)
        for pair in serial.fits:
            a, b = serial.fits[pair], parallel.fits[pair]
            assert a.objective == b.objective
            assert np.array_equal(a.coef.weights, b.coef.weights)
            assert np.array_equal(a.coef.intercepts, b.coef.intercepts)
