"""Unit and property tests for the gradient-decay loss core."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradient_decay.loss import (
    FixedShift,
    LabeledLogits,
    LossParams,
    MaxShift,
    beta_ce_batch,
    beta_ce_eval,
    beta_ce_loss,
    gradient_magnitude,
    inflection_point,
    local_lipschitz_bound,
    logit_curvature,
    magnitude_derivatives,
    softmax_probs,
    suggested_learning_rate,
)

UNIFORM10 = LabeledLogits(np.zeros(10), 0)


@st.composite
def labeled_logits(draw, lo=-30.0, hi=30.0, max_m=16):
    m = draw(st.integers(2, max_m))
    z = draw(
        st.lists(st.floats(lo, hi, allow_nan=False), min_size=m, max_size=m)
    )
    c = draw(st.integers(0, m - 1))
    return LabeledLogits(np.asarray(z), c)


betas = st.one_of(
    st.sampled_from([0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0]),
    st.floats(0.01, 100.0),
)


class TestSoftmaxProbs:
    def test_uniform_logits_give_uniform_probs(self):
        p = softmax_probs(np.zeros(10), 1.0)
        assert np.all(p == 0.1)

    def test_two_equal_logits(self):
        assert np.all(softmax_probs(np.array([1.0, 1.0]), 1.0) == 0.5)

    def test_two_class_value(self):
        # direct evaluation: [1/(1+e^-2), e^-2/(1+e^-2)]
        p = softmax_probs(np.array([2.0, 0.0]), 1.0)
        assert p[0] == pytest.approx(0.8807970779778823, rel=1e-12)
        assert p[1] == pytest.approx(0.11920292202211756, rel=1e-12)

    def test_sums_to_one(self):
        p = softmax_probs(np.array([3.0, -1.0, 0.5, 2.2]), 0.7)
        assert abs(p.sum() - 1.0) < 1e-12

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            softmax_probs(np.array([1.0, np.nan]), 1.0)
        with pytest.raises(ValueError):
            softmax_probs(np.array([1.0, np.inf]), 1.0)

    def test_rejects_single_class_and_bad_tau(self):
        with pytest.raises(ValueError):
            softmax_probs(np.array([1.0]), 1.0)
        with pytest.raises(ValueError):
            softmax_probs(np.array([1.0, 2.0]), 0.0)

    @given(st.lists(st.floats(-20, 20).map(lambda v: round(v, 3)), min_size=2, max_size=12),
           st.floats(0.05, 5.0))
    def test_order_preserving(self, vals, tau):
        z = np.asarray(vals)
        p = softmax_probs(z, tau)
        for i in range(z.size):
            for j in range(z.size):
                if z[i] > z[j]:
                    assert p[i] > p[j]


class TestBetaCeLoss:
    def test_uniform_logits_values(self):
        # J at uniform logits is log(m - 1 + beta)
        assert beta_ce_loss(UNIFORM10, LossParams(beta=1.0)) == pytest.approx(
            2.302585092994046, rel=1e-12
        )
        assert beta_ce_loss(UNIFORM10, LossParams(beta=0.1)) == pytest.approx(
            2.2082744135228043, rel=1e-12
        )
        assert beta_ce_loss(UNIFORM10, LossParams(beta=5.0)) == pytest.approx(
            2.6390573296152584, rel=1e-12
        )

    @given(labeled_logits(), betas, st.floats(-50, 50))
    @settings(max_examples=200)
    def test_shift_invariance(self, x, beta, k):
        p = LossParams(beta=beta)
        a = beta_ce_loss(x, p)
        b = beta_ce_loss(LabeledLogits(x.z + k, x.c), p)
        assert abs(a - b) < 1e-10

    @given(labeled_logits(), betas)
    @settings(max_examples=200)
    def test_loss_above_log_beta(self, x, beta):
        j = beta_ce_loss(x, LossParams(beta=beta))
        assert j >= math.log(beta) - 1e-12
        if beta >= 1.0:
            assert j >= 0.0

    @given(labeled_logits(lo=-10.0, hi=10.0), betas)
    @settings(max_examples=200)
    def test_loss_strictly_above_log_beta_on_moderate_logits(self, x, beta):
        assert beta_ce_loss(x, LossParams(beta=beta)) > math.log(beta)

    def test_beta_one_is_standard_cross_entropy(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            z = rng.uniform(-8, 8, int(rng.integers(2, 12)))
            c = int(rng.integers(z.size))
            j = beta_ce_loss(LabeledLogits(z, c), LossParams(beta=1.0))
            ref = math.log(np.exp(z - z.max()).sum()) + z.max() - z[c]
            assert j == pytest.approx(ref, abs=1e-12)

    def test_fixed_shift_matches_max_shift_on_moderate_logits(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            z = rng.uniform(-30, 30, 8)
            x = LabeledLogits(z, 3)
            a = beta_ce_loss(x, LossParams(beta=0.3, stability=MaxShift()))
            b = beta_ce_loss(x, LossParams(beta=0.3, stability=FixedShift(70.0)))
            assert abs(a - b) < 1e-10

    def test_fixed_shift_default_is_70(self):
        assert FixedShift().u == 70.0

    def test_fixed_shift_overflow_names_offending_logit(self):
        z = np.array([0.0, 1000.0, 0.0])
        with pytest.raises(OverflowError, match=r"z\[1\]"):
            beta_ce_loss(LabeledLogits(z, 0), LossParams(beta=1.0, stability=FixedShift(70.0)))

    def test_fixed_shift_underflow_is_a_range_error(self):
        z = np.array([-900.0, -905.0])
        with pytest.raises(OverflowError):
            beta_ce_loss(LabeledLogits(z, 0), LossParams(beta=1.0, stability=FixedShift(70.0)))


class TestBetaCeEval:
    def test_uniform_logits_standard_ce(self):
        ev = beta_ce_eval(UNIFORM10, LossParams(beta=1.0))
        assert ev.grad[0] == pytest.approx(-0.9, abs=1e-15)
        assert np.allclose(ev.grad[1:], 0.1, atol=1e-15)

    def test_uniform_logits_small_beta(self):
        # denominators 1 + (beta-1) * 0.1 = 0.91 and 1.4
        ev = beta_ce_eval(UNIFORM10, LossParams(beta=0.1))
        assert ev.grad[0] == pytest.approx(-0.989010989010989, rel=1e-12)
        assert np.allclose(ev.grad[1:], 0.10989010989010989, rtol=1e-12)

    def test_uniform_logits_large_beta(self):
        ev = beta_ce_eval(UNIFORM10, LossParams(beta=5.0))
        assert ev.grad[0] == pytest.approx(-0.6428571428571429, rel=1e-12)
        assert np.allclose(ev.grad[1:], 0.07142857142857144, rtol=1e-12)

    @given(labeled_logits(), betas)
    @settings(max_examples=300)
    def test_eval_invariants(self, x, beta):
        ev = beta_ce_eval(x, LossParams(beta=beta))
        assert abs(ev.probs.sum() - 1.0) < 1e-12
        assert 0.0 < ev.p_true < 1.0
        assert ev.grad[x.c] <= 0.0
        others = np.delete(ev.grad, x.c)
        assert np.all(others >= 0.0)
        assert abs(ev.grad.sum()) < 1e-12
        assert abs(abs(ev.grad[x.c]) - others.sum()) < 1e-12
        assert ev.loss >= math.log(beta) - 1e-12

    @given(labeled_logits(max_m=8), betas, st.floats(0.05, 5.0))
    @settings(max_examples=150)
    def test_temperature_chain_rule(self, x, beta, tau):
        # grad at temperature tau equals grad of the tau=1 loss at z/tau, scaled by 1/tau
        ev = beta_ce_eval(x, LossParams(beta=beta, tau=tau))
        ref = beta_ce_eval(LabeledLogits(x.z / tau, x.c), LossParams(beta=beta))
        assert np.allclose(ev.grad, ref.grad / tau, rtol=1e-9, atol=1e-12)

    def test_saturated_probability_is_clamped(self):
        ev = beta_ce_eval(LabeledLogits(np.array([200.0, -200.0]), 0), LossParams(beta=1.0))
        assert ev.p_true == 1.0 - 1e-12
        assert np.isfinite(ev.grad).all()


class TestBatchEval:
    def test_matches_per_sample(self):
        rng = np.random.default_rng(3)
        Z = rng.uniform(-6, 6, (40, 7))
        y = rng.integers(0, 7, 40)
        for params in (LossParams(beta=0.1), LossParams(beta=5.0, tau=0.5),
                       LossParams(beta=1.0, stability=FixedShift(70.0))):
            be = beta_ce_batch(Z, y, params)
            for k in range(Z.shape[0]):
                ev = beta_ce_eval(LabeledLogits(Z[k], int(y[k])), params)
                assert be.losses[k] == pytest.approx(ev.loss, rel=1e-12)
                assert np.allclose(be.grads[k], ev.grad, rtol=1e-12, atol=1e-15)
                assert np.allclose(be.probs[k], ev.probs, rtol=1e-12, atol=1e-15)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            beta_ce_batch(np.zeros((4, 1)), np.zeros(4, dtype=int), LossParams(beta=1.0))
        with pytest.raises(ValueError):
            beta_ce_batch(np.zeros((4, 3)), np.zeros(5, dtype=int), LossParams(beta=1.0))


class TestGradientMagnitude:
    def test_point_values(self):
        assert gradient_magnitude(0.5, 1.0) == 0.5
        assert gradient_magnitude(0.5, 0.1) == pytest.approx(0.9090909090909091, rel=1e-12)
        assert gradient_magnitude(0.5, 5.0) == pytest.approx(0.16666666666666666, rel=1e-12)

    def test_extreme_beta_limits(self):
        assert gradient_magnitude(0.5, 1e-8) >= 1.0 - 1e-7
        assert gradient_magnitude(0.5, 1e8) <= 1e-7

    @given(betas)
    def test_strictly_decreasing_and_bounded(self, beta):
        p = np.linspace(1e-6, 1 - 1e-6, 2000)
        g = gradient_magnitude(p, beta)
        assert np.all(np.diff(g) < 0)
        assert np.all((g > 0) & (g < 1))

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            gradient_magnitude(0.0, 1.0)
        with pytest.raises(ValueError):
            gradient_magnitude(1.0, 1.0)
        with pytest.raises(ValueError):
            gradient_magnitude(0.5, 0.0)


class TestMagnitudeDerivatives:
    def test_beta_one_collapses(self):
        for p in (0.1, 0.5, 0.9):
            dg, d2g = magnitude_derivatives(p, 1.0)
            assert dg == -1.0
            assert d2g == 0.0

    def test_point_values(self):
        dg, d2g = magnitude_derivatives(0.5, 0.1)
        assert dg == pytest.approx(-0.33057851239669417, rel=1e-12)
        assert d2g == pytest.approx(-1.0818933132982718, rel=1e-12)
        dg, d2g = magnitude_derivatives(0.5, 5.0)
        assert dg == pytest.approx(-0.5555555555555556, rel=1e-12)
        assert d2g == pytest.approx(1.4814814814814814, rel=1e-12)

    def test_first_derivative_matches_finite_differences(self):
        h = 1e-6
        for beta in (0.05, 0.7, 3.0, 12.0):
            for p in (0.05, 0.3, 0.7, 0.95):
                fd = (gradient_magnitude(p + h, beta) - gradient_magnitude(p - h, beta)) / (2 * h)
                assert magnitude_derivatives(p, beta)[0] == pytest.approx(fd, rel=1e-7)

    def test_second_derivative_matches_finite_differences(self):
        h = 1e-5
        for beta in (0.05, 0.7, 3.0, 12.0):
            for p in (0.2, 0.5, 0.8):
                fd = (
                    gradient_magnitude(p + h, beta)
                    - 2 * gradient_magnitude(p, beta)
                    + gradient_magnitude(p - h, beta)
                ) / h**2
                assert magnitude_derivatives(p, beta)[1] == pytest.approx(fd, rel=1e-4)

    @given(betas)
    def test_sign_structure(self, beta):
        p = np.linspace(1e-4, 1 - 1e-4, 1000)
        dg, d2g = magnitude_derivatives(p, beta)
        assert np.all(dg < 0)
        if beta > 1:
            assert np.all(d2g > 0)
        elif beta < 1:
            assert np.all(d2g < 0)
        else:
            assert np.all(d2g == 0)


class TestLogitCurvature:
    def test_point_values(self):
        d2, d3 = logit_curvature(0.5, 1.0)
        assert d2 == 0.25 and d3 == 0.0
        d2, d3 = logit_curvature(0.25, 3.0)
        assert d2 == pytest.approx(0.25, rel=1e-12) and d3 == pytest.approx(0.0, abs=1e-15)
        d2, d3 = logit_curvature(0.1, 1.0)
        assert d2 == pytest.approx(0.09, rel=1e-12)
        assert d3 == pytest.approx(0.072, rel=1e-12)

    @given(betas)
    def test_curvature_positive_and_sign_of_third(self, beta):
        p = np.linspace(1e-4, 1 - 1e-4, 1000)
        d2, d3 = logit_curvature(p, beta)
        assert np.all(d2 > 0)
        star = inflection_point(beta)
        assert np.all(d3[p < star - 1e-9] > 0)
        assert np.all(d3[p > star + 1e-9] < 0)


class TestInflectionPoint:
    def test_values(self):
        assert inflection_point(1.0) == 0.5
        assert inflection_point(0.01) == pytest.approx(0.9900990099009901, rel=1e-12)
        assert inflection_point(1e6) == pytest.approx(9.99999000001e-07, rel=1e-12)

    def test_curvature_peaks_there_at_one_quarter(self):
        for beta in (0.1, 1.0, 3.0, 10.0):
            star = inflection_point(beta)
            assert logit_curvature(star, beta)[0] == pytest.approx(0.25, abs=1e-12)

    def test_domain(self):
        with pytest.raises(ValueError):
            inflection_point(-1.0)


class TestLocalLipschitzBound:
    def test_half_interval_closed_forms(self):
        assert local_lipschitz_bound(0.1, 0.0, 0.5) == pytest.approx(0.1 / 1.21, rel=1e-12)
        assert local_lipschitz_bound(2.0, 0.0, 0.5) == 0.25
        # small-beta branch equals beta/(beta+1)^2 exactly in float64
        for b in (0.01, 0.1, 0.5, 0.99):
            assert local_lipschitz_bound(b, 0.0, 0.5) == b / (b + 1.0) ** 2
        for b in (1.0, 2.0, 7.0):
            assert local_lipschitz_bound(b, 0.0, 0.5) == 0.25

    def test_interval_excluding_peak_uses_boundary(self):
        # peak for beta=0.1 sits at 1/1.1 ~ 0.909, outside [0, 0.01]
        assert local_lipschitz_bound(0.1, 0.0, 0.01) == pytest.approx(
            0.0010080634896714221, rel=1e-12
        )

    def test_matches_grid_maximum(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            beta = float(rng.uniform(0.02, 30.0))
            lo, hi = sorted(rng.uniform(0.0, 1.0, 2))
            if hi - lo < 1e-3:
                continue
            bound = local_lipschitz_bound(beta, lo, hi)
            grid = np.linspace(lo + 1e-12, hi - 1e-12, 20_001)
            dense = (beta * grid * (1 - grid) / (1 + (beta - 1) * grid) ** 2).max()
            assert bound >= dense - 1e-9
            assert bound == pytest.approx(dense, abs=1e-6)

    def test_range_validation(self):
        with pytest.raises(ValueError):
            local_lipschitz_bound(1.0, 0.5, 0.5)
        with pytest.raises(ValueError):
            local_lipschitz_bound(1.0, -0.1, 0.5)
        with pytest.raises(ValueError):
            local_lipschitz_bound(1.0, 0.2, 1.1)


class TestSuggestedLearningRate:
    def test_values(self):
        assert suggested_learning_rate(1.0, 0.0, 0.5) == 4.0
        assert suggested_learning_rate(0.1, 0.0, 0.5) == pytest.approx(12.1, rel=1e-12)
        assert suggested_learning_rate(5.0, 0.0, 0.5) == 4.0

    @given(betas)
    def test_descent_condition(self, beta):
        eta = suggested_learning_rate(beta, 0.0, 0.5)
        L = local_lipschitz_bound(beta, 0.0, 0.5)
        assert 0.5 * L * eta**2 - eta < 0.0
        assert 0.5 * L * (1.999 * eta) ** 2 - 1.999 * eta < 0.0


class TestParamValidation:
    def test_loss_params(self):
        with pytest.raises(ValueError):
            LossParams(beta=0.0)
        with pytest.raises(ValueError):
            LossParams(beta=-3.0)
        with pytest.raises(ValueError):
            LossParams(beta=1.0, tau=0.0)
        with pytest.raises(ValueError):
            LossParams(beta=math.inf)

    def test_labeled_logits(self):
        with pytest.raises(ValueError):
            LabeledLogits(np.array([1.0]), 0)
        with pytest.raises(ValueError):
            LabeledLogits(np.array([1.0, np.nan]), 0)
        with pytest.raises(ValueError):
            LabeledLogits(np.array([1.0, 2.0]), 2)
        with pytest.raises(ValueError):
            LabeledLogits(np.array([1.0, 2.0]), -1)
