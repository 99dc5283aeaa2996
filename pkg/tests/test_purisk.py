import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from puseg import purisk
from puseg.purisk import (
    ASCENT,
    DESCENT,
    loss_neg,
    loss_pos,
    pn_risk,
    pu_risk,
    pu_risk_grad,
)

LN2 = math.log(2.0)


class TestLosses:
    def test_value_at_zero(self):
        assert loss_pos(0.0) == pytest.approx(LN2, abs=1e-12)
        assert loss_neg(0.0) == pytest.approx(LN2, abs=1e-12)

    @pytest.mark.parametrize("z", [-3.0, 0.5, 10.0])
    def test_reflection_identity(self, z):
        assert loss_pos(z) == pytest.approx(loss_neg(-z), abs=1e-12)

    def test_no_overflow_at_large_logit(self):
        assert loss_neg(50.0) == pytest.approx(50.0, abs=1e-6)
        assert loss_pos(50.0) == pytest.approx(0.0, abs=1e-12)
        assert np.isfinite(loss_neg(1e4))

    @given(st.floats(-700, 700))
    def test_softplus_identity(self, z):
        # l+(z) + z == l-(z)
        assert abs(loss_pos(z) + z - loss_neg(z)) <= 1e-12 * max(1.0, abs(z))


class TestPnRisk:
    def test_constant_scores(self):
        for pi in (0.1, 0.5, 0.9):
            assert pn_risk(np.zeros(4), np.zeros(7), pi) == pytest.approx(LN2, abs=1e-12)

    def test_perfect_separation_limit(self):
        value = pn_risk(np.full(3, 500.0), np.full(3, -500.0), 0.5)
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_hand_example(self):
        # 2 positives at {0, 1}, 1 negative at {-1}, pi = 0.25
        expected = 0.25 * np.mean([loss_pos(0.0), loss_pos(1.0)]) + 0.75 * loss_neg(-1.0)
        assert pn_risk(np.array([0.0, 1.0]), np.array([-1.0]), 0.25) == pytest.approx(
            expected, abs=1e-12
        )

    def test_empty_sets_rejected(self):
        with pytest.raises(ValueError):
            pn_risk(np.array([]), np.zeros(3), 0.5)
        with pytest.raises(ValueError):
            pn_risk(np.zeros(3), np.array([]), 0.5)


class TestPuRisk:
    def test_constant_predictor_identity(self):
        for pi in (0.1, 0.3, 0.7):
            r = pu_risk(np.zeros(5), np.zeros(9), pi)
            assert r.pos_risk == pytest.approx(pi * LN2, abs=1e-12)
            assert r.neg_risk == pytest.approx((1 - pi) * LN2, abs=1e-12)
            assert r.total_pu == pytest.approx(LN2, abs=1e-12)
            assert r.mode == DESCENT

    def test_overfit_batch_goes_negative(self):
        r = pu_risk(np.full(4, 30.0), np.full(10, -30.0), 0.3)
        assert r.neg_risk == pytest.approx(-9.0, abs=1e-6)
        assert r.mode == ASCENT

    def test_pu_equals_pn_on_finite_population(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            n = int(rng.integers(5, 200))
            scores = rng.normal(scale=3.0, size=n)
            n_pos = int(rng.integers(1, n))
            pi = n_pos / n
            pu = pu_risk(scores[:n_pos], scores, pi)
            pn = pn_risk(scores[:n_pos], scores[n_pos:], pi)
            assert abs(pu.total_pu - pn) <= 1e-10

    def test_linear_in_prior(self):
        rng = np.random.default_rng(3)
        zp, zu = rng.normal(size=6), rng.normal(size=11)
        pis = (0.2, 0.45, 0.7)
        totals = [pu_risk(zp, zu, pi).total_pu for pi in pis]
        # midpoint matches linear interpolation between the endpoints
        expected_mid = totals[0] + (totals[2] - totals[0]) * (pis[1] - pis[0]) / (pis[2] - pis[0])
        assert totals[1] == pytest.approx(expected_mid, abs=1e-12)

    def test_total_decomposition(self):
        rng = np.random.default_rng(5)
        r = pu_risk(rng.normal(size=4), rng.normal(size=9), 0.3)
        assert r.total_pu == pytest.approx(r.pos_risk + r.neg_risk, abs=1e-12)
        if r.mode == DESCENT:
            assert r.total_pu >= r.pos_risk


class TestGradients:
    @staticmethod
    def objective(zp, zu, pi, mode):
        r = pu_risk(zp, zu, pi)
        if mode == ASCENT:
            return -r.neg_risk
        return r.total_pu

    @pytest.mark.parametrize("mode", [DESCENT, ASCENT])
    def test_finite_difference(self, mode):
        rng = np.random.default_rng(11)
        zp, zu = rng.normal(size=4), rng.normal(size=6)
        pi = 0.35
        up_p, up_u = pu_risk_grad(zp, zu, pi, mode)
        eps = 1e-6
        for i in range(len(zp)):
            d = np.zeros_like(zp)
            d[i] = eps
            fd = (self.objective(zp + d, zu, pi, mode) - self.objective(zp - d, zu, pi, mode)) / (2 * eps)
            assert abs(fd - up_p[i]) / max(1.0, abs(up_p[i])) <= 1e-6
        for i in range(len(zu)):
            d = np.zeros_like(zu)
            d[i] = eps
            fd = (self.objective(zp, zu + d, pi, mode) - self.objective(zp, zu - d, pi, mode)) / (2 * eps)
            assert abs(fd - up_u[i]) / max(1.0, abs(up_u[i])) <= 1e-6

    def test_descent_unlabeled_weight(self):
        zu = np.array([0.3, -1.2])
        _, up_u = pu_risk_grad(np.array([0.0]), zu, 0.5, DESCENT)
        from scipy.special import expit

        assert np.allclose(up_u, expit(zu) / len(zu), atol=1e-12)

    def test_ascent_positive_term_sign(self):
        zp = np.array([2.0, -0.5])
        up_p, up_u = pu_risk_grad(zp, np.array([0.0]), 0.4, ASCENT)
        from scipy.special import expit

        assert np.allclose(up_p, 0.4 * expit(zp) / len(zp), atol=1e-12)
        assert np.all(up_u <= 0.0)

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            pu_risk_grad(np.zeros(1), np.zeros(1), 0.5, "sideways")


class TestPriorClamp:
    def test_clamped_range(self):
        assert purisk.clamp_prior(0.0) == pytest.approx(1e-4)
        assert purisk.clamp_prior(1.0) == pytest.approx(1.0 - 1e-4)
        assert purisk.clamp_prior(0.3) == 0.3

    def test_collapsed_prior_keeps_positive_risk(self):
        r = pu_risk(np.zeros(3), np.zeros(3), 0.0)
        assert r.pos_risk > 0.0
