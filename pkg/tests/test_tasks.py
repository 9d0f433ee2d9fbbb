import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustrc.errors import ContractViolation, UndefinedRatio
from robustrc.tasks import (
    NARMA,
    Stream,
    aggregate_log_gamma,
    aggregate_nmse,
    delayed_inputs,
    gen_stream,
    mc_profile,
    mc_tau,
    memory_capacity,
    narma10,
    nmse,
    robustness_ratio,
    to_narma_input,
)


def narma_oracle(u, limit=10.0):
    """y(t+1) = 0.3 y(t) + 0.05 y(t) sum_{i=0..9} y(t-i) + 1.5 u(t-9) u(t) + 0.1.

    Time starts at 1; inputs u(1..n) produce outputs y(2..n+1); anything
    earlier is zero.
    """
    us = {t + 1: float(x) for t, x in enumerate(u)}
    ys = {}
    out = []
    for t in range(0, len(u)):
        yt = ys.get(t, 0.0)
        acc = 0.0
        for i in range(10):
            acc = acc + ys.get(t - i, 0.0)
        val = 0.3 * yt + 0.05 * yt * acc + 1.5 * us.get(t - 9, 0.0) * us.get(t, 0.0) + 0.1
        if abs(val) > limit:
            return out, True
        ys[t + 1] = val
        out.append(val)
    return out, False


class TestStreams:
    def test_rejects_empty(self):
        with pytest.raises(ContractViolation):
            gen_stream(0, np.random.default_rng())

    def test_moments(self):
        s = gen_stream(200_000, np.random.default_rng(1)).values
        assert s.min() >= -1 and s.max() <= 1
        # U(-1, 1): mean 0, variance 1/3
        assert abs(s.mean()) < 4 * math.sqrt(1 / 3 / s.size)
        assert abs(s.var() - 1 / 3) < 0.005

    def test_reproducible(self):
        a = gen_stream(100, np.random.default_rng(5)).values
        b = gen_stream(100, np.random.default_rng(5)).values
        assert a.tobytes() == b.tobytes()

    def test_domain_checked(self):
        with pytest.raises(ContractViolation):
            Stream(np.array([1.5]))
        with pytest.raises(ContractViolation):
            Stream(np.array([0.6]), NARMA)

    def test_narma_mapping(self):
        s = Stream(np.array([-1.0, 0.0, 1.0]))
        np.testing.assert_array_equal(to_narma_input(s).values, [0.0, 0.25, 0.5])
        np.testing.assert_array_equal(to_narma_input(s, "literal").values, [0.25, 0.5, 0.75])
        with pytest.raises(ContractViolation):
            to_narma_input(s, "other")


class TestNarma10:
    def test_zero_input_start(self):
        y = narma10(np.zeros(20)).values
        assert y[0] == 0.1
        assert y[1] == pytest.approx(0.1305, abs=1e-15)

    def test_zero_input_fixed_point(self):
        # constant input 0: y* = 0.3 y* + 0.5 y*^2 + 0.1, smaller root
        y = narma10(np.zeros(2000)).values
        assert y[-1] == pytest.approx(0.7 - math.sqrt(0.29), abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_oracle_bitwise(self, seed):
        g = np.random.default_rng(seed)
        u = to_narma_input(gen_stream(3000, g))
        series = narma10(u)
        expected, diverged = narma_oracle(u.values)
        assert not series.diverged and not diverged
        assert series.values.tobytes() == np.array(expected).tobytes()

    def test_bounded_on_interval_mapping(self):
        for seed in range(20):
            u = to_narma_input(gen_stream(4000, np.random.default_rng(seed)))
            s = narma10(u)
            assert not s.diverged
            assert np.all(s.values > 0) and np.all(s.values < 1.5)

    def test_divergence_flag(self):
        u = Stream(np.full(200, 0.75), "shifted")
        series = narma10(u)
        _, oracle_div = narma_oracle(u.values)
        assert series.diverged and oracle_div
        at = series.diverged_at
        assert at > 0
        assert np.all(np.isfinite(series.values[:at]))
        assert np.all(np.isnan(series.values[at:]))
        assert abs(series.values[at - 1]) <= 10

    def test_short_input(self):
        with pytest.raises(ContractViolation):
            narma10(np.zeros(5))


class TestMemoryCapacity:
    def test_perfect_delay(self):
        u = np.random.default_rng(0).uniform(-1, 1, 1000)
        assert mc_tau(u, u[-900 - 3:-3], 3) == pytest.approx(1.0, abs=1e-12)

    def test_affine_prediction(self):
        u = np.random.default_rng(0).uniform(-1, 1, 1000)
        assert mc_tau(u, -2.5 * u[95:995] + 7.0, 5) == pytest.approx(1.0, abs=1e-12)

    def test_independent_predictor(self):
        g = np.random.default_rng(1)
        u = g.uniform(-1, 1, 20000)
        assert mc_tau(u, g.uniform(-1, 1, 19000), 4) < 0.01

    def test_zero_history_before_start(self):
        u = np.arange(1.0, 6.0)
        # delay 3 over the whole sequence: target is (0, 0, 0, 1, 2)
        target = np.array([0.0, 0.0, 0.0, 1.0, 2.0])
        assert mc_tau(u, target, 3) == pytest.approx(1.0)
        np.testing.assert_array_equal(delayed_inputs(u, 0, 5, 3)[:, 2], target)

    def test_flat_prediction_is_zero(self):
        u = np.random.default_rng(2).uniform(-1, 1, 100)
        assert mc_tau(u, np.ones(50), 1) == 0.0

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 100) | st.floats(-100, -0.01),
           st.floats(-1e3, 1e3), st.integers(0, 30))
    def test_affine_invariance(self, seed, a, b, tau):
        g = np.random.default_rng(seed)
        u = g.uniform(-1, 1, 400)
        y = 0.6 * np.roll(u, tau)[100:] + 0.4 * g.uniform(-1, 1, 300)
        assert mc_tau(u, a * y + b, tau) == pytest.approx(mc_tau(u, y, tau), abs=1e-9)

    def test_delayed_inputs_columns(self):
        u = np.random.default_rng(3).uniform(-1, 1, 50)
        d = delayed_inputs(u, 10, 50, 8)
        for tau in range(1, 9):
            np.testing.assert_array_equal(d[:, tau - 1], u[10 - tau:50 - tau])

    def test_delay_line_capacity(self):
        # an ideal d-tap delay line recalls exactly d delays
        g = np.random.default_rng(4)
        u = g.uniform(-1, 1, 3000)
        targets = delayed_inputs(u, 500, 3000, 40)
        preds = np.zeros_like(targets)
        preds[:, :12] = targets[:, :12]
        assert memory_capacity(mc_profile(targets, preds)) == pytest.approx(12.0, abs=1e-12)

    def test_profile_shape_mismatch(self):
        with pytest.raises(ContractViolation):
            mc_profile(np.zeros((5, 2)), np.zeros((5, 3)))


class TestNMSE:
    def test_perfect(self):
        y = np.random.default_rng(0).standard_normal(100)
        rep = nmse(y, y)
        assert rep.value == 0.0 and not rep.clamped

    def test_mean_predictor_is_one(self):
        t = np.random.default_rng(0).standard_normal(1000)
        rep = nmse(np.full_like(t, t.mean()), t)
        assert rep.value == pytest.approx(1.0, abs=1e-12)

    def test_hand_computed(self):
        rep = nmse(np.array([1.0, 2.0, 2.0, 4.0]), np.array([1.0, 2.0, 3.0, 4.0]))
        assert rep.value == pytest.approx(0.25 / 1.25)

    def test_clamp(self):
        t = np.array([0.0, 1.0, 0.0, 1.0])
        rep = nmse(-5 * t + 3, t)
        assert rep.value == 1.0 and rep.clamped

    def test_zero_variance_target(self):
        with pytest.raises(ContractViolation):
            nmse(np.zeros(4), np.ones(4))


class TestRatiosAndAggregates:
    def test_mc_ratio(self):
        assert robustness_ratio(19.74, 17.15, "MC") == pytest.approx(1.151, abs=5e-4)

    def test_nmse_ratio(self):
        assert robustness_ratio(0.19, 0.16, "NMSE") == pytest.approx(0.842, abs=5e-4)

    def test_zero_denominator(self):
        with pytest.raises(UndefinedRatio):
            robustness_ratio(1.0, 0.0, "MC")
        with pytest.raises(UndefinedRatio):
            robustness_ratio(0.0, 1.0, "NMSE")

    def test_unknown_kind(self):
        with pytest.raises(ContractViolation):
            robustness_ratio(1.0, 1.0, "R2")

    def test_all_ones(self):
        grid = np.ones((9, 9))
        assert aggregate_nmse(grid) == 81.0
        assert aggregate_log_gamma(grid) == 0.0

    def test_log_gamma_sign(self):
        grid = np.full((3, 3), 0.5)
        assert aggregate_log_gamma(grid) == pytest.approx(9 * math.log(0.5))

    @pytest.mark.parametrize("grid", [np.ones(4), np.ones((0, 3)), np.array([[1.0, np.nan]])])
    def test_incomplete_grid(self, grid):
        with pytest.raises(ContractViolation):
            aggregate_nmse(grid)

    def test_nonpositive_gamma(self):
        with pytest.raises(ContractViolation):
            aggregate_log_gamma(np.array([[1.0, 0.0]]))
