import numpy as np
import pytest

from qdblink import (GateLaserConfig, RateSet, ValidationError, apply_gate,
                     decompose_rates, g2_auto_model, g2_cross_model,
                     steady_state)
from helpers import telegraph_occupation

RATES = dict(p_xx=0.8, gamma_xx=8.0, gamma_x=4.0, p_c=0.8, gamma_c=4.0)

# on-off ratio reproducing an excitation efficiency of 25.57% at p_xx = 1
BETA_MIN_ANCHOR = 0.2557 / (1.0 - 0.2557)


def make_rates(gamma_gc, gamma_cg, **kw):
    return RateSet(gamma_gc=gamma_gc, gamma_cg=gamma_cg, **{**RATES, **kw})


class TestRateSet:
    def test_rejects_negative_rate(self):
        with pytest.raises(ValidationError):
            make_rates(-0.1, 1.0)

    def test_rejects_bad_probability(self):
        with pytest.raises(ValidationError):
            make_rates(1.0, 1.0, p_xx=1.5)

    def test_rate_separation_warning(self):
        with pytest.warns(UserWarning, match="non-interruption"):
            make_rates(10.0, 10.0, gamma_x=0.001, gamma_xx=0.001, gamma_c=0.001)

    def test_defect_rates_add_to_effective_rates(self):
        rs = make_rates(0.5, 1.0, gamma_h_d=0.2, gamma_e_d=0.1)
        assert rs.charge_rate == 0.7
        assert rs.neutralize_rate == 1.1


class TestSteadyState:
    def test_symmetric_telegraph(self):
        ss = steady_state(make_rates(1.0, 1.0))
        assert ss.beta == 1.0
        assert ss.p_neutral == 0.5
        assert ss.gamma_b == 2.0

    def test_occupation_against_dwell_time_oracle(self):
        # independent check: direct alternating-dwell simulation
        ss = steady_state(make_rates(0.5, 1.5))
        assert ss.beta == 3.0
        assert ss.gamma_b == 2.0
        occupation = telegraph_occupation(
            np.random.default_rng(7), rate_01=0.5, rate_10=1.5,
            n_switches=2_000_000)
        assert ss.p_neutral == pytest.approx(0.75, rel=0.002)
        assert ss.p_neutral == pytest.approx(occupation, rel=0.01)

    def test_excitation_efficiency_anchor(self):
        rs = make_rates(1.0, BETA_MIN_ANCHOR, p_xx=1.0)
        ss = steady_state(rs)
        assert ss.eta_ex == pytest.approx(0.2557, abs=1e-4)
        assert ss.beta == pytest.approx(0.3436, abs=5e-4)

    def test_detected_rates(self):
        ss = steady_state(make_rates(0.5, 1.0), rep_rate_hz=80e6, detector_eff=0.5)
        assert ss.rate_x == pytest.approx(80e6 * 0.8 * (2 / 3) * 0.5)
        assert ss.rate_xplus == pytest.approx(80e6 * 0.8 * (1 / 3) * 0.5)
        assert ss.r_x + ss.r_xplus == 1.0
        assert ss.n_h_st == ss.p_charged

    def test_degenerate_rates_rejected(self):
        with pytest.raises(ValidationError, match="undefined"):
            steady_state(make_rates(0.0, 0.0))


class TestG2AutoModel:
    def test_uncorrelated_limit(self):
        assert g2_auto_model(1e6, beta=2.0, gamma_b=1.5) == pytest.approx(1.0)

    def test_zero_delay(self):
        assert g2_auto_model(0.0, beta=2.0, gamma_b=1.5) == 1.5

    def test_frozen_value(self):
        # 1 + exp(-1.5); the Monte-Carlo cross-check lives in test_simulate
        assert g2_auto_model(1.0, beta=1.0, gamma_b=1.5) == pytest.approx(
            1.2231301601484298, abs=1e-12)

    def test_monotone_and_amplitude(self):
        for beta in (0.3, 1.0, 4.0):
            tau = np.linspace(0.0, 20.0, 400)
            g2 = g2_auto_model(tau, beta=beta, gamma_b=1.5)
            assert g2[0] == pytest.approx(1.0 + 1.0 / beta)
            assert np.all(np.diff(g2) <= 0)
            assert g2[-1] == pytest.approx(1.0, abs=1e-6)

    def test_domain_error(self):
        with pytest.raises(ValidationError):
            g2_auto_model(1.0, beta=0.0, gamma_b=1.5)


class TestG2CrossModel:
    def test_zero_delay_vanishes(self):
        assert g2_cross_model(0.0, 1.0, 0.01, 0.01) == 0.0

    def test_uncorrelated_limit(self):
        assert g2_cross_model(500.0, 1.0, 0.01, 0.01) == pytest.approx(1.0)
        assert g2_cross_model(-500.0, 1.0, 0.01, 0.01) == pytest.approx(1.0)

    def test_frozen_value(self):
        # (1 - exp(-2)) * (1 - exp(-200))
        assert g2_cross_model(2.0, 1.0, 0.01, 0.01) == pytest.approx(
            0.8646647167633873, abs=1e-12)

    def test_continuous_at_zero(self):
        eps = 1e-7
        assert abs(g2_cross_model(eps, 1.0, 0.01, 0.02)) < 1e-4
        assert abs(g2_cross_model(-eps, 1.0, 0.01, 0.02)) < 1e-4

    def test_symmetric_for_equal_recovery(self):
        tau = np.linspace(-5, 5, 101)
        g2 = g2_cross_model(tau, 0.8, 0.05, 0.05)
        assert np.allclose(g2, g2[::-1])

    def test_asymmetric_for_unequal_recovery(self):
        assert g2_cross_model(0.05, 1.0, 0.01, 0.2) != pytest.approx(
            g2_cross_model(-0.05, 1.0, 0.01, 0.2))

    def test_domain_errors(self):
        with pytest.raises(ValidationError):
            g2_cross_model(1.0, 0.0, 0.01, 0.01)
        with pytest.raises(ValidationError):
            g2_cross_model(1.0, 1.0, -0.01, 0.01)


class TestDecomposeRates:
    def test_symmetric_split(self):
        assert decompose_rates(1.0, 2.0) == (1.0, 1.0)

    def test_round_trip_with_steady_state(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            gc, cg = rng.uniform(0.05, 3.0, 2)
            ss = steady_state(make_rates(gc, cg))
            gc2, cg2 = decompose_rates(ss.beta, ss.gamma_b)
            assert gc2 == pytest.approx(gc, rel=1e-12)
            assert cg2 == pytest.approx(cg, rel=1e-12)
            assert gc2 + cg2 == pytest.approx(ss.gamma_b, rel=1e-15)

    def test_efficiency_anchor_split(self):
        gc, _ = decompose_rates(BETA_MIN_ANCHOR, 1.0)
        assert gc == pytest.approx(0.7443, abs=5e-4)

    def test_domain_errors(self):
        with pytest.raises(ValidationError):
            decompose_rates(0.0, 1.0)
        with pytest.raises(ValidationError):
            decompose_rates(1.0, 0.0)


class TestApplyGate:
    def test_zero_power_is_identity(self):
        base = make_rates(0.5, 1.0)
        gate = GateLaserConfig(738.0, 0.0, map_gc=0.01, map_cg=0.01,
                               sat_power_nw=200.0)
        assert apply_gate(base, gate) is base

    def test_doubling_algebra_at_saturation_power(self):
        base = make_rates(0.5, 1.0)
        map_cg = 2.0 * base.gamma_cg / 200.0  # doubles gamma_cg at P = sat
        gate = GateLaserConfig(738.0, 200.0, map_gc=0.0, map_cg=map_cg,
                               sat_power_nw=200.0)
        out = apply_gate(base, gate)
        assert out.gamma_cg == pytest.approx(2.0 * base.gamma_cg)
        assert out.gamma_gc == base.gamma_gc

    def test_power_sweep_saturates_monotonically(self):
        base = make_rates(1.0, 1.0)
        powers = np.array([0.0, 25.0, 50.0, 100.0, 200.0, 400.0, 1600.0, 2e4])
        levels = []
        for power in powers:
            gate = GateLaserConfig(738.0, power, map_gc=-0.0015, map_cg=0.0015,
                                   sat_power_nw=200.0)
            ss = steady_state(apply_gate(base, gate))
            levels.append(ss.p_neutral)
        levels = np.array(levels) / levels[0]
        assert np.all(np.diff(levels) > 0)
        # the last point sits close to the analytic plateau (P_eff -> sat)
        plateau = steady_state(make_rates(1.0 - 0.0015 * 200.0,
                                          1.0 + 0.0015 * 200.0)).p_neutral / 0.5
        assert levels[-1] == pytest.approx(plateau, rel=0.02)
        assert levels[-1] > 1.2

    def test_negative_increment_cannot_break_validation(self):
        base = make_rates(0.1, 1.0)
        gate = GateLaserConfig(738.0, 1e5, map_gc=-0.01, map_cg=0.0,
                               sat_power_nw=200.0)
        with pytest.raises(ValidationError):
            apply_gate(base, gate)
