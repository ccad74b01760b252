import numpy as np
import pytest

from qdblink import (CANONICAL_SETTINGS, DetectorModel, PulseTrain, RateSet,
                     ValidationError, bell_phi_plus, correlate,
                     choose_norm_window, fit_auto, g2_auto_model, projector,
                     pulse_bin, simulate_intensity_trace,
                     simulate_polarized_pairs, simulate_stream, steady_state,
                     werner_state)

BASE = dict(p_xx=0.8, gamma_xx=8.0, gamma_x=4.0, p_c=0.8, gamma_c=4.0)


def rates(gc, cg, **kw):
    return RateSet(gamma_gc=gc, gamma_cg=cg, **{**BASE, **kw})


class TestSimulateStream:
    def test_seed_reproducibility(self):
        det = DetectorModel(efficiency=0.05, dark_rate_cps=200.0,
                            jitter_sigma_ps=60.0)
        a = simulate_stream(rates(1.0, 1.0), det=det, duration_s=0.02, seed=3)
        b = simulate_stream(rates(1.0, 1.0), det=det, duration_s=0.02, seed=3)
        c = simulate_stream(rates(1.0, 1.0), det=det, duration_s=0.02, seed=4)
        assert np.array_equal(a.timestamps, b.timestamps)
        assert np.array_equal(a.channels, b.channels)
        assert not np.array_equal(a.timestamps, c.timestamps)

    def test_sorted_and_in_range(self):
        st = simulate_stream(rates(1.0, 1.0),
                             det=DetectorModel(efficiency=0.05,
                                               jitter_sigma_ps=100.0),
                             duration_s=0.05, seed=1)
        assert np.all(np.diff(st.timestamps) >= 0)
        assert st.timestamps[0] >= 0
        assert st.timestamps[-1] <= st.duration_ps

    def test_never_charged_emits_no_trion(self):
        st = simulate_stream(rates(0.0, 1.0),
                             det=DetectorModel(efficiency=0.2),
                             duration_s=0.02, seed=2)
        counts = st.counts()
        assert counts["XPLUS"] == 0
        assert counts["X"] > 0

    def test_deterministic_excitation_one_pair_per_pulse(self):
        # always neutral, unit pump and detection: exactly one XX and one X
        # record per pulse
        st = simulate_stream(rates(0.0, 1.0, p_xx=1.0), duration_s=0.001, seed=5)
        n_pulses = st.metadata["n_pulses"]
        counts = st.counts()
        assert counts["X"] == n_pulses
        assert counts["XX"] == n_pulses
        xx = st.times("XX")
        x = st.times("X")
        assert np.array_equal(xx // 12500, np.arange(n_pulses))
        assert np.array_equal(x // 12500, np.arange(n_pulses))
        # cascade ordering within every pulse (ties possible after ps rounding)
        assert np.all(x >= xx)

    def test_mean_rate_matches_steady_state(self):
        # >= 1e7 pulses, 3 sigma Poisson band
        det = DetectorModel(efficiency=0.01)
        st = simulate_stream(rates(0.5, 1.0), det=det, duration_s=0.2, seed=6)
        expected = steady_state(rates(0.5, 1.0), 80e6, 0.01).rate_x * 0.2
        observed = st.counts()["X"]
        assert abs(observed - expected) < 3.0 * np.sqrt(expected)

    def test_charged_pulse_fraction(self):
        st = simulate_stream(rates(0.5, 1.0),
                             det=DetectorModel(efficiency=0.001),
                             duration_s=0.5, seed=7)
        md = st.metadata
        fraction = md["pulses_charged"] / (md["pulses_charged"] + md["pulses_neutral"])
        assert fraction == pytest.approx(1.0 / 3.0, rel=0.01)

    def test_dead_time_filter(self):
        det = DetectorModel(efficiency=0.3, dead_time_ps=30000.0)
        st = simulate_stream(rates(0.0, 1.0), det=det, duration_s=0.01, seed=8)
        for channel in ("X", "XX"):
            t = st.times(channel)
            assert t.size > 100
            assert np.diff(t).min() >= 30000

    def test_dark_counts_only_when_requested(self):
        det = DetectorModel(efficiency=0.0, dark_rate_cps=5000.0)
        st = simulate_stream(rates(1.0, 1.0), det=det, duration_s=0.1, seed=9)
        total = len(st)
        assert abs(total - 1500.0) < 4.0 * np.sqrt(1500.0)  # 3 channels x 500

    def test_duration_shorter_than_pulse_period_rejected(self):
        with pytest.raises(ValidationError):
            simulate_stream(rates(1.0, 1.0), duration_s=1e-12, seed=0)

    def test_degenerate_telegraph_rejected(self):
        with pytest.raises(ValidationError):
            simulate_stream(rates(0.0, 0.0), duration_s=0.01, seed=0)

    def test_pulse_binned_g2_matches_model(self):
        # Monte-Carlo cross-check of the bunching model value at tau = 1 us
        st = simulate_stream(rates(0.75, 0.75),
                             det=DetectorModel(efficiency=0.02),
                             duration_s=2.0, seed=10)
        hist = correlate(st, "X", "X", tau_max_ps=8e6, bin_width_ps=12500)
        window = choose_norm_window(hist, 12500)
        peaks = pulse_bin(hist, 12500, norm_window_ps=window)
        at_1us = peaks.pulse_index == 80
        assert at_1us.sum() == 1
        sigma = 1.0 / np.sqrt(peaks.weight[at_1us][0])
        model = g2_auto_model(1.0, beta=1.0, gamma_b=1.5)
        assert abs(peaks.g2[at_1us][0] - model) < 3.0 * sigma


class TestIntensityTrace:
    def test_poisson_counts_in_bins(self):
        st = simulate_stream(rates(0.0, 1.0),
                             det=DetectorModel(efficiency=0.003),
                             duration_s=2.0, seed=11)
        starts, counts = simulate_intensity_trace(st, bin_ms=3.0, channel="X")
        assert starts.size == counts.size == 666
        mean_expected = st.rate_cps("X") * 3e-3
        assert counts.mean() == pytest.approx(mean_expected, rel=0.05)
        # Poisson: variance close to the mean
        assert counts.var() == pytest.approx(mean_expected, rel=0.25)

    def test_slow_telegraph_is_overdispersed(self):
        st = simulate_stream(rates(1e-4, 1e-4),
                             det=DetectorModel(efficiency=0.003),
                             duration_s=4.0, seed=12)
        _, counts = simulate_intensity_trace(st, bin_ms=0.3, channel="X")
        # on-off switching at millisecond scale: variance >> mean
        assert counts.var() > 10.0 * counts.mean()

    def test_empty_channel_gives_empty_trace(self):
        st = simulate_stream(rates(0.0, 1.0), duration_s=0.001, seed=13)
        starts, counts = simulate_intensity_trace(st, bin_ms=0.0001,
                                                  channel="XPLUS")
        assert starts.size == 0 and counts.size == 0

    def test_bad_bin_rejected(self):
        st = simulate_stream(rates(0.0, 1.0), duration_s=0.001, seed=14)
        with pytest.raises(ValidationError):
            simulate_intensity_trace(st, bin_ms=0.0)
        with pytest.raises(ValidationError):
            simulate_intensity_trace(st, bin_ms=10.0)


class TestPolarizedPairs:
    def test_orthogonal_projector_yields_zero(self):
        psi = bell_phi_plus()
        rho = np.outer(psi, psi.conj())
        hv = [s for s in CANONICAL_SETTINGS if s.name == "HV"]
        records = simulate_polarized_pairs(rho, hv, 10000, seed=1)
        assert records[0].counts == 0

    def test_maximally_mixed_quarter(self):
        rho = np.eye(4, dtype=complex) / 4.0
        records = simulate_polarized_pairs(rho, CANONICAL_SETTINGS, 40000, seed=2)
        for record in records:
            assert abs(record.counts - 10000.0) < 4.0 * np.sqrt(10000.0)

    def test_werner_hh_mean(self):
        p = 0.55
        records = simulate_polarized_pairs(
            werner_state(p),
            [s for s in CANONICAL_SETTINGS if s.name == "HH"],
            100000, seed=3)
        mean = 100000 * (p / 2.0 + (1.0 - p) / 4.0)
        assert abs(records[0].counts - mean) < 4.0 * np.sqrt(mean)

    def test_unphysical_state_rejected(self):
        rho = np.diag([1.5, -0.5, 0.0, 0.0]).astype(complex)
        with pytest.raises(ValidationError):
            simulate_polarized_pairs(rho, CANONICAL_SETTINGS, 100, seed=4)

    def test_projector_trace_consumed(self):
        # sanity link between the sampler and the projector normalisation
        for setting in CANONICAL_SETTINGS:
            assert np.trace(projector(setting)).real == pytest.approx(1.0)
