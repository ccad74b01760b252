import csv

import numpy as np
import pytest

from qdblink import (RateSet, TimeTagStream, ValidationError, read_stream,
                     simulate_stream, write_stream)
from qdblink.cli import main
from qdblink.config import parse_config
from qdblink.stream import DetectorModel

BASE_CONFIG = """
[rates]
p_xx = 0.8
gamma_gc_per_us = 0.5
gamma_cg_per_us = 1.0

[pulses]
duration_s = 0.02

[detector]
efficiency = 0.05
"""


@pytest.fixture(scope="module")
def oracle_file(tmp_path_factory):
    """Small simulated stream with visible bunching, saved as .qtt."""
    rates = RateSet(p_xx=0.8, gamma_xx=8.0, gamma_x=4.0, p_c=0.8,
                    gamma_c=4.0, gamma_gc=0.5, gamma_cg=1.0)
    stream = simulate_stream(rates, det=DetectorModel(efficiency=0.05),
                             duration_s=1.0, seed=99)
    path = tmp_path_factory.mktemp("data") / "oracle.qtt"
    write_stream(path, stream)
    return path


class TestQttFile:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        t = np.sort(rng.integers(0, 10**9, 5000, dtype=np.int64))
        chans = rng.integers(0, 3, 5000).astype(np.uint8)
        order = np.lexsort((chans, t))
        st = TimeTagStream(chans[order], t[order], duration_ps=10**9,
                           rep_period_ps=12500)
        path = tmp_path / "a.qtt"
        write_stream(path, st)
        back = read_stream(path)
        assert np.array_equal(back.timestamps, st.timestamps)
        assert np.array_equal(back.channels, st.channels)
        assert back.duration_ps == st.duration_ps
        assert back.rep_period_ps == 12500
        path2 = tmp_path / "b.qtt"
        write_stream(path2, back)
        assert path.read_bytes() == path2.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.qtt"
        path.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(ValidationError, match="magic"):
            read_stream(path)

    def test_record_count_mismatch_rejected(self, tmp_path, oracle_file):
        data = bytearray(oracle_file.read_bytes())
        path = tmp_path / "trunc.qtt"
        path.write_bytes(bytes(data[:-9]))  # drop one record
        with pytest.raises(ValidationError, match="records"):
            read_stream(path)

    def test_truncated_header_rejected(self, tmp_path):
        path = tmp_path / "tiny.qtt"
        path.write_bytes(b"QTT1\x01")
        with pytest.raises(ValidationError, match="header"):
            read_stream(path)


class TestRunConfig:
    def test_defaults_parse(self):
        cfg = parse_config(BASE_CONFIG)
        assert cfg.rates.gamma_gc == 0.5
        assert cfg.duration_s == 0.02
        assert cfg.detector.channel_efficiency("X") == 0.05
        assert cfg.sweep is None

    def test_unknown_key_has_key_path(self):
        with pytest.raises(ValidationError, match="rates.gamma_gd_per_us"):
            parse_config("[rates]\ngamma_gd_per_us = 1.0\n")

    def test_unknown_section_rejected(self):
        with pytest.raises(ValidationError, match="laser"):
            parse_config("[laser]\npower = 1\n")

    def test_bad_value_reports_path(self):
        with pytest.raises(ValidationError, match="rates.p_xx"):
            parse_config("[rates]\np_xx = high\n")

    def test_per_channel_efficiency(self):
        cfg = parse_config("[detector]\nefficiency = 0.5\nefficiency_x = 0.1\n")
        assert cfg.detector.channel_efficiency("X") == 0.1
        assert cfg.detector.channel_efficiency("XX") == 0.5

    def test_sweep_validation(self):
        text = "[sweep]\nlabels = 1,2,3\ngamma_gc_per_us = 1,2\n"
        with pytest.raises(ValidationError, match="one value per label"):
            parse_config(text)

    def test_sweep_parses(self):
        text = ("[sweep]\nmode = wavelength\nlabels = 723,738\n"
                "gamma_gc_per_us = 1.5,0.5\ngamma_cg_per_us = 0.5,1.5\n")
        cfg = parse_config(text)
        assert cfg.sweep.labels == (723.0, 738.0)

    def test_bool_parsing(self):
        cfg = parse_config("[fit]\nexclude_central = no\n")
        assert cfg.fit.exclude_central is False


class TestCliSimulate:
    def test_deterministic_output(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text(BASE_CONFIG)
        out1, out2 = tmp_path / "a.qtt", tmp_path / "b.qtt"
        assert main(["simulate", "--config", str(config), "--out", str(out1),
                     "--seed", "7"]) == 0
        assert main(["simulate", "--config", str(config), "--out", str(out2),
                     "--seed", "7"]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_header_duration_contract(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text(BASE_CONFIG)
        out = tmp_path / "c.qtt"
        main(["simulate", "--config", str(config), "--out", str(out),
              "--duration-s", "0.01"])
        assert read_stream(out).duration_ps == 10**10

    def test_bad_config_key_exits_2(self, tmp_path, capsys):
        config = tmp_path / "bad.cfg"
        config.write_text("[rates]\ntypo_key = 1\n")
        code = main(["simulate", "--config", str(config),
                     "--out", str(tmp_path / "x.qtt")])
        assert code == 2
        assert "typo_key" in capsys.readouterr().err

    def test_missing_config_exits_4(self, tmp_path):
        code = main(["simulate", "--config", str(tmp_path / "none.cfg"),
                     "--out", str(tmp_path / "x.qtt")])
        assert code == 4


class TestCliCorrelate:
    def test_auto_mode_antibunched_central_bin(self, oracle_file, tmp_path):
        out = tmp_path / "auto.csv"
        assert main(["correlate", "--in", str(oracle_file), "--channels", "X",
                     "--mode", "auto", "--tau-max-us", "8", "--out",
                     str(out)]) == 0
        rows = [r for r in csv.reader(out.open()) if not r[0].startswith("#")]
        header, data = rows[0], rows[1:]
        centers = np.array([float(r[0]) for r in data])
        normalized = np.array([float(r[2]) for r in data])
        assert normalized[np.argmin(np.abs(centers))] < 0.05

    def test_cross_mode_dip_at_zero(self, oracle_file, tmp_path):
        out = tmp_path / "cross.csv"
        assert main(["correlate", "--in", str(oracle_file), "--channels",
                     "X,XPLUS", "--mode", "cross", "--tau-max-us", "8",
                     "--bin-width-ps", "25000", "--norm-window-us", "5",
                     "--out", str(out)]) == 0
        rows = [r for r in csv.reader(out.open()) if not r[0].startswith("#")]
        data = rows[1:]
        centers = np.array([float(r[0]) for r in data])
        normalized = np.array([float(r[2]) for r in data])
        central = np.abs(centers) < 1e5
        far = np.abs(centers) > 5e6
        assert normalized[central].mean() < 0.2
        assert normalized[far].mean() == pytest.approx(1.0, abs=0.05)

    def test_log_mode_flat_tail(self, oracle_file, tmp_path):
        out = tmp_path / "log.csv"
        assert main(["correlate", "--in", str(oracle_file), "--channels", "X",
                     "--mode", "log", "--tau-min-us", "1", "--tau-max-us",
                     "1000", "--out", str(out)]) == 0
        rows = [r for r in csv.reader(out.open()) if not r[0].startswith("#")]
        assert rows[0] == ["bin_center_ps", "counts", "normalized",
                           "bin_width_ps"]
        data = rows[1:]
        centers = np.array([float(r[0]) for r in data])
        normalized = np.array([float(r[2]) for r in data])
        tail = centers > 100e6  # beyond 100 us
        assert np.all(np.abs(normalized[tail] - 1.0) < 0.05)

    def test_missing_channel_lists_available(self, oracle_file, tmp_path,
                                             capsys):
        code = main(["correlate", "--in", str(oracle_file), "--channels",
                     "AUX", "--mode", "auto", "--out",
                     str(tmp_path / "x.csv")])
        assert code == 2
        err = capsys.readouterr().err
        assert "AUX" in err and "X" in err

    def test_missing_input_exits_4(self, tmp_path):
        assert main(["correlate", "--in", str(tmp_path / "no.qtt"),
                     "--out", str(tmp_path / "x.csv")]) == 4


class TestCliFit:
    def test_auto_fit_from_stream(self, oracle_file, tmp_path, capsys):
        report = tmp_path / "fit.txt"
        table = tmp_path / "fit.csv"
        code = main(["fit", "--in", str(oracle_file), "--model", "auto",
                     "--tau-max-us", "8", "--out-report", str(report),
                     "--out-csv", str(table)])
        assert code == 0
        text = capsys.readouterr().out
        assert "beta" in text and "gamma_b" in text
        assert report.exists()
        rows = list(csv.reader(table.open()))
        row = dict(zip(rows[0], rows[1]))
        assert float(row["beta"]) == pytest.approx(2.0, rel=0.15)
        assert float(row["gamma_b"]) == pytest.approx(1.5, rel=0.15)

    def test_saturation_fit_from_csv(self, tmp_path, capsys):
        path = tmp_path / "sat.csv"
        with path.open("w") as fh:
            fh.write("power_nw,intensity\n")
            for p in (0, 50, 100, 200, 400, 800):
                fh.write(f"{p},{1.0 + 0.3 * p / (p + 200.0)}\n")
        assert main(["fit", "--in", str(path), "--model", "saturation"]) == 0
        out = capsys.readouterr().out
        assert "p_sat" in out and "200" in out

    def test_flat_peaks_exit_3(self, tmp_path, capsys):
        path = tmp_path / "flat.csv"
        with path.open("w") as fh:
            fh.write("# rep_period_ps=12500\npulse_index,g2,weight\n")
            for i in range(1, 40):
                fh.write(f"{i},0.99,1.0\n")
                fh.write(f"{-i},0.99,1.0\n")
        code = main(["fit", "--in", str(path), "--model", "auto"])
        assert code == 3
        assert "bunching" in capsys.readouterr().err


class TestCliSweep:
    def test_wavelength_sweep_with_crossing(self, tmp_path, capsys):
        config = tmp_path / "sweep.cfg"
        config.write_text("""
[rates]
p_xx = 0.8

[pulses]
duration_s = 0.6

[detector]
efficiency = 0.04

[sweep]
mode = wavelength
labels = 723, 731, 738
gamma_gc_per_us = 2.4, 1.2, 0.4
gamma_cg_per_us = 0.6, 1.2, 1.6
duration_s = 0.6

[fit]
tau_max_us = 7.0
""")
        out_dir = tmp_path / "sweepout"
        code = main(["sweep", "--config", str(config), "--out-dir",
                     str(out_dir), "--seed", "5", "--threads", "2"])
        assert code == 0
        table = list(csv.reader((out_dir / "sweep_table.csv").open()))
        assert len(table) == 4  # header + 3 labels
        rows = [dict(zip(table[0], row)) for row in table[1:]]
        gamma_b = [float(r["gamma_b"]) for r in rows]
        assert gamma_b[0] > gamma_b[1] > gamma_b[2]  # 3.0 > 2.4 > 2.0
        out = capsys.readouterr().out
        assert "crossing" in out or "balanced" in out
        assert (out_dir / "coincidence_matrix.csv").exists()
        assert (out_dir / "label_723.peaks.csv").exists()

    def test_sweepless_config_rejected(self, tmp_path):
        config = tmp_path / "nosweep.cfg"
        config.write_text(BASE_CONFIG)
        assert main(["sweep", "--config", str(config), "--out-dir",
                     str(tmp_path / "d")]) == 2


class TestCliTomo:
    def test_simulated_werner_report(self, tmp_path, capsys):
        config = tmp_path / "tomo.cfg"
        config.write_text("""
[tomo]
state = werner
werner_p = 0.55
pairs_per_setting = 10000
""")
        prefix = tmp_path / "state"
        code = main(["tomo", "--config", str(config), "--out-prefix",
                     str(prefix), "--n-resamples", "0", "--seed", "21"])
        assert code == 0
        out = capsys.readouterr().out
        assert "maximum likelihood" in out
        mle_rows = list(csv.reader((tmp_path / "state_mle.csv").open()))
        matrix = np.array([[float(x) for x in row] for row in mle_rows[:4]])
        rho = matrix[:, 0::2] + 1j * matrix[:, 1::2]
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-9)
        summary = {row[0]: row[1] for row in mle_rows[4:]}
        assert float(summary["fidelity"]) == pytest.approx(0.6625, abs=0.03)

    def test_counts_csv_input(self, tmp_path, capsys):
        from qdblink import CANONICAL_SETTINGS, projector, werner_state
        rho = werner_state(0.9)
        path = tmp_path / "counts.csv"
        with path.open("w") as fh:
            fh.write("setting,counts\n")
            for s in CANONICAL_SETTINGS:
                mean = 20000 * np.real(np.trace(rho @ projector(s)))
                fh.write(f"{s.name},{int(round(mean))}\n")
        code = main(["tomo", "--counts", str(path), "--n-resamples", "0"])
        assert code == 0
        assert "0.92" in capsys.readouterr().out  # fidelity (3p+1)/4 = 0.925

    def test_incomplete_settings_named(self, tmp_path, capsys):
        path = tmp_path / "short.csv"
        with path.open("w") as fh:
            fh.write("setting,counts\nHH,100\nHV,100\nVH,100\nVV,100\n")
        code = main(["tomo", "--counts", str(path), "--n-resamples", "0"])
        assert code == 2
        err = capsys.readouterr().err
        assert "missing" in err and "DD" in err
