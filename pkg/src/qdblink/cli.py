"""Command line entry points.

Subcommands: ``simulate`` (config -> QTT1 time-tag file), ``correlate``
(QTT1 -> histogram CSV), ``fit`` (histogram/peaks/sweep CSV or QTT1 ->
fit report), ``sweep`` (config grid -> per-label artifacts + table) and
``tomo`` (counts CSV or simulated state -> density matrices + fidelity).

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O.
All subcommands accept ``--seed``, ``--threads`` and ``--verbose``.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .correlate import (CorrelationHistogram, PulsePeaks, correlate,
                        log_correlate, pulse_bin)
from .dynamics import apply_gate, steady_state
from .errors import NumericsError, ValidationError
from .fitting import (BlinkFitResult, choose_norm_window, fit_auto, fit_cross,
                      fit_saturation, sweep_analysis)
from .qttfile import read_stream, write_stream
from .simulate import simulate_polarized_pairs, simulate_stream
from .stream import CHANNELS
from .tomography import (CANONICAL_SETTINGS, FULL_SETTINGS, CoincidenceRecord,
                         ProjectorSetting, bell_phi_plus, fidelity,
                         linear_reconstruct, mle_reconstruct, resample_errors,
                         werner_state)


def _add_common(sub):
    sub.add_argument("--seed", type=int, default=12345,
                     help="random seed (default 12345)")
    sub.add_argument("--threads", type=int, default=1,
                     help="worker threads for sweep fan-out (default 1)")
    sub.add_argument("--verbose", "-v", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qdblink",
        description="blinking quantum-dot photon source simulator and analyzer")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("simulate", help="simulate a time-tag stream")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output .qtt path")
    p.add_argument("--duration-s", type=float, default=None,
                   help="override pulses.duration_s")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("correlate", help="correlation histogram to CSV")
    p.add_argument("--in", dest="input", required=True, help="input .qtt path")
    p.add_argument("--channels", default="X",
                   help="one channel (auto) or two comma-separated (cross/log)")
    p.add_argument("--mode", choices=("auto", "cross", "log"), default="auto")
    p.add_argument("--tau-max-us", type=float, default=10.0)
    p.add_argument("--bin-width-ps", type=int, default=0,
                   help="0 = one pulse period (auto/cross modes)")
    p.add_argument("--tau-min-us", type=float, default=1.0, help="log mode")
    p.add_argument("--points-per-decade", type=int, default=8, help="log mode")
    p.add_argument("--norm-window-us", type=float, default=0.0,
                   help="0 = choose 5/gamma_b from a coarse pre-fit")
    p.add_argument("--out", required=True, help="output CSV path")
    _add_common(p)
    p.set_defaults(func=cmd_correlate)

    p = subs.add_parser("fit", help="fit a blinking or saturation model")
    p.add_argument("--in", dest="input", required=True,
                   help=".qtt stream or CSV produced by this toolkit")
    p.add_argument("--model", choices=("auto", "cross", "saturation"),
                   default="auto")
    p.add_argument("--channels", default=None,
                   help="channel (auto) or pair (cross) for .qtt input")
    p.add_argument("--tau-max-us", type=float, default=10.0)
    p.add_argument("--bin-width-ps", type=int, default=0)
    p.add_argument("--norm-window-us", type=float, default=0.0)
    p.add_argument("--min-pulse-index", type=int, default=1)
    p.add_argument("--rep-period-ps", type=int, default=0,
                   help="pulse period for peaks CSV without metadata")
    p.add_argument("--out-report", default=None, help="write the text report here")
    p.add_argument("--out-csv", default=None, help="write the result row here")
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = subs.add_parser("sweep", help="simulate-correlate-fit over a label grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = subs.add_parser("tomo", help="two-photon polarization tomography")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--counts", help="CSV with rows setting,counts[,acq_s]")
    group.add_argument("--config", help="simulate counts from [tomo] config")
    p.add_argument("--out-prefix", default=None,
                   help="write <prefix>_linear.csv and <prefix>_mle.csv")
    p.add_argument("--n-resamples", type=int, default=None,
                   help="override tomo.n_resamples (0 disables)")
    _add_common(p)
    p.set_defaults(func=cmd_tomo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


# ---------------------------------------------------------------- simulate

def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    rates = apply_gate(cfg.rates, cfg.gate)
    duration = args.duration_s if args.duration_s is not None else cfg.duration_s
    stream = simulate_stream(rates, cfg.pulses, cfg.detector,
                             duration_s=duration, seed=args.seed)
    write_stream(args.out, stream)

    ss = steady_state(rates, cfg.pulses.rep_rate_hz, detector_eff=1.0)
    expected = {
        "X": ss.rate_x * cfg.detector.channel_efficiency("X"),
        "XX": ss.rate_xx * cfg.detector.channel_efficiency("XX"),
        "XPLUS": ss.rate_xplus * cfg.detector.channel_efficiency("XPLUS"),
    }
    counts = stream.counts()
    print(f"wrote {args.out}: {len(stream)} records, {duration} s, "
          f"seed {args.seed}")
    for name in ("X", "XX", "XPLUS"):
        realized = counts[name] / duration
        print(f"  {name:6s} {counts[name]:>10d} tags   "
              f"expected {expected[name]:>12.1f} cps   "
              f"realized {realized:>12.1f} cps")
    if args.verbose:
        md = stream.metadata
        print(f"  telegraph: {md['n_switches']} switches, "
              f"{md['pulses_neutral']} neutral / {md['pulses_charged']} charged pulses")
    return 0


# ---------------------------------------------------------------- correlate

def _split_channels(text, expect_two):
    parts = [part.strip().upper() for part in text.split(",") if part.strip()]
    if expect_two and len(parts) != 2:
        raise ValidationError(f"mode needs two channels, got {text!r}")
    if not expect_two and len(parts) not in (1, 2):
        raise ValidationError(f"cannot parse channels {text!r}")
    return parts


def _require_channel(stream, name):
    counts = stream.counts()
    if counts.get(name, 0) == 0:
        available = [ch for ch in CHANNELS if counts.get(ch, 0) > 0]
        raise ValidationError(
            f"channel {name} has no records; available channels: "
            f"{', '.join(available) if available else 'none'}")


def _hist_meta(hist, mode):
    return {
        "mode": mode,
        "channels": ",".join(hist.channel_pair),
        "duration_ps": hist.duration_ps,
        "n_a": hist.n_a,
        "n_b": hist.n_b,
        "bin_width_ps": hist.bin_width_ps if hist.bin_width_ps else "",
        "normalization": hist.normalization if hist.normalization else "",
    }


def _write_hist_csv(path, hist, mode):
    with open(path, "w", newline="") as fh:
        for key, val in _hist_meta(hist, mode).items():
            fh.write(f"# {key}={val}\n")
        writer = csv.writer(fh)
        if mode == "log":
            writer.writerow(("bin_center_ps", "counts", "normalized",
                             "bin_width_ps"))
            for c, n, norm, w in zip(hist.centers, hist.counts,
                                     hist.normalized, hist.widths):
                writer.writerow((f"{c:.1f}", n, f"{norm:.8g}", f"{w:.1f}"))
        else:
            normalized = hist.normalized if hist.normalized is not None \
                else np.full(hist.counts.size, np.nan)
            writer.writerow(("bin_center_ps", "counts", "normalized"))
            for c, n, norm in zip(hist.centers, hist.counts, normalized):
                writer.writerow((f"{c:.1f}", n, f"{norm:.8g}"))


def _auto_window_ps(hist, stream, norm_window_us):
    if norm_window_us > 0:
        return norm_window_us * 1e6
    if stream.rep_period_ps:
        return choose_norm_window(hist, stream.rep_period_ps)
    return 0.5 * np.abs(hist.centers).max()


def cmd_correlate(args) -> int:
    stream = read_stream(args.input)
    if args.mode == "auto":
        name = _split_channels(args.channels, expect_two=False)[0]
        pair = (name, name)
    else:
        parts = _split_channels(args.channels, expect_two=args.mode == "cross")
        pair = (parts[0], parts[-1])
    for name in set(pair):
        _require_channel(stream, name)

    if args.mode == "log":
        hist = log_correlate(stream, pair[0], pair[1],
                             tau_min_ps=args.tau_min_us * 1e6,
                             tau_max_ps=args.tau_max_us * 1e6,
                             points_per_decade=args.points_per_decade,
                             edge_snap_ps=stream.rep_period_ps)
    else:
        width = args.bin_width_ps or stream.rep_period_ps
        if not width:
            raise ValidationError(
                "--bin-width-ps required: the stream carries no pulse period")
        hist = correlate(stream, pair[0], pair[1],
                         tau_max_ps=args.tau_max_us * 1e6, bin_width_ps=width)
        hist.normalize(_auto_window_ps(hist, stream, args.norm_window_us))
    _write_hist_csv(args.out, hist, args.mode)
    print(f"wrote {args.out}: {args.mode} correlation of {pair[0]} vs {pair[1]}, "
          f"{hist.counts.sum()} coincidences in {hist.counts.size} bins")
    return 0


# ---------------------------------------------------------------- fit

def _read_csv_with_meta(path):
    meta, rows = {}, []
    with open(path, "r", newline="") as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if "=" in body:
                    key, val = body.split("=", 1)
                    meta[key.strip()] = val.strip()
                continue
            if header is None:
                header = [col.strip() for col in line.split(",")]
                continue
            rows.append(line.split(","))
    if header is None:
        raise ValidationError(f"{path}: no CSV header found")
    return meta, header, rows


def _hist_from_csv(path) -> CorrelationHistogram:
    meta, header, rows = _read_csv_with_meta(path)
    needed = ("duration_ps", "n_a", "n_b", "bin_width_ps", "channels")
    missing = [key for key in needed if not meta.get(key)]
    if missing:
        raise ValidationError(
            f"{path}: histogram CSV lacks metadata {', '.join(missing)}")
    col = {name: i for i, name in enumerate(header)}
    if "bin_center_ps" not in col or "counts" not in col:
        raise ValidationError(f"{path}: need bin_center_ps and counts columns")
    centers = np.array([float(r[col["bin_center_ps"]]) for r in rows])
    counts = np.array([int(float(r[col["counts"]])) for r in rows], dtype=np.int64)
    width = int(meta["bin_width_ps"])
    edges = np.concatenate((centers - 0.5 * width, [centers[-1] + 0.5 * width]))
    return CorrelationHistogram(
        bin_edges=edges, counts=counts,
        channel_pair=tuple(meta["channels"].split(",")),
        n_a=int(meta["n_a"]), n_b=int(meta["n_b"]),
        duration_ps=int(meta["duration_ps"]), kind="linear",
        bin_width_ps=width)


def _peaks_from_csv(path, rep_period_ps) -> PulsePeaks:
    meta, header, rows = _read_csv_with_meta(path)
    period = int(meta.get("rep_period_ps", 0)) or rep_period_ps
    if not period:
        raise ValidationError(
            f"{path}: no rep_period_ps metadata; pass --rep-period-ps")
    col = {name: i for i, name in enumerate(header)}
    for need in ("pulse_index", "g2", "weight"):
        if need not in col:
            raise ValidationError(f"{path}: missing column {need}")
    idx = np.array([int(float(r[col["pulse_index"]])) for r in rows])
    g2 = np.array([float(r[col["g2"]]) for r in rows])
    weight = np.array([float(r[col["weight"]]) for r in rows])
    return PulsePeaks(pulse_index=idx, g2=g2, weight=weight,
                      raw=np.maximum(g2, 0.0),
                      rep_period_ps=period,
                      normalization=float(meta.get("normalization", 1.0) or 1.0),
                      n_norm_peaks=0)


def _write_peaks_csv(path, peaks: PulsePeaks):
    with open(path, "w", newline="") as fh:
        fh.write(f"# rep_period_ps={peaks.rep_period_ps}\n")
        fh.write(f"# normalization={peaks.normalization}\n")
        writer = csv.writer(fh)
        writer.writerow(("pulse_index", "g2", "weight"))
        for i, g, w in zip(peaks.pulse_index, peaks.g2, peaks.weight):
            writer.writerow((i, f"{g:.8g}", f"{w:.8g}"))


def _report_lines(result: BlinkFitResult) -> list:
    lines = [f"model: {result.model_id}",
             f"gamma_b = {result.gamma_b:.6g} +/- {result.gamma_b_err:.3g} 1/us"]
    if result.beta is not None:
        lines += [
            f"beta = {result.beta:.6g} +/- {result.beta_err:.3g}",
            f"gamma_gc = {result.gamma_gc:.6g} +/- {result.gamma_gc_err:.3g} 1/us",
            f"gamma_cg = {result.gamma_cg:.6g} +/- {result.gamma_cg_err:.3g} 1/us",
            f"eta_ex = {result.eta_ex:.6g} +/- {result.eta_ex_err:.3g}",
        ]
    if result.tau_rec_x_us is not None:
        resolved = "resolved" if result.recovery_resolved else "upper bounds (unresolved at this bin width)"
        lines += [
            f"tau_rec_x = {result.tau_rec_x_us:.6g} us, "
            f"tau_rec_xplus = {result.tau_rec_xp_us:.6g} us ({resolved})",
        ]
    lines.append(f"chi2/dof = {result.chi2_per_dof:.4g} over {result.n_points} "
                 f"points, fit window {result.fit_window_us[0]:.4g}.."
                 f"{result.fit_window_us[1]:.4g} us")
    return lines


_FIT_CSV_HEADER = ("model", "beta", "beta_err", "gamma_b", "gamma_b_err",
                   "gamma_gc", "gamma_cg", "eta_ex", "eta_ex_err",
                   "tau_rec_x_us", "tau_rec_xp_us", "chi2_per_dof")


def _fit_csv_row(result: BlinkFitResult):
    def fmt(x):
        return "" if x is None else f"{x:.8g}"
    return (result.model_id, fmt(result.beta), fmt(result.beta_err),
            fmt(result.gamma_b), fmt(result.gamma_b_err), fmt(result.gamma_gc),
            fmt(result.gamma_cg), fmt(result.eta_ex), fmt(result.eta_ex_err),
            fmt(result.tau_rec_x_us), fmt(result.tau_rec_xp_us),
            fmt(result.chi2_per_dof))


def _auto_pipeline(stream, channel, args):
    _require_channel(stream, channel)
    width = args.bin_width_ps or stream.rep_period_ps
    if not width:
        raise ValidationError("need --bin-width-ps for streams without pulse period")
    rep = stream.rep_period_ps or width
    hist = correlate(stream, channel, channel,
                     tau_max_ps=args.tau_max_us * 1e6, bin_width_ps=width)
    window = args.norm_window_us * 1e6 if args.norm_window_us > 0 \
        else choose_norm_window(hist, rep)
    peaks = pulse_bin(hist, rep, exclude_central=True, norm_window_ps=window)
    return hist, peaks


def cmd_fit(args) -> int:
    path = Path(args.input)
    result = None
    saturation = None
    if args.model == "saturation":
        meta, header, rows = _read_csv_with_meta(path)
        col = {name: i for i, name in enumerate(header)}
        for need in ("power_nw", "intensity"):
            if need not in col:
                raise ValidationError(f"{path}: missing column {need}")
        powers = [float(r[col["power_nw"]]) for r in rows]
        intensity = [float(r[col["intensity"]]) for r in rows]
        saturation = fit_saturation(powers, intensity)
    elif path.suffix == ".qtt":
        stream = read_stream(path)
        if args.model == "auto":
            channel = (args.channels or "X").strip().upper()
            _, peaks = _auto_pipeline(stream, channel, args)
            result = fit_auto(peaks, min_pulse_index=args.min_pulse_index)
        else:
            pair = _split_channels(args.channels or "X,XPLUS", expect_two=True)
            for name in pair:
                _require_channel(stream, name)
            width = args.bin_width_ps or stream.rep_period_ps
            hist = correlate(stream, pair[0], pair[1],
                             tau_max_ps=args.tau_max_us * 1e6, bin_width_ps=width)
            window = args.norm_window_us * 1e6 if args.norm_window_us > 0 else None
            result = fit_cross(hist, norm_window_ps=window)
    else:
        if args.model == "auto":
            peaks = _peaks_from_csv(path, args.rep_period_ps)
            result = fit_auto(peaks, min_pulse_index=args.min_pulse_index)
        else:
            hist = _hist_from_csv(path)
            window = args.norm_window_us * 1e6 if args.norm_window_us > 0 else None
            result = fit_cross(hist, norm_window_ps=window)

    if saturation is not None:
        lines = [
            "model: gate_power_saturation",
            f"plateau = {saturation.plateau:.6g} +/- {saturation.plateau_err:.3g}",
            f"p_sat = {saturation.p_sat:.6g} +/- {saturation.p_sat_err:.3g} nW",
            f"offset = {saturation.offset:.6g} +/- {saturation.offset_err:.3g}",
            f"identifiable: {saturation.identifiable}",
            f"chi2/dof = {saturation.chi2_per_dof:.4g}",
        ]
        csv_header = ("model", "plateau", "plateau_err", "p_sat", "p_sat_err",
                      "offset", "offset_err", "identifiable", "chi2_per_dof")
        csv_row = ("gate_power_saturation", saturation.plateau,
                   saturation.plateau_err, saturation.p_sat, saturation.p_sat_err,
                   saturation.offset, saturation.offset_err,
                   saturation.identifiable, saturation.chi2_per_dof)
    else:
        lines = _report_lines(result)
        csv_header, csv_row = _FIT_CSV_HEADER, _fit_csv_row(result)

    text = "\n".join(lines)
    print(text)
    if args.out_report:
        Path(args.out_report).write_text(text + "\n", encoding="utf-8")
    if args.out_csv:
        with open(args.out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(csv_header)
            writer.writerow(csv_row)
    return 0


# ---------------------------------------------------------------- sweep

def _sweep_label_rates(cfg, label, index):
    if cfg.sweep.mode == "wavelength":
        return replace(cfg.rates, gamma_gc=cfg.sweep.gamma_gc[index],
                       gamma_cg=cfg.sweep.gamma_cg[index])
    gate = replace(cfg.gate, power_nw=label)
    return apply_gate(cfg.rates, gate)


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if cfg.sweep is None:
        raise ValidationError("config has no [sweep] section with labels")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    duration = cfg.sweep.duration_s or cfg.duration_s
    rep = cfg.pulses.rep_period_ps
    width = cfg.fit.bin_width_ps or rep
    cross = cfg.sweep.fit_model == "cross"

    order = np.argsort(cfg.sweep.labels)
    labels = [cfg.sweep.labels[i] for i in order]

    def run_label(job):
        position, (index, label) = job
        rates = _sweep_label_rates(cfg, label, index)
        stream = simulate_stream(rates, cfg.pulses, cfg.detector,
                                 duration_s=duration, seed=args.seed + position)
        if cross:
            hist = correlate(stream, "X", "XPLUS",
                             tau_max_ps=cfg.fit.tau_max_us * 1e6, bin_width_ps=width)
            return label, hist, None
        hist = correlate(stream, "X", "X",
                         tau_max_ps=cfg.fit.tau_max_us * 1e6, bin_width_ps=width)
        window = cfg.fit.norm_window_us * 1e6 if cfg.fit.norm_window_us > 0 \
            else choose_norm_window(hist, rep)
        peaks = pulse_bin(hist, rep, exclude_central=cfg.fit.exclude_central,
                          norm_window_ps=window)
        return label, hist, peaks

    jobs = list(enumerate(zip([int(i) for i in order], labels)))
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            outputs = list(pool.map(run_label, jobs))
    else:
        outputs = [run_label(job) for job in jobs]

    items = []
    for label, hist, peaks in outputs:
        stem = out_dir / f"label_{label:g}"
        _write_hist_csv(f"{stem}.hist.csv", hist, "cross" if cross else "auto")
        if peaks is not None:
            _write_peaks_csv(f"{stem}.peaks.csv", peaks)
        items.append((label, hist if cross else peaks))

    table = sweep_analysis(
        items, mode="cross" if cross else "auto",
        **({} if cross else {"min_pulse_index": cfg.fit.min_pulse_index}))

    table_path = out_dir / "sweep_table.csv"
    with open(table_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.CSV_HEADER)
        for row in table.csv_rows():
            writer.writerow(row)

    matrix_path = out_dir / "coincidence_matrix.csv"
    _write_sweep_matrix(matrix_path, outputs, cross)

    print(f"wrote {table_path} and {matrix_path}")
    for row in table.rows:
        if row.error:
            print(f"  label {row.label:g}: FIT FAILED ({row.error})")
        else:
            r = row.result
            beta = f"beta={r.beta:.4g} " if r.beta is not None else ""
            print(f"  label {row.label:g}: {beta}gamma_b={r.gamma_b:.4g} 1/us")
    if table.crossings:
        for lo, hi in table.crossings:
            if lo == hi:
                print(f"  capture rates balanced at label {lo:g}")
            else:
                print(f"  capture-rate crossing between labels {lo:g} and {hi:g}")
    else:
        print("  no capture-rate crossing inside the sweep range")
    return 0


def _write_sweep_matrix(path, outputs, cross):
    """Label x delay matrix of normalized coincidences for color maps."""
    rows = []
    if cross:
        for label, hist, _ in outputs:
            values = hist.normalized
            if values is None:
                values = hist.normalize(0.75 * np.abs(hist.centers).max())
            rows.append((label, hist.centers * 1e-6, values))
    else:
        for label, _, peaks in outputs:
            delay_us = peaks.pulse_index * peaks.rep_period_ps * 1e-6
            rows.append((label, delay_us, peaks.g2))
    if not rows:
        return
    common = rows[0][1]
    for _, delays, _ in rows[1:]:
        if delays.size < common.size:
            common = delays
    n = common.size
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label_vs_delay_us"] + [f"{d:.6g}" for d in common])
        for label, delays, values in rows:
            sel = np.isin(delays, common)
            writer.writerow([f"{label:g}"] + [f"{v:.6g}" for v in values[sel][:n]])


# ---------------------------------------------------------------- tomo

def _records_from_csv(path):
    meta, header, rows = _read_csv_with_meta(path)
    col = {name: i for i, name in enumerate(header)}
    if "setting" not in col or "counts" not in col:
        raise ValidationError(f"{path}: need setting and counts columns")
    records = []
    for r in rows:
        name = r[col["setting"]].strip().upper()
        if len(name) != 2:
            raise ValidationError(f"{path}: bad setting {name!r}")
        acq = float(r[col["acquisition_time_s"]]) if "acquisition_time_s" in col else 1.0
        records.append(CoincidenceRecord(
            setting=ProjectorSetting(name[0], name[1]),
            counts=int(float(r[col["counts"]])), acquisition_time_s=acq))
    return records


def _write_matrix_csv(path, rho, summary):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for i in range(4):
            row = []
            for j in range(4):
                row += [f"{rho[i, j].real:.12g}", f"{rho[i, j].imag:.12g}"]
            writer.writerow(row)
        for key, val in summary.items():
            writer.writerow((key, f"{val:.12g}" if isinstance(val, float) else val))


def cmd_tomo(args) -> int:
    if args.counts:
        records = _records_from_csv(args.counts)
        n_resamples = args.n_resamples if args.n_resamples is not None else 200
    else:
        cfg = load_config(args.config)
        tomo = cfg.tomo
        if tomo.state == "bell":
            psi = bell_phi_plus()
            rho_true = np.outer(psi, psi.conj())
        elif tomo.state == "werner":
            rho_true = werner_state(tomo.werner_p)
        else:
            rho_true = np.eye(4, dtype=complex) / 4.0
        settings = CANONICAL_SETTINGS if tomo.settings == "canonical16" \
            else FULL_SETTINGS
        records = simulate_polarized_pairs(rho_true, settings,
                                           tomo.pairs_per_setting, seed=args.seed)
        n_resamples = args.n_resamples if args.n_resamples is not None \
            else tomo.n_resamples

    names = {r.setting.name for r in records}
    missing = sorted({s.name for s in CANONICAL_SETTINGS} - names)
    if len(records) < 16:
        raise ValidationError(
            f"incomplete tomography settings; missing canonical settings: "
            f"{', '.join(missing)}")

    linear = None
    if not missing and len(names) == 16:
        linear = linear_reconstruct(records)
        f_linear = fidelity(linear.rho)
        print(f"linear inversion: fidelity to the Bell state = {f_linear:.4f}, "
              f"min eigenvalue = {linear.min_eigenvalue:.2e}"
              + (" (non-physical, flagged)" if linear.negativity_flag else ""))

    mle = mle_reconstruct(records)
    f_mle = fidelity(mle.rho)
    print(f"maximum likelihood: fidelity to the Bell state = {f_mle:.4f}, "
          f"min eigenvalue = {mle.rho.min_eigenvalue:.2e}, "
          f"{mle.n_iterations} iterations")

    sigma = None
    if n_resamples:
        errors = resample_errors(records, n_resamples=n_resamples, seed=args.seed)
        sigma = errors.fidelity_sigma
        print(f"resampled fidelity = {errors.fidelity_mean:.4f} "
              f"+/- {errors.fidelity_sigma:.4f} "
              f"({errors.n_resamples} resamples, drop rate {errors.drop_rate:.2%})")

    if args.out_prefix:
        if linear is not None:
            _write_matrix_csv(f"{args.out_prefix}_linear.csv", linear.rho.matrix, {
                "fidelity": f_linear,
                "min_eigenvalue": linear.min_eigenvalue,
                "negativity_flag": linear.negativity_flag,
            })
        summary = {
            "fidelity": f_mle,
            "min_eigenvalue": mle.rho.min_eigenvalue,
            "log_likelihood": mle.log_likelihood,
        }
        if sigma is not None:
            summary["fidelity_sigma"] = sigma
        _write_matrix_csv(f"{args.out_prefix}_mle.csv", mle.rho.matrix, summary)
        print(f"wrote {args.out_prefix}_mle.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
