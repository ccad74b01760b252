"""Strict key-value run configuration.

INI-style sections mirror the domain types; every key carries its unit in
the name (e.g. ``rates.gamma_gc_per_us``).  Parsing is strict: unknown
sections or keys fail with a key-path diagnostic before any computation
starts.  All values below are free parameters of the toolkit with
documented defaults, not measured claims.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass

from .dynamics import GateLaserConfig, RateSet
from .errors import ValidationError
from .stream import DetectorModel, PulseTrain

_FLOAT, _INT, _BOOL, _STR, _FLOATS = "float", "int", "bool", "str", "floats"

# section -> key -> (type, default); default None means "optional, absent"
_SCHEMA = {
    "rates": {
        "p_xx": (_FLOAT, 0.8),
        "gamma_xx_per_ns": (_FLOAT, 8.0),
        "gamma_x_per_ns": (_FLOAT, 4.0),
        "gamma_gc_per_us": (_FLOAT, 0.5),
        "gamma_cg_per_us": (_FLOAT, 1.0),
        "p_c": (_FLOAT, 0.8),
        "gamma_c_per_ns": (_FLOAT, 4.0),
        "gamma_e_d_per_us": (_FLOAT, 0.0),
        "gamma_h_d_per_us": (_FLOAT, 0.0),
    },
    "pulses": {
        "rep_rate_hz": (_FLOAT, 80e6),
        "pulse_len_ps": (_FLOAT, 9.0),
        "duration_s": (_FLOAT, 1.0),
    },
    "detector": {
        "efficiency": (_FLOAT, 1.0),
        "efficiency_x": (_FLOAT, None),
        "efficiency_xx": (_FLOAT, None),
        "efficiency_xplus": (_FLOAT, None),
        "dark_rate_cps": (_FLOAT, 0.0),
        "jitter_sigma_ps": (_FLOAT, 0.0),
        "dead_time_ps": (_FLOAT, 0.0),
    },
    "gate": {
        "wavelength_nm": (_FLOAT, 738.0),
        "power_nw": (_FLOAT, 0.0),
        "map_gc_per_nw_us": (_FLOAT, 0.0),
        "map_cg_per_nw_us": (_FLOAT, 0.0),
        "sat_power_nw": (_FLOAT, 200.0),
    },
    "sweep": {
        "mode": (_STR, "wavelength"),
        "labels": (_FLOATS, None),
        "gamma_gc_per_us": (_FLOATS, None),
        "gamma_cg_per_us": (_FLOATS, None),
        "duration_s": (_FLOAT, None),
        "fit": (_STR, "auto"),
    },
    "fit": {
        "model": (_STR, "auto"),
        "tau_max_us": (_FLOAT, 10.0),
        "bin_width_ps": (_INT, 0),          # 0 -> one pulse period
        "norm_window_us": (_FLOAT, 0.0),    # 0 -> 5/gamma_b from a coarse pre-fit
        "min_pulse_index": (_INT, 1),
        "exclude_central": (_BOOL, True),
    },
    "tomo": {
        "state": (_STR, "bell"),
        "werner_p": (_FLOAT, 0.55),
        "pairs_per_setting": (_INT, 10000),
        "settings": (_STR, "canonical16"),
        "n_resamples": (_INT, 200),
    },
}

_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


def _convert(path: str, kind: str, text: str):
    try:
        if kind == _FLOAT:
            return float(text)
        if kind == _INT:
            return int(text)
        if kind == _BOOL:
            word = text.strip().lower()
            if word not in _BOOL_WORDS:
                raise ValueError(f"not a boolean: {text!r}")
            return _BOOL_WORDS[word]
        if kind == _FLOATS:
            return tuple(float(part) for part in text.split(","))
        return text.strip()
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class SweepConfig:
    mode: str
    labels: tuple
    gamma_gc: tuple | None
    gamma_cg: tuple | None
    duration_s: float | None
    fit_model: str


@dataclass(frozen=True)
class FitConfig:
    model: str
    tau_max_us: float
    bin_width_ps: int
    norm_window_us: float
    min_pulse_index: int
    exclude_central: bool


@dataclass(frozen=True)
class TomoConfig:
    state: str
    werner_p: float
    pairs_per_setting: int
    settings: str
    n_resamples: int


@dataclass(frozen=True)
class RunConfig:
    rates: RateSet
    pulses: PulseTrain
    detector: DetectorModel
    gate: GateLaserConfig
    duration_s: float
    sweep: SweepConfig | None
    fit: FitConfig
    tomo: TomoConfig


def _validated_values(parser: configparser.ConfigParser) -> dict:
    values = {section: dict() for section in _SCHEMA}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ValidationError(f"unknown config section [{section}]")
        for key, text in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ValidationError(f"unknown config key {section}.{key}")
            values[section][key] = _convert(
                f"{section}.{key}", _SCHEMA[section][key][0], text)
    for section, keys in _SCHEMA.items():
        for key, (_, default) in keys.items():
            values[section].setdefault(key, default)
    return values


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"config syntax error: {exc}") from exc
    v = _validated_values(parser)

    r = v["rates"]
    rates = RateSet(
        p_xx=r["p_xx"],
        gamma_xx=r["gamma_xx_per_ns"],
        gamma_x=r["gamma_x_per_ns"],
        gamma_gc=r["gamma_gc_per_us"],
        gamma_cg=r["gamma_cg_per_us"],
        p_c=r["p_c"],
        gamma_c=r["gamma_c_per_ns"],
        gamma_e_d=r["gamma_e_d_per_us"],
        gamma_h_d=r["gamma_h_d_per_us"],
    )
    p = v["pulses"]
    pulses = PulseTrain(rep_rate_hz=p["rep_rate_hz"], pulse_len_ps=p["pulse_len_ps"])

    d = v["detector"]
    overrides = {name: d[key] for name, key in (
        ("X", "efficiency_x"), ("XX", "efficiency_xx"), ("XPLUS", "efficiency_xplus"))
        if d[key] is not None}
    if overrides:
        efficiency = {name: overrides.get(name, d["efficiency"])
                      for name in ("X", "XX", "XPLUS")}
    else:
        efficiency = d["efficiency"]
    detector = DetectorModel(
        efficiency=efficiency,
        dark_rate_cps=d["dark_rate_cps"],
        jitter_sigma_ps=d["jitter_sigma_ps"],
        dead_time_ps=d["dead_time_ps"],
    )

    g = v["gate"]
    gate = GateLaserConfig(
        wavelength_nm=g["wavelength_nm"],
        power_nw=g["power_nw"],
        map_gc=g["map_gc_per_nw_us"],
        map_cg=g["map_cg_per_nw_us"],
        sat_power_nw=g["sat_power_nw"],
    )

    s = v["sweep"]
    sweep = None
    if s["labels"] is not None:
        if s["mode"] not in ("wavelength", "power"):
            raise ValidationError(
                f"sweep.mode must be 'wavelength' or 'power', got {s['mode']!r}")
        if s["fit"] not in ("auto", "cross"):
            raise ValidationError(
                f"sweep.fit must be 'auto' or 'cross', got {s['fit']!r}")
        if s["mode"] == "wavelength":
            for key in ("gamma_gc_per_us", "gamma_cg_per_us"):
                if s[key] is None or len(s[key]) != len(s["labels"]):
                    raise ValidationError(
                        f"sweep.{key} must list one value per label")
        sweep = SweepConfig(
            mode=s["mode"],
            labels=s["labels"],
            gamma_gc=s["gamma_gc_per_us"],
            gamma_cg=s["gamma_cg_per_us"],
            duration_s=s["duration_s"],
            fit_model=s["fit"],
        )

    f = v["fit"]
    if f["model"] not in ("auto", "cross", "saturation"):
        raise ValidationError(
            f"fit.model must be auto, cross or saturation, got {f['model']!r}")
    fit = FitConfig(
        model=f["model"],
        tau_max_us=f["tau_max_us"],
        bin_width_ps=f["bin_width_ps"],
        norm_window_us=f["norm_window_us"],
        min_pulse_index=f["min_pulse_index"],
        exclude_central=f["exclude_central"],
    )

    t = v["tomo"]
    if t["state"] not in ("bell", "werner", "mixed"):
        raise ValidationError(
            f"tomo.state must be bell, werner or mixed, got {t['state']!r}")
    if t["settings"] not in ("canonical16", "full36"):
        raise ValidationError(
            f"tomo.settings must be canonical16 or full36, got {t['settings']!r}")
    tomo = TomoConfig(
        state=t["state"],
        werner_p=t["werner_p"],
        pairs_per_setting=t["pairs_per_setting"],
        settings=t["settings"],
        n_resamples=t["n_resamples"],
    )

    return RunConfig(rates=rates, pulses=pulses, detector=detector, gate=gate,
                     duration_s=p["duration_s"], sweep=sweep, fit=fit, tomo=tomo)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


__all__ = ["RunConfig", "SweepConfig", "FitConfig", "TomoConfig",
           "parse_config", "load_config"]
