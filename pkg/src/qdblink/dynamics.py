"""Closed-form blinking dynamics of a charge-toggling quantum-dot emitter.

The emitter ground state performs a two-state telegraph between a neutral
configuration ``g`` (two-photon pumping excites the biexciton cascade
``XX -> X -> g``) and a charged configuration ``c`` (phonon-assisted pumping
excites the trion ``X+``).  Charging happens with rate ``gamma_gc`` and
neutralization with rate ``gamma_cg`` (both per microsecond, i.e. slow
compared to the nanosecond-scale radiative decays).

Conventions used throughout:

* tau_on  = 1/gamma_gc   mean length of a neutral (emitting) period
* tau_off = 1/gamma_cg   mean length of a charged (dark) period
* beta    = tau_on/tau_off = gamma_cg/gamma_gc   on-off ratio
* gamma_b = gamma_gc + gamma_cg                  blinking rate

With these definitions the normalized intensity autocorrelation of the
bright-state emission is ``g2(tau) = 1 + (1/beta) * exp(-gamma_b*|tau|)``
and the neutral-state occupation is ``beta/(1+beta)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError

# radiative rates (1/ns) must exceed the telegraph rates (1/us) by this
# factor for the cascade non-interruption assumption of the simulator
RATE_SEPARATION_MIN = 1e3


def _check_prob(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must be in [0, 1], got {value}")


def _check_nonneg(name: str, value: float) -> None:
    if value < 0.0 or not np.isfinite(value):
        raise ValidationError(f"{name} must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class RateSet:
    """All transition and capture rates of the emitter model.

    p_xx       probability per laser pulse of pumping g -> XX
    gamma_xx   XX -> X radiative decay rate (1/ns)
    gamma_x    X -> g radiative decay rate (1/ns)
    gamma_gc   neutral -> charged ground-state transition rate (1/us)
    gamma_cg   charged -> neutral ground-state transition rate (1/us)
    p_c        probability per pulse of phonon-assisted pumping c -> X+
    gamma_c    X+ -> c radiative decay rate (1/ns)
    gamma_e_d  defect-tunneling electron capture rate (1/us), adds to gamma_cg
    gamma_h_d  defect-tunneling hole capture rate (1/us), adds to gamma_gc
    """

    p_xx: float
    gamma_xx: float
    gamma_x: float
    gamma_gc: float
    gamma_cg: float
    p_c: float
    gamma_c: float
    gamma_e_d: float = 0.0
    gamma_h_d: float = 0.0

    def __post_init__(self):
        _check_prob("p_xx", self.p_xx)
        _check_prob("p_c", self.p_c)
        for name in ("gamma_xx", "gamma_x", "gamma_gc", "gamma_cg",
                     "gamma_c", "gamma_e_d", "gamma_h_d"):
            _check_nonneg(name, getattr(self, name))
        fast_per_us = 1e3 * min(self.gamma_xx, self.gamma_x, self.gamma_c)
        slow_per_us = max(self.charge_rate, self.neutralize_rate)
        if slow_per_us > 0 and fast_per_us < RATE_SEPARATION_MIN * slow_per_us:
            warnings.warn(
                "radiative rates are less than 1e3 times the telegraph rates; "
                "the cascade non-interruption assumption of the simulator is "
                "questionable for this rate set",
                stacklevel=2,
            )

    @property
    def charge_rate(self) -> float:
        """Effective neutral -> charged rate including defect tunneling (1/us)."""
        return self.gamma_gc + self.gamma_h_d

    @property
    def neutralize_rate(self) -> float:
        """Effective charged -> neutral rate including defect tunneling (1/us)."""
        return self.gamma_cg + self.gamma_e_d


@dataclass(frozen=True)
class GateLaserConfig:
    """Weak off-resonant gate laser acting on the charge capture rates.

    The gate laser modifies gamma_gc and gamma_cg.  Its action is modelled
    as a saturating-linear rate increment, see :func:`apply_gate`.  The map
    coefficients are free parameters of the model (per nW per us); negative
    values are allowed and describe suppression of a capture channel.
    """

    wavelength_nm: float
    power_nw: float
    map_gc: float
    map_cg: float
    sat_power_nw: float

    def __post_init__(self):
        if self.power_nw < 0:
            raise ValidationError(f"gate power must be >= 0, got {self.power_nw}")
        if self.sat_power_nw <= 0:
            raise ValidationError(
                f"gate saturation power must be > 0, got {self.sat_power_nw}")


@dataclass(frozen=True)
class SteadyState:
    """Stationary occupation and expected count rates of the emitter.

    Occupations refer to the ground-state telegraph; count rates are
    detected rates (detector efficiency folded in).  ``r_x``/``r_xplus``
    are the intensity ratios N_X/(N_X+N_X+) and its complement.
    """

    p_neutral: float
    p_charged: float
    beta: float
    gamma_b: float
    n_h_st: float
    rate_x: float
    rate_xx: float
    rate_xplus: float
    r_x: float
    r_xplus: float
    eta_ex: float


def steady_state(rates: RateSet, rep_rate_hz: float = 80e6,
                 detector_eff: float = 1.0) -> SteadyState:
    """Stationary solution of the ground-state telegraph.

    p_neutral = gamma_cg/(gamma_gc+gamma_cg), beta = gamma_cg/gamma_gc,
    gamma_b = gamma_gc + gamma_cg.  Detected rates are
    rep_rate * pump probability * occupation * detector_eff; the
    excitation efficiency is eta_ex = p_xx * p_neutral.
    """
    if rates.gamma_gc == 0.0 and rates.gamma_cg == 0.0:
        raise ValidationError(
            "gamma_gc = gamma_cg = 0 leaves the ground-state occupation undefined")
    if rep_rate_hz <= 0:
        raise ValidationError(f"rep_rate_hz must be > 0, got {rep_rate_hz}")
    _check_prob("detector_eff", detector_eff)

    gamma_b = rates.gamma_gc + rates.gamma_cg
    p_neutral = rates.gamma_cg / gamma_b
    p_charged = 1.0 - p_neutral
    beta = rates.gamma_cg / rates.gamma_gc if rates.gamma_gc > 0 else np.inf

    rate_x = rep_rate_hz * rates.p_xx * p_neutral * detector_eff
    rate_xx = rep_rate_hz * rates.p_xx * p_neutral * detector_eff
    rate_xplus = rep_rate_hz * rates.p_c * p_charged * detector_eff
    total = rate_x + rate_xplus
    if total > 0:
        r_x = rate_x / total
        r_xplus = 1.0 - r_x
    else:
        r_x = r_xplus = np.nan

    return SteadyState(
        p_neutral=p_neutral,
        p_charged=p_charged,
        beta=beta,
        gamma_b=gamma_b,
        n_h_st=p_charged,
        rate_x=rate_x,
        rate_xx=rate_xx,
        rate_xplus=rate_xplus,
        r_x=r_x,
        r_xplus=r_xplus,
        eta_ex=rates.p_xx * p_neutral,
    )


def g2_auto_model(tau_us, beta: float, gamma_b: float):
    """Bunching autocorrelation model: 1 + (1/beta) * exp(-gamma_b*|tau|).

    ``tau_us`` may be a scalar or array (microseconds); ``gamma_b`` is in
    1/us.  g2(0) = 1 + 1/beta and the large-delay limit is 1.
    """
    if beta <= 0:
        raise ValidationError(f"beta must be > 0, got {beta}")
    if gamma_b < 0:
        raise ValidationError(f"gamma_b must be >= 0, got {gamma_b}")
    tau = np.asarray(tau_us, dtype=float)
    out = 1.0 + (1.0 / beta) * np.exp(-gamma_b * np.abs(tau))
    return out if out.ndim else float(out)


def g2_cross_model(tau_us, gamma_b: float, tau_rec_x: float, tau_rec_xp: float):
    """Cross-correlation model between the bright (X) and trion (X+) channels.

    g2(tau) = (1 - exp(-gamma_b*|tau|)) * [H(tau)*r_xp(tau) + H(-tau)*r_x(tau)]

    where r(tau) = 1 - exp(-|tau|/tau_rec) is the single-exponential
    re-excitation recovery of the leading channel and H is the unit step
    with the tie-break H(0) = 1/2.  The value at tau = 0 is 0 and the
    model tends to 1 for |tau| -> inf.  Independent recovery times for the
    two signs capture an asymmetric central dip.
    """
    for name, val in (("gamma_b", gamma_b), ("tau_rec_x", tau_rec_x),
                      ("tau_rec_xp", tau_rec_xp)):
        if val <= 0 or not np.isfinite(val):
            raise ValidationError(f"{name} must be > 0, got {val}")
    tau = np.asarray(tau_us, dtype=float)
    atau = np.abs(tau)
    envelope = 1.0 - np.exp(-gamma_b * atau)
    rec_x = 1.0 - np.exp(-atau / tau_rec_x)
    rec_xp = 1.0 - np.exp(-atau / tau_rec_xp)
    heav = np.where(tau > 0, 1.0, np.where(tau < 0, 0.0, 0.5))
    out = envelope * (heav * rec_xp + (1.0 - heav) * rec_x)
    return out if out.ndim else float(out)


def decompose_rates(beta: float, gamma_b: float) -> tuple[float, float]:
    """Split the blinking rate into (gamma_gc, gamma_cg) given the on-off ratio.

    gamma_gc = gamma_b/(1+beta); gamma_cg is computed as the remainder so
    the two always sum to gamma_b exactly.  Exact inverse of the
    (beta, gamma_b) construction in :func:`steady_state`.
    """
    if beta <= 0 or not np.isfinite(beta):
        raise ValidationError(f"beta must be > 0, got {beta}")
    if gamma_b <= 0 or not np.isfinite(gamma_b):
        raise ValidationError(f"gamma_b must be > 0, got {gamma_b}")
    gamma_gc = gamma_b / (1.0 + beta)
    gamma_cg = gamma_b - gamma_gc
    return gamma_gc, gamma_cg


def apply_gate(base: RateSet, gate: GateLaserConfig) -> RateSet:
    """Return the rate set modified by the gate laser.

    The effective drive saturates with power,
    P_eff = power * sat_power / (power + sat_power), and shifts the
    capture rates linearly: gamma_gc += map_gc*P_eff,
    gamma_cg += map_cg*P_eff.  Zero power returns ``base`` unchanged.
    """
    if gate.power_nw == 0.0:
        return base
    p_eff = gate.power_nw * gate.sat_power_nw / (gate.power_nw + gate.sat_power_nw)
    return replace(
        base,
        gamma_gc=base.gamma_gc + gate.map_gc * p_eff,
        gamma_cg=base.gamma_cg + gate.map_cg * p_eff,
    )
