"""Weighted least-squares fits of the blinking correlation models.

Two models are fitted with damped least squares and analytic Jacobians:

* bunching autocorrelation ``1 + amp * exp(-gamma_b*|tau|)`` on
  pulse-binned peaks (``amp = 1/beta``),
* the cross-correlation dip
  ``(1 - exp(-gamma_b*|tau|)) * (1 - exp(-|tau|/tau_rec))`` with separate
  recovery times for the two delay signs.

Weights are inverse variances propagated from Poisson counting through
the normalization; parameter uncertainties come from the covariance at
the minimizer scaled by the reduced chi square, so a uniform rescaling of
all weights changes neither the minimizer nor the quoted errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .correlate import CorrelationHistogram, PulsePeaks, pulse_bin
from .dynamics import decompose_rates
from .errors import (FitConvergenceError, NoBunchingError, NumericsError,
                     ValidationError)

MODEL_AUTO = "auto_bunching"
MODEL_CROSS = "cross_antibunching"


@dataclass(frozen=True)
class BlinkFitResult:
    """Fitted blinking parameters with 1-sigma uncertainties.

    ``beta`` and the decomposed capture rates are only defined for the
    autocorrelation model; the cross model carries the recovery times
    instead.  ``gamma_gc + gamma_cg == gamma_b`` exactly by construction.
    """

    model_id: str
    gamma_b: float
    gamma_b_err: float
    chi2_per_dof: float
    fit_window_us: tuple
    n_points: int
    beta: float | None = None
    beta_err: float | None = None
    gamma_gc: float | None = None
    gamma_gc_err: float | None = None
    gamma_cg: float | None = None
    gamma_cg_err: float | None = None
    eta_ex: float | None = None
    eta_ex_err: float | None = None
    cov_beta_gamma: np.ndarray | None = None
    tau_rec_x_us: float | None = None
    tau_rec_x_err: float | None = None
    tau_rec_xp_us: float | None = None
    tau_rec_xp_err: float | None = None
    recovery_resolved: bool | None = None


def estimate_gamma_b(tau_us, g2, bunching: bool = True) -> float:
    """Coarse decay-rate estimate by log-linear regression.

    Regresses ``ln(g2 - 1)`` (bunching) or ``ln(1 - g2)`` (cross dip)
    against |tau|.  Used for seeding fits and for choosing normalization
    windows; raises when there is no usable excess signal.
    """
    tau = np.abs(np.asarray(tau_us, dtype=float))
    y = np.asarray(g2, dtype=float) - 1.0 if bunching else 1.0 - np.asarray(g2, dtype=float)
    mask = (y > 0) & (y < (np.inf if bunching else 1.0)) & (tau > 0)
    if mask.sum() < 3:
        raise NoBunchingError("no excess correlation signal to regress")
    # keep only the signal-dominated range: tail points that survived the
    # y > 0 cut are censored positive noise and would flatten the slope
    amplitude = np.median(np.sort(y[mask])[-5:])
    strong = mask & (y > 0.05 * amplitude)
    if strong.sum() >= 3:
        mask = strong
    # weight by the excess: the log of a noisy small excess carries little
    # information and would otherwise dominate the slope
    coef = np.polynomial.polynomial.polyfit(tau[mask], np.log(y[mask]), 1,
                                            w=y[mask])
    gamma = -coef[1]
    if gamma <= 0 or not np.isfinite(gamma):
        gamma = 1.0 / tau[mask].max()
    return float(gamma)


def choose_norm_window(hist: CorrelationHistogram, rep_period_ps: int) -> float:
    """Normalization window 5/gamma_b_estimate (ps) from a coarse pre-fit.

    Provisionally normalizes the pulse-binned peaks to the outer half of
    the histogram, regresses the decay and returns min(5/gamma, 80% of
    the span).
    """
    span = np.abs(hist.centers).max()
    peaks = pulse_bin(hist, rep_period_ps, exclude_central=True,
                      norm_window_ps=0.5 * span)
    tau_us = peaks.pulse_index * rep_period_ps * 1e-6
    gamma = estimate_gamma_b(tau_us, peaks.g2, bunching=True)
    return float(min(5.0 / gamma * 1e6, 0.8 * span))


def _scaled_covariance(res, n_points: int):
    """Covariance at the minimizer scaled by the reduced chi square."""
    dof = max(n_points - res.x.size, 1)
    chi2 = float(res.fun @ res.fun)
    jtj = res.jac.T @ res.jac
    try:
        cov = np.linalg.inv(jtj) * (chi2 / dof)
    except np.linalg.LinAlgError as exc:
        raise FitConvergenceError(
            f"singular normal equations at the fit minimum: {exc}",
            last_result=res) from exc
    return cov, chi2 / dof


def fit_auto(peaks: PulsePeaks, min_pulse_index: int = 1, p_xx: float = 1.0,
             max_iterations: int = 200) -> BlinkFitResult:
    """Fit the bunching model to pulse-binned, normalized peaks.

    Peaks with |pulse_index| < ``min_pulse_index`` are excluded (the
    default drops only the central antibunching peak; raise it to mask
    residual near-zero-delay structure).  ``p_xx`` scales the excitation
    efficiency ``eta_ex = p_xx * beta/(1+beta)``.
    """
    sel = np.abs(peaks.pulse_index) >= max(min_pulse_index, 1)
    tau = np.abs(peaks.pulse_index[sel]) * peaks.rep_period_ps * 1e-6
    y = peaks.g2[sel]
    wt = peaks.weight[sel]
    if tau.size < 8:
        raise ValidationError(
            f"need at least 8 peaks to fit, got {tau.size}")

    amp0, gamma0 = _seed_bunching(tau, y)
    sw = np.sqrt(wt)

    # Peaks produced by pulse_bin are normalized to their own mean over the
    # window peaks, so the model is divided by its mean over the same
    # subset; otherwise the residual bunching tail inside the window would
    # bias the amplitude.  Synthetic raw-model peaks carry no window.
    if peaks.norm_window_ps:
        in_window = tau >= peaks.norm_window_ps * 1e-6
    else:
        in_window = None

    def _model_jac(params):
        amp, gamma = params
        decay = np.exp(-gamma * tau)
        m = 1.0 + amp * decay
        jac = np.column_stack((decay, -amp * tau * decay))
        return m, jac

    def residuals(params):
        m, _ = _model_jac(params)
        if in_window is not None:
            m = m / m[in_window].mean()
        return sw * (m - y)

    def jacobian(params):
        m, jac = _model_jac(params)
        if in_window is not None:
            mbar = m[in_window].mean()
            jbar = jac[in_window].mean(axis=0)
            jac = (jac - np.outer(m / mbar, jbar)) / mbar
        return jac * sw[:, None]

    res = least_squares(residuals, x0=[amp0, gamma0], jac=jacobian,
                        method="lm", xtol=1e-9, max_nfev=max_iterations)
    if not res.success:
        raise FitConvergenceError(
            f"bunching fit did not converge: {res.message}", last_result=res)
    amp, gamma_b = res.x
    if amp <= 0:
        raise NoBunchingError("no bunching detected: fitted amplitude <= 0")
    if gamma_b <= 0:
        raise NoBunchingError("no bunching detected: fitted decay rate <= 0")
    if (tau.max() - tau.min()) * gamma_b < 1.0:
        raise ValidationError(
            "peaks span less than one decay constant of the fitted rate; "
            "widen the correlation window")

    cov_ag, chi2_per_dof = _scaled_covariance(res, tau.size)
    beta = 1.0 / amp
    transform = np.array([[-1.0 / amp ** 2, 0.0], [0.0, 1.0]])
    cov_bg = transform @ cov_ag @ transform.T
    beta_err = float(np.sqrt(cov_bg[0, 0]))
    gamma_b_err = float(np.sqrt(cov_bg[1, 1]))

    gamma_gc, gamma_cg = decompose_rates(beta, gamma_b)
    gamma_b = gamma_gc + gamma_cg  # re-derive so the sum identity is exact
    denom = (1.0 + beta) ** 2
    d_rates = np.array([[-gamma_b / denom, 1.0 / (1.0 + beta)],
                        [gamma_b / denom, beta / (1.0 + beta)]])
    cov_rates = d_rates @ cov_bg @ d_rates.T
    eta_ex = p_xx * beta / (1.0 + beta)
    eta_ex_err = p_xx * beta_err / denom

    return BlinkFitResult(
        model_id=MODEL_AUTO,
        gamma_b=float(gamma_b),
        gamma_b_err=gamma_b_err,
        chi2_per_dof=float(chi2_per_dof),
        fit_window_us=(float(tau.min()), float(tau.max())),
        n_points=int(tau.size),
        beta=float(beta),
        beta_err=beta_err,
        gamma_gc=float(gamma_gc),
        gamma_gc_err=float(np.sqrt(cov_rates[0, 0])),
        gamma_cg=float(gamma_cg),
        gamma_cg_err=float(np.sqrt(cov_rates[1, 1])),
        eta_ex=float(eta_ex),
        eta_ex_err=float(eta_ex_err),
        cov_beta_gamma=cov_bg,
    )


def _seed_bunching(tau, y):
    """Initial (amplitude, gamma) from log-linear regression of g2 - 1."""
    excess = y - 1.0
    pos = excess > 0
    if pos.sum() < 3:
        raise NoBunchingError(
            "no bunching detected: fewer than 3 peaks exceed the flat level")
    coef = np.polynomial.polynomial.polyfit(tau[pos], np.log(excess[pos]), 1)
    amp0 = float(np.exp(coef[0]))
    gamma0 = float(-coef[1])
    if gamma0 <= 0 or not np.isfinite(gamma0):
        gamma0 = 1.0 / tau.max()
    return amp0, gamma0


def fit_cross(hist: CorrelationHistogram, norm_window_ps: float | None = None,
              max_iterations: int = 200) -> BlinkFitResult:
    """Fit the cross-correlation dip model to a linear histogram.

    Returns the blinking rate plus the per-side recovery times.  When a
    fitted recovery time falls below the bin width it is reported as that
    upper bound and ``recovery_resolved`` is cleared.  ``beta`` and the
    rate decomposition are not identified by this model and stay None.
    """
    if hist.kind != "linear":
        raise ValidationError("fit_cross() needs a linear histogram")
    width_us = hist.bin_width_ps * 1e-6
    centers_us = hist.centers * 1e-6
    span_us = np.abs(centers_us).max()

    # coarse gamma estimate on a provisional outer-window normalization
    provisional = hist.normalize(0.75 * span_us * 1e6)
    gamma0 = estimate_gamma_b(centers_us, provisional, bunching=False)
    if span_us < 5.0 / gamma0:
        raise ValidationError(
            f"histogram spans {span_us:.3g} us but 5/gamma_b_estimate is "
            f"{5.0 / gamma0:.3g} us; widen the correlation window")
    window_ps = norm_window_ps if norm_window_ps else 5.0 / gamma0 * 1e6
    y = hist.normalize(window_ps)

    density = hist.normalization / hist.bin_width_ps
    denom = density * hist.widths
    weight = denom ** 2 / np.maximum(hist.counts, 1.0)
    sw = np.sqrt(weight)

    atau = np.abs(centers_us)
    positive = centers_us > 0
    negative = centers_us < 0
    # the data are normalized to their own mean over the window bins, so
    # the model is divided by its mean over the same bins; this removes
    # the bias from the model not quite reaching 1 inside the window
    in_window = atau >= window_ps * 1e-6

    def _pieces(params):
        gamma, k_x, k_xp = params
        decay = np.exp(-gamma * atau)
        envelope = 1.0 - decay
        rec = np.zeros_like(atau)
        rec[positive] = 1.0 - np.exp(-k_xp * atau[positive])
        rec[negative] = 1.0 - np.exp(-k_x * atau[negative])
        m = envelope * rec
        d_gamma = atau * decay * rec
        d_kx = np.zeros_like(atau)
        d_kx[negative] = envelope[negative] * atau[negative] * np.exp(-k_x * atau[negative])
        d_kxp = np.zeros_like(atau)
        d_kxp[positive] = envelope[positive] * atau[positive] * np.exp(-k_xp * atau[positive])
        jac = np.column_stack((d_gamma, d_kx, d_kxp))
        return m, jac

    def residuals(params):
        m, _ = _pieces(params)
        return sw * (m / m[in_window].mean() - y)

    def jacobian(params):
        m, jac = _pieces(params)
        mbar = m[in_window].mean()
        jbar = jac[in_window].mean(axis=0)
        scaled = (jac - np.outer(m / mbar, jbar)) / mbar
        return scaled * sw[:, None]

    k0_x = _seed_recovery(atau[negative], y[negative], gamma0, width_us)
    k0_xp = _seed_recovery(atau[positive], y[positive], gamma0, width_us)
    res = least_squares(residuals, x0=[gamma0, k0_x, k0_xp], jac=jacobian,
                        method="trf", bounds=([0.0, 0.0, 0.0], np.inf),
                        xtol=1e-9, max_nfev=4 * max_iterations)
    if not res.success:
        raise FitConvergenceError(
            f"cross-correlation fit did not converge: {res.message}",
            last_result=res)
    gamma_b, k_x, k_xp = res.x
    if gamma_b <= 0:
        raise NoBunchingError("no blinking envelope detected in cross data")
    cov, chi2_per_dof = _scaled_covariance(res, y.size)

    tau_x, tau_x_err, res_x = _recovery_time(k_x, np.sqrt(cov[1, 1]), width_us)
    tau_xp, tau_xp_err, res_xp = _recovery_time(k_xp, np.sqrt(cov[2, 2]), width_us)

    return BlinkFitResult(
        model_id=MODEL_CROSS,
        gamma_b=float(gamma_b),
        gamma_b_err=float(np.sqrt(cov[0, 0])),
        chi2_per_dof=float(chi2_per_dof),
        fit_window_us=(float(-span_us), float(span_us)),
        n_points=int(y.size),
        tau_rec_x_us=tau_x,
        tau_rec_x_err=tau_x_err,
        tau_rec_xp_us=tau_xp,
        tau_rec_xp_err=tau_xp_err,
        recovery_resolved=bool(res_x and res_xp),
    )


def _seed_recovery(atau, y, gamma0, width_us):
    """Initial recovery rate for one side of the cross dip."""
    if atau.size == 0:
        return 1.0 / width_us
    order = np.argsort(atau)
    atau, y = atau[order], y[order]
    envelope = 1.0 - np.exp(-gamma0 * atau)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(envelope > 0, y / envelope, np.nan)
    usable = np.isfinite(ratio) & (ratio > 0.05) & (ratio < 0.95)
    if not np.any(usable[: max(4, atau.size // 4)]):
        # dip recovers within the first bin
        return 3.0 / width_us
    i = np.flatnonzero(usable)[0]
    k = -np.log(1.0 - min(ratio[i], 0.95)) / atau[i]
    return float(np.clip(k, 1e-3 / width_us, 1e3 / width_us))


def _recovery_time(k, k_err, width_us):
    if k <= 0 or 1.0 / k < width_us:
        return float(width_us), float("nan"), False
    tau = 1.0 / k
    return float(tau), float(k_err / k ** 2), True


def normalized_intensity(n_mix, n_gate, n_tp):
    """Gate-corrected bright-state intensity (n_mix - n_gate)/n_tp."""
    n_tp_arr = np.asarray(n_tp, dtype=float)
    if np.any(n_tp_arr <= 0):
        raise ValidationError("n_tp must be > 0")
    out = (np.asarray(n_mix, dtype=float) - np.asarray(n_gate, dtype=float)) / n_tp_arr
    return out if out.ndim else float(out)


def intensity_ratios(n_x, n_xplus) -> tuple[float, float]:
    """Intensity ratios (N_X, N_X+) / (N_X + N_X+)."""
    if n_x < 0 or n_xplus < 0:
        raise ValidationError("counts must be >= 0")
    total = n_x + n_xplus
    if total == 0:
        raise ValidationError("both channel counts are zero")
    r_x = n_x / total
    return r_x, 1.0 - r_x


@dataclass(frozen=True)
class SaturationFit:
    plateau: float
    p_sat: float
    offset: float
    plateau_err: float
    p_sat_err: float
    offset_err: float
    chi2_per_dof: float
    identifiable: bool


def fit_saturation(powers_nw, intensities, max_iterations: int = 200) -> SaturationFit:
    """Fit I(P) = offset + plateau * P/(P + p_sat) to a gate-power sweep.

    Constant data is not an error: it returns plateau ~ 0 with the
    ``identifiable`` flag cleared (p_sat is then meaningless).
    """
    p = np.asarray(powers_nw, dtype=float)
    y = np.asarray(intensities, dtype=float)
    if p.size < 5:
        raise ValidationError(f"need at least 5 points, got {p.size}")
    if np.unique(p).size != p.size:
        raise ValidationError("powers must be distinct")

    order = np.argsort(p)
    p, y = p[order], y[order]
    offset0 = y[0]
    plateau0 = y.max() - offset0
    scale = max(abs(y).max(), 1.0)
    if plateau0 <= 0 or (y.max() - y.min()) < 1e-9 * scale:
        return SaturationFit(plateau=0.0, p_sat=float("nan"), offset=float(y.mean()),
                             plateau_err=float(y.std()), p_sat_err=float("nan"),
                             offset_err=float(y.std()), chi2_per_dof=0.0,
                             identifiable=False)

    half = offset0 + 0.5 * plateau0
    above = np.flatnonzero(y >= half)
    p_sat0 = p[above[0]] if above.size and p[above[0]] > 0 else max(np.median(p), 1e-6)

    def residuals(params):
        plateau, p_sat, offset = params
        return offset + plateau * p / (p + p_sat) - y

    def jacobian(params):
        plateau, p_sat, offset = params
        frac = p / (p + p_sat)
        return np.column_stack((frac, -plateau * p / (p + p_sat) ** 2,
                                np.ones_like(p)))

    res = least_squares(residuals, x0=[plateau0, p_sat0, offset0], jac=jacobian,
                        method="trf",
                        bounds=([-np.inf, 1e-12, -np.inf], np.inf),
                        xtol=1e-9, max_nfev=4 * max_iterations)
    if not res.success:
        raise FitConvergenceError(
            f"saturation fit did not converge: {res.message}", last_result=res)
    plateau, p_sat, offset = res.x
    cov, chi2_per_dof = _scaled_covariance(res, p.size)
    errs = np.sqrt(np.diag(cov))
    identifiable = bool(errs[1] < abs(p_sat) and abs(plateau) > 2 * errs[0])
    return SaturationFit(
        plateau=float(plateau), p_sat=float(p_sat), offset=float(offset),
        plateau_err=float(errs[0]), p_sat_err=float(errs[1]),
        offset_err=float(errs[2]), chi2_per_dof=float(chi2_per_dof),
        identifiable=identifiable,
    )


@dataclass(frozen=True)
class SweepRow:
    label: float
    result: BlinkFitResult | None
    error: str | None = None


@dataclass(frozen=True)
class SweepTable:
    """Per-label fit results with the capture-rate crossing diagnostic.

    ``crossings`` lists (label_low, label_high) pairs between which
    gamma_gc - gamma_cg changes sign; a balanced label appears as a
    degenerate pair (label, label).
    """

    rows: tuple
    crossings: tuple

    CSV_HEADER = ("label", "beta", "beta_err", "gamma_b", "gamma_b_err",
                  "gamma_gc", "gamma_cg", "eta_ex", "chi2_per_dof")

    def csv_rows(self):
        out = []
        for row in self.rows:
            r = row.result
            if r is None:
                out.append((row.label,) + ("",) * 8)
                continue
            out.append((row.label, r.beta, r.beta_err, r.gamma_b, r.gamma_b_err,
                        r.gamma_gc, r.gamma_cg, r.eta_ex, r.chi2_per_dof))
        return out


def sweep_analysis(items, mode: str = "auto", **fit_kwargs) -> SweepTable:
    """Run one blinking fit per sweep label and collect the results.

    ``items`` is a sequence of (label, payload) pairs; payloads are
    :class:`PulsePeaks` for the auto model or linear
    :class:`CorrelationHistogram` objects for the cross model.  Per-label
    fit failures are recorded in the row instead of aborting the sweep.
    """
    items = list(items)
    if not items:
        raise ValidationError("sweep needs at least one labelled input")
    labels = [label for label, _ in items]
    if len(set(labels)) != len(labels):
        raise ValidationError("sweep labels must be unique")
    if mode not in ("auto", "cross"):
        raise ValidationError(f"unknown sweep mode {mode!r}")

    rows = []
    for label, payload in sorted(items, key=lambda item: item[0]):
        try:
            if mode == "auto":
                result = fit_auto(payload, **fit_kwargs)
            else:
                result = fit_cross(payload, **fit_kwargs)
            rows.append(SweepRow(label=label, result=result))
        except (NumericsError, ValidationError) as exc:
            rows.append(SweepRow(label=label, result=None, error=str(exc)))

    crossings = []
    usable = [(row.label, row.result.gamma_gc - row.result.gamma_cg, row.result.gamma_b)
              for row in rows
              if row.result is not None and row.result.gamma_gc is not None]
    for i, (label, diff, gamma_b) in enumerate(usable):
        if abs(diff) < 1e-9 * gamma_b:
            crossings.append((label, label))
        elif i + 1 < len(usable):
            nxt_label, nxt_diff, _ = usable[i + 1]
            if diff * nxt_diff < 0:
                crossings.append((label, nxt_label))
    return SweepTable(rows=tuple(rows), crossings=tuple(crossings))


__all__ = [
    "BlinkFitResult",
    "SaturationFit",
    "SweepRow",
    "SweepTable",
    "MODEL_AUTO",
    "MODEL_CROSS",
    "estimate_gamma_b",
    "choose_norm_window",
    "fit_auto",
    "fit_cross",
    "fit_saturation",
    "normalized_intensity",
    "intensity_ratios",
    "sweep_analysis",
]
