"""Correlation histograms from time-tag streams.

Coincidences are counted with a sliding-window sweep over the two sorted
channel arrays (linear in tags times window occupancy, never all-pairs).
Linear histograms use bins centred on multiples of the bin width; a delay
exactly on a bin boundary is assigned away from zero, which makes the
mirror identity ``counts_ab(+tau) == counts_ba(-tau)`` exact on the
integer-picosecond grid.  For even bin widths the central bin is one tick
narrower than the others; per-bin widths are tracked so normalisation
stays exact.

Logarithmic correlation counts pairs into precomputed log-spaced edges
(exact, no cascaded averaging) with the multi-pointer scheme whose cost is
tags times number of edges, independent of window occupancy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import curve_fit

from .errors import ValidationError
from .stream import CHANNELS, TimeTagStream, channel_code


@njit(cache=True, nogil=True)
def _sweep_count(a, b, same, width, shift, n_side, lim):
    counts = np.zeros(2 * n_side + 1, dtype=np.int64)
    n_b = b.size
    lo = 0
    hi = 0
    for i in range(a.size):
        t = a[i]
        tmin = t - lim
        tmax = t + lim
        while lo < n_b and b[lo] < tmin:
            lo += 1
        if hi < lo:
            hi = lo
        while hi < n_b and b[hi] <= tmax:
            hi += 1
        for j in range(lo, hi):
            if same and j == i:
                continue
            d = b[j] - t
            if d >= 0:
                k = (d + shift) // width
            else:
                k = -((-d + shift) // width)
            counts[k + n_side] += 1
    return counts


@njit(cache=True, nogil=True)
def _edge_window_count(a, b, edges):
    # pointer per edge; lo[k] = first index j with b[j] >= a[i] + edges[k]
    n_edges = edges.size
    n_b = b.size
    counts = np.zeros(n_edges - 1, dtype=np.int64)
    lo = np.zeros(n_edges, dtype=np.int64)
    for i in range(a.size):
        t = a[i]
        for k in range(n_edges):
            j = lo[k]
            e = t + edges[k]
            while j < n_b and b[j] < e:
                j += 1
            lo[k] = j
        for k in range(n_edges - 1):
            counts[k] += lo[k + 1] - lo[k]
    return counts


def _centered_bin_layout(n_side: int, width: int):
    """Integer coverage [lo_k, hi_k] and float edges of centred bins."""
    shift = width // 2
    k = np.arange(1, n_side + 1, dtype=np.int64)
    lo_pos = k * width - shift
    hi_pos = k * width + (width - shift) - 1
    half0 = width - shift - 1
    lo = np.concatenate((-hi_pos[::-1], [-half0], lo_pos))
    hi = np.concatenate((-lo_pos[::-1], [half0], hi_pos))
    edges = np.concatenate((lo - 0.5, [hi[-1] + 0.5]))
    return lo, hi, edges


@dataclass
class CorrelationHistogram:
    """Binned coincidence counts between two channels.

    ``counts[k]`` is the number of ordered pairs (t_a, t_b) with
    ``t_b - t_a`` in bin k.  Linear histograms carry the nominal
    ``bin_width_ps``; logarithmic ones carry per-bin widths through the
    edges and a precomputed ``normalized`` array (flat limit 1).
    """

    bin_edges: np.ndarray
    counts: np.ndarray
    channel_pair: tuple
    n_a: int
    n_b: int
    duration_ps: int
    kind: str = "linear"
    bin_width_ps: int | None = None
    normalization: float | None = None
    normalized: np.ndarray | None = field(default=None)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    def normalize(self, norm_window_ps: float) -> np.ndarray:
        """Normalize counts to the mean coincidence density at large delays.

        The reference density is taken from bins with |center| >=
        norm_window_ps; the flat (uncorrelated) limit maps to 1.
        """
        if self.kind != "linear":
            raise ValidationError("normalize() applies to linear histograms")
        if norm_window_ps <= 0:
            raise ValidationError("norm_window_ps must be > 0")
        centers = self.centers
        sel = np.abs(centers) >= norm_window_ps
        if not np.any(sel):
            raise ValidationError(
                f"normalization window {norm_window_ps} ps exceeds the "
                f"histogram span {abs(centers).max()} ps")
        widths = self.widths
        density = self.counts[sel].sum() / widths[sel].sum()
        if density <= 0:
            raise ValidationError("no coincidences in the normalization window")
        self.normalization = density * self.bin_width_ps
        self.normalized = self.counts / (density * widths)
        return self.normalized


def _channel_times(stream: TimeTagStream, channel):
    code = channel_code(channel)
    t = stream.timestamps[stream.channels == code]
    if t.size == 0:
        raise ValidationError(f"channel {CHANNELS[code]} has no records")
    return t, code


def correlate(stream: TimeTagStream, channel_a, channel_b,
              tau_max_ps: float, bin_width_ps: int) -> CorrelationHistogram:
    """Linear-bin correlation histogram of two channels of one stream.

    The histogram spans at least ±tau_max_ps (rounded up to a whole number
    of bins).  Autocorrelation (same channel twice) excludes the pairing
    of each record with itself.
    """
    width = int(bin_width_ps)
    if width <= 0:
        raise ValidationError(f"bin_width_ps must be > 0, got {bin_width_ps}")
    if tau_max_ps < width:
        raise ValidationError("tau_max_ps must be at least one bin width")
    a, code_a = _channel_times(stream, channel_a)
    b, code_b = _channel_times(stream, channel_b)
    if np.any(np.diff(stream.timestamps) < 0):
        raise ValidationError("stream timestamps are not sorted")

    n_side = int(np.ceil(tau_max_ps / width))
    shift = width // 2
    lim = n_side * width + (width - shift) - 1
    counts = _sweep_count(a, b, code_a == code_b, width, shift, n_side, lim)
    _, _, edges = _centered_bin_layout(n_side, width)
    return CorrelationHistogram(
        bin_edges=edges,
        counts=counts,
        channel_pair=(CHANNELS[code_a], CHANNELS[code_b]),
        n_a=a.size,
        n_b=b.size,
        duration_ps=stream.duration_ps,
        kind="linear",
        bin_width_ps=width,
    )


@dataclass
class PulsePeaks:
    """Pulse-period-integrated, normalized coincidence peaks.

    One row per laser-pulse delay index; ``g2`` is the window sum divided
    by the mean of the windows at |delay| >= the normalization window, and
    ``weight`` is the inverse variance propagated from Poisson counting.
    """

    pulse_index: np.ndarray
    g2: np.ndarray
    weight: np.ndarray
    raw: np.ndarray
    rep_period_ps: int
    normalization: float
    n_norm_peaks: int
    norm_window_ps: float | None = None

    def __len__(self):
        return self.pulse_index.size


def pulse_bin(hist: CorrelationHistogram, rep_period_ps: int,
              exclude_central: bool = True,
              norm_window_ps: float = None) -> PulsePeaks:
    """Integrate a linear histogram into windows of one pulse period each.

    Windows are centred on integer multiples of ``rep_period_ps`` (the
    period must be a multiple of the histogram bin width) and normalized
    to the mean of the windows at |delay| >= ``norm_window_ps``.  Windows
    that are only partially covered by the histogram are dropped; the
    central window is omitted when ``exclude_central`` is set.
    """
    if hist.kind != "linear":
        raise ValidationError("pulse_bin() needs a linear histogram")
    period = int(rep_period_ps)
    width = hist.bin_width_ps
    if period <= 0 or period % width != 0:
        raise ValidationError(
            f"rep_period_ps ({rep_period_ps}) must be a positive multiple of "
            f"the histogram bin width ({width})")
    if norm_window_ps is None or norm_window_ps <= 0:
        raise ValidationError("norm_window_ps must be a positive delay")

    centers = np.rint(hist.centers).astype(np.int64)
    span = np.abs(centers).max()
    if span < norm_window_ps:
        raise ValidationError(
            f"histogram span {span} ps is smaller than the normalization "
            f"window {norm_window_ps} ps")

    half = period // 2
    mag = np.abs(centers)
    p = np.where(centers >= 0, (mag + half) // period, -((mag + half) // period))
    p_max = int(p.max())
    per_window = np.bincount((p + p_max).astype(np.int64), minlength=2 * p_max + 1)
    sums = np.bincount((p + p_max).astype(np.int64), weights=hist.counts,
                       minlength=2 * p_max + 1)
    index = np.arange(-p_max, p_max + 1)

    bins_per_period = period // width
    expected = np.full(index.size, bins_per_period)
    if bins_per_period % 2 == 0:
        expected[index == 0] = bins_per_period - 1
    complete = per_window == expected

    norm_sel = complete & (np.abs(index) * period >= norm_window_ps)
    if not np.any(norm_sel):
        raise ValidationError(
            "no complete peaks beyond the normalization window")
    normalization = sums[norm_sel].mean()
    if normalization <= 0:
        raise ValidationError("normalization window contains no coincidences")

    keep = complete.copy()
    if exclude_central:
        keep &= index != 0
    raw = sums[keep]
    g2 = raw / normalization
    weight = normalization ** 2 / np.maximum(raw, 1.0)
    return PulsePeaks(
        pulse_index=index[keep],
        g2=g2,
        weight=weight,
        raw=raw,
        rep_period_ps=period,
        normalization=float(normalization),
        n_norm_peaks=int(norm_sel.sum()),
        norm_window_ps=float(norm_window_ps),
    )


def log_correlate(stream: TimeTagStream, channel_a, channel_b,
                  tau_min_ps: float, tau_max_ps: float,
                  points_per_decade: int = 8,
                  edge_snap_ps: int | None = None) -> CorrelationHistogram:
    """Multi-scale correlation with logarithmically spaced delay bins.

    Bins cover |tau| in [tau_min_ps, tau_max_ps].  For a same-channel call
    each unordered pair enters once (positive delay); for two channels the
    two delay signs are folded.  ``normalized`` divides each bin by its
    width and by the uncorrelated coincidence density so the flat limit is
    1.  For pulsed streams pass the pulse period as ``edge_snap_ps``: bin
    edges well above the period are snapped to period multiples, which
    removes the partial-peak jitter of the baseline estimate.
    """
    if tau_min_ps < 1 or tau_min_ps >= tau_max_ps:
        raise ValidationError(
            "need 1 ps <= tau_min_ps < tau_max_ps for log-spaced bins")
    if points_per_decade < 4:
        raise ValidationError("points_per_decade must be >= 4")
    a, code_a = _channel_times(stream, channel_a)
    b, code_b = _channel_times(stream, channel_b)

    n_bins = int(np.ceil(points_per_decade * np.log10(tau_max_ps / tau_min_ps)))
    grid = tau_min_ps * 10.0 ** (np.arange(n_bins + 1) / points_per_decade)
    edges = np.rint(grid).astype(np.int64)
    if edge_snap_ps:
        snap = int(edge_snap_ps)
        far = edges >= 4 * snap
        edges[far] = np.rint(edges[far] / snap).astype(np.int64) * snap
    if np.any(np.diff(edges) <= 0):
        raise ValidationError(
            "tau_min_ps is below the bin resolution for this points_per_decade "
            "(log edges collapse on the integer-ps grid)")

    same = code_a == code_b
    counts = _edge_window_count(a, b, edges)
    folds = 1
    if not same:
        counts = counts + _edge_window_count(b, a, edges)
        folds = 2

    duration = stream.duration_ps
    centers = 0.5 * (edges[:-1] + edges[1:])
    widths = np.diff(edges).astype(float)
    density = (a.size / duration) * (b.size / duration)
    expected = folds * density * widths * (duration - centers)
    normalized = np.where(expected > 0, counts / expected, np.nan)

    return CorrelationHistogram(
        bin_edges=edges.astype(float),
        counts=counts,
        channel_pair=(CHANNELS[code_a], CHANNELS[code_b]),
        n_a=a.size,
        n_b=b.size,
        duration_ps=duration,
        kind="log",
        bin_width_ps=None,
        normalization=None,
        normalized=normalized,
    )


def _gauss(x, amp, mu, sig):
    return amp * np.exp(-0.5 * ((x - mu) / sig) ** 2)


def _gauss_pair(x, a1, m1, s1, a2, m2, s2):
    return _gauss(x, a1, m1, s1) + _gauss(x, a2, m2, s2)


def _local_peak(x, hist, width, mask):
    idx = int(np.argmax(np.where(mask, hist, -1)))
    amp = hist[idx]
    # half-width from the nearest half-maximum crossings
    below = np.flatnonzero(hist[:idx] < 0.5 * amp)
    left = below[-1] if below.size else max(idx - 1, 0)
    above = np.flatnonzero(hist[idx + 1:] < 0.5 * amp)
    right = min(idx + 1 + (above[0] if above.size else 0), hist.size - 1)
    sig = max((x[right] - x[left]) / 2.355, 0.4 * width)
    return amp, x[idx], sig, idx


def _two_gauss_seed(x, hist, width):
    """Initial parameters from the two dominant histogram peaks."""
    mask = np.ones(hist.size, dtype=bool)
    a1, m1, s1, idx = _local_peak(x, hist, width, mask)
    mask &= np.abs(x - m1) > 3.0 * s1
    if mask.any():
        a2, m2, s2, _ = _local_peak(x, hist, width, mask)
    else:
        a2, m2, s2 = 0.5 * a1, m1 + 2.0 * s1, s1
    return a1, m1, s1, a2, m2, s2


@dataclass(frozen=True)
class GaussianTraceCheck:
    mean: float
    sigma: float
    chi2_per_dof: float
    chi2_per_dof_two: float
    bimodality_flag: bool


def gaussian_trace_check(trace_counts, improvement_factor: float = 2.0) -> GaussianTraceCheck:
    """Single-Gaussian fit of an intensity-trace count histogram.

    Fits one Gaussian to the histogram of the binned count values,
    reporting chi2 per degree of freedom with Poisson weights.  The
    bimodality flag is set when a two-Gaussian fit improves chi2_per_dof
    by more than ``improvement_factor``.
    """
    counts = np.asarray(trace_counts, dtype=float)
    if counts.size < 100:
        raise ValidationError(
            f"need at least 100 trace bins, got {counts.size}")
    lo, hi = counts.min(), counts.max()
    if hi == lo:
        raise ValidationError("constant trace: count histogram is degenerate")

    target = int(np.clip(np.sqrt(counts.size), 12, 60))
    width = max(1, int(np.ceil((hi - lo + 1) / target)))
    n_hist = int(np.ceil((hi - lo + 1) / width))
    edges = lo - 0.5 + width * np.arange(n_hist + 1)
    hist, _ = np.histogram(counts, bins=edges)
    x = 0.5 * (edges[:-1] + edges[1:])
    err = np.sqrt(np.maximum(hist, 1.0))

    mu0, sig0 = counts.mean(), max(counts.std(), 0.5 * width)
    p_single = (hist.max(), mu0, sig0)
    try:
        p_single, _ = curve_fit(_gauss, x, hist, p0=p_single, sigma=err,
                                absolute_sigma=True, maxfev=5000)
    except RuntimeError:
        pass  # fall back to the moment estimate
    chi2_1 = np.sum(((hist - _gauss(x, *p_single)) / err) ** 2) / max(hist.size - 3, 1)

    chi2_2 = np.inf
    try:
        p0 = _two_gauss_seed(x, hist, width)
        p_two, _ = curve_fit(_gauss_pair, x, hist, p0=p0, sigma=err,
                             absolute_sigma=True, maxfev=10000)
        chi2_2 = np.sum(((hist - _gauss_pair(x, *p_two)) / err) ** 2) / max(hist.size - 6, 1)
    except RuntimeError:
        pass

    flag = bool(np.isfinite(chi2_2) and chi2_2 > 0
                and chi2_1 / chi2_2 > improvement_factor)
    return GaussianTraceCheck(
        mean=float(p_single[1]),
        sigma=float(abs(p_single[2])),
        chi2_per_dof=float(chi2_1),
        chi2_per_dof_two=float(chi2_2),
        bimodality_flag=flag,
    )


__all__ = [
    "CorrelationHistogram",
    "PulsePeaks",
    "GaussianTraceCheck",
    "correlate",
    "pulse_bin",
    "log_correlate",
    "gaussian_trace_check",
]
