"""Time-tagged photon records and the instrument models that produce them.

Timestamps are 64-bit integer picoseconds from the start of the
acquisition.  Channels are named ``X`` (exciton), ``XX`` (biexciton),
``XPLUS`` (trion) and ``AUX``; on disk and in memory they are stored as
small integer codes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

CHANNELS = ("X", "XX", "XPLUS", "AUX")
CHANNEL_CODES = {name: code for code, name in enumerate(CHANNELS)}


def channel_code(channel) -> int:
    """Accepts a channel name or integer code and returns the code."""
    if isinstance(channel, str):
        try:
            return CHANNEL_CODES[channel.upper()]
        except KeyError:
            raise ValidationError(
                f"unknown channel {channel!r}; expected one of {CHANNELS}") from None
    code = int(channel)
    if not 0 <= code < len(CHANNELS):
        raise ValidationError(f"channel code {code} out of range 0..{len(CHANNELS)-1}")
    return code


@dataclass(frozen=True)
class PulseTrain:
    """Pulsed excitation laser. Default 80 MHz repetition, ~9 ps pulses."""

    rep_rate_hz: float = 80e6
    pulse_len_ps: float = 9.0

    def __post_init__(self):
        if self.rep_rate_hz <= 0:
            raise ValidationError(f"rep_rate_hz must be > 0, got {self.rep_rate_hz}")

    @property
    def rep_period_ps(self) -> int:
        # pulses live on the integer-ps grid; sub-ps period residue is dropped
        return int(round(1e12 / self.rep_rate_hz))


@dataclass(frozen=True)
class DetectorModel:
    """Detection imperfections applied per channel.

    ``efficiency`` is either a single fraction for all channels or a
    mapping {channel name: fraction}.  Dark counts are a homogeneous
    Poisson process per channel.  ``dead_time_ps`` is non-paralyzable:
    a record arriving within the dead time of the previously accepted
    record on the same channel is dropped.
    """

    efficiency: float | dict = 1.0
    dark_rate_cps: float = 0.0
    jitter_sigma_ps: float = 0.0
    dead_time_ps: float = 0.0

    def __post_init__(self):
        for name in CHANNELS:
            eff = self.channel_efficiency(name)
            if not 0.0 <= eff <= 1.0:
                raise ValidationError(
                    f"efficiency for channel {name} must be in [0, 1], got {eff}")
        for name in ("dark_rate_cps", "jitter_sigma_ps", "dead_time_ps"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")

    def channel_efficiency(self, channel) -> float:
        name = CHANNELS[channel_code(channel)]
        if isinstance(self.efficiency, dict):
            return float(self.efficiency.get(name, 0.0))
        return float(self.efficiency)


@dataclass
class TimeTagStream:
    """Sorted, channel-labelled photon detection timestamps.

    ``channels`` (uint8 codes) and ``timestamps`` (int64 ps) are parallel
    arrays sorted by time.  ``metadata`` carries provenance: the rate set,
    seed, instrument models and simulator diagnostics.
    """

    channels: np.ndarray
    timestamps: np.ndarray
    duration_ps: int
    rep_period_ps: int | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        if self.channels.shape != self.timestamps.shape:
            raise ValidationError("channels and timestamps must have equal length")
        if self.timestamps.size:
            if np.any(np.diff(self.timestamps) < 0):
                raise ValidationError("timestamps must be non-decreasing")
            if self.timestamps[0] < 0 or self.timestamps[-1] > self.duration_ps:
                raise ValidationError("timestamps must lie in [0, duration_ps]")

    def __len__(self) -> int:
        return self.timestamps.size

    def times(self, channel) -> np.ndarray:
        """Timestamps (int64 ps, sorted) of one channel."""
        code = channel_code(channel)
        return self.timestamps[self.channels == code]

    def counts(self) -> dict:
        """Number of records per channel name."""
        binned = np.bincount(self.channels, minlength=len(CHANNELS))
        return {name: int(binned[code]) for name, code in CHANNEL_CODES.items()}

    def rate_cps(self, channel) -> float:
        """Mean detected rate of one channel in counts per second."""
        if self.duration_ps <= 0:
            return 0.0
        return self.times(channel).size / (self.duration_ps * 1e-12)
