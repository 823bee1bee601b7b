"""Power-quantity estimation from sampled voltage/current windows.

Given one window of simultaneously sampled u(t) and i(t):

    U = sqrt(mean(u^2))             (same for I)
    phi = phase of i relative to u, from the cross-correlation peak
    P = U * I * cos(phi)            active power, watts
    Q = U * I * sin(phi)            reactive power, var
    S = U * I                       apparent power, VA

so P^2 + Q^2 = S^2 by construction.  Energy is accumulated as a left-endpoint
Riemann sum, E += P * T_s per sampling step.  Windows should span an integer
number of mains cycles (default 10, i.e. 200 ms at 50 Hz) so the RMS
estimates are unbiased.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

# Sampling-frequency band accepted by the metering pipeline.  The lower edge
# is twice the 50 Hz mains frequency: below that the waveform is undersampled
# and the estimates become meaningless.
NYQUIST_FLOOR_HZ = 100.0
DEFAULT_FS_CEILING_HZ = 10_000.0

DEFAULT_WINDOW_CYCLES = 10


class NoSignalError(ValueError):
    """A phase estimate was requested for a signal that carries no signal."""


class SamplingFrequencyError(ValueError):
    """Sampling frequency outside the accepted band."""

    def __init__(self, frequency: float, reason: str):
        super().__init__(f"sampling frequency {frequency} Hz rejected: {reason}")
        self.frequency = frequency


@dataclass(frozen=True)
class PowerTriplet:
    """Active, reactive and apparent power of one measurement window."""

    active_p: float
    reactive_q: float
    apparent_s: float


@dataclass(frozen=True)
class EnergyAccumulator:
    """Running energy integral with a fixed sampling step."""

    step_s: float
    energy_j: float = 0.0
    sample_count: int = 0

    def __post_init__(self):
        if self.step_s <= 0.0:
            raise ValueError(f"step_s must be positive, got {self.step_s}")


def rms(samples) -> float:
    """Root mean square of a sample window (at least two samples)."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1:
        raise ValueError("rms expects a one-dimensional sample window")
    if len(x) < 2:
        raise ValueError(f"rms needs at least 2 samples, got {len(x)}")
    return float(np.sqrt(np.mean(np.square(x))))


def crest_rms(peak: float) -> float:
    """RMS of a pure sinusoid from its amplitude: peak / sqrt(2)."""
    if peak < 0.0:
        raise ValueError(f"peak amplitude must be non-negative, got {peak}")
    return peak / math.sqrt(2.0)


def phase_shift(u_samples, i_samples, sample_rate: float, mains_freq: float) -> float:
    """Phase of the current relative to the voltage, in radians in (-pi, pi].

    Positive means the current lags (inductive load).  The estimate is the
    lag maximizing the circular cross-correlation of the two windows,
    refined to sub-sample resolution by parabolic interpolation of the peak
    and its neighbours.  The lag search is limited to +/- half a mains
    period, which spans the full (-pi, pi] phase range; exact correlation
    ties resolve toward the smaller absolute lag.

    The window must cover at least two mains cycles at four or more samples
    per cycle, and both channels must be the same length.
    """
    u = np.asarray(u_samples, dtype=float)
    i = np.asarray(i_samples, dtype=float)
    if len(u) != len(i):
        raise ValueError(f"voltage and current windows differ in length ({len(u)} != {len(i)})")
    if sample_rate <= 0.0 or mains_freq <= 0.0:
        raise ValueError("sample_rate and mains_freq must be positive")
    if len(u) < 2.0 * sample_rate / mains_freq:
        raise ValueError(
            f"window of {len(u)} samples covers less than two mains cycles "
            f"at {sample_rate} Hz"
        )
    if sample_rate < 4.0 * mains_freq:
        raise ValueError(
            f"sample_rate {sample_rate} Hz is below 4x the mains frequency"
        )
    if not np.any(i):
        raise NoSignalError("current window is all zero; phase is undefined")
    if not np.any(u):
        raise NoSignalError("voltage window is all zero; phase is undefined")

    half_period = round(sample_rate / (2.0 * mains_freq))
    lags = sorted(range(-half_period, half_period + 1), key=abs)
    correlations = {lag: float(np.dot(u, np.roll(i, -lag))) for lag in lags}
    best_lag = lags[0]
    best = correlations[best_lag]
    for lag in lags[1:]:
        if correlations[lag] > best:
            best, best_lag = correlations[lag], lag

    # Parabolic refinement through the peak and its two neighbours; skipped
    # at the search boundary and for degenerate (curvature-free) peaks.
    offset = 0.0
    if abs(best_lag) < half_period:
        left = correlations[best_lag - 1]
        right = correlations[best_lag + 1]
        denom = left - 2.0 * best + right
        if denom < 0.0:
            offset = 0.5 * (left - right) / denom
            offset = max(-1.0, min(1.0, offset))

    phi = 2.0 * math.pi * mains_freq * (best_lag + offset) / sample_rate
    if phi <= -math.pi:
        phi += 2.0 * math.pi
    elif phi > math.pi:
        phi -= 2.0 * math.pi
    return phi


def power_triplet(u_rms: float, i_rms: float, phi: float) -> PowerTriplet:
    """Active/reactive/apparent power from RMS values and the phase angle."""
    if u_rms < 0.0 or i_rms < 0.0:
        raise ValueError("RMS values must be non-negative")
    if not math.isfinite(phi):
        raise ValueError(f"phase angle must be finite, got {phi}")
    s = u_rms * i_rms
    return PowerTriplet(
        active_p=s * math.cos(phi),
        reactive_q=s * math.sin(phi),
        apparent_s=s,
    )


def accumulate(acc: EnergyAccumulator, active_p: float) -> EnergyAccumulator:
    """Advance the energy integral by one sampling step at power ``active_p``."""
    return replace(
        acc,
        energy_j=acc.energy_j + active_p * acc.step_s,
        sample_count=acc.sample_count + 1,
    )


def validate_sampling_frequency(
    frequency: float, ceiling: float = DEFAULT_FS_CEILING_HZ
) -> float:
    """Return ``frequency`` if it lies in [NYQUIST_FLOOR_HZ, ceiling].

    Anything below 100 Hz undersamples the mains waveform and is rejected;
    the ceiling guards against runaway sample volumes.
    """
    if not math.isfinite(frequency):
        raise SamplingFrequencyError(frequency, "not a finite number")
    if frequency < NYQUIST_FLOOR_HZ:
        raise SamplingFrequencyError(
            frequency, f"below the {NYQUIST_FLOOR_HZ:.0f} Hz floor"
        )
    if frequency > ceiling:
        raise SamplingFrequencyError(frequency, f"above the {ceiling:.0f} Hz ceiling")
    return frequency
