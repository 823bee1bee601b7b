"""Synthetic mains voltage and current for simulated appliance loads.

An appliance is described by its nominal grid voltage, active power P and
apparent power S.  The drawn current is modelled as a sinusoid at the mains
frequency lagging the voltage by arccos(P / S), optionally perturbed by
Gaussian amplitude noise and a constant gain error, which is enough to
reproduce the steady-state behaviour of simple household loads.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

VALID_MAINS_FREQS = (50.0, 60.0)

# Waveform work needs a few samples per cycle; below this the sinusoid is no
# longer recoverable and synthesis refuses to produce a frame.
MIN_SAMPLES_PER_CYCLE = 4


@dataclass(frozen=True)
class ApplianceProfile:
    """Electrical fingerprint of a single-phase appliance.

    ``noise_stddev`` is the standard deviation of additive Gaussian current
    noise as a fraction of the ideal current amplitude; ``gain_error`` is a
    multiplicative error on the current channel (1.0 = perfectly calibrated).
    """

    name: str
    p_active: float
    s_apparent: float
    u_rms_nominal: float = 230.0
    mains_freq: float = 50.0
    noise_stddev: float = 0.0
    gain_error: float = 1.0

    def __post_init__(self):
        if self.u_rms_nominal <= 0.0:
            raise ValueError(f"u_rms_nominal must be positive, got {self.u_rms_nominal}")
        if self.p_active < 0.0:
            raise ValueError(f"p_active must be non-negative, got {self.p_active}")
        if self.s_apparent < self.p_active:
            raise ValueError(
                f"s_apparent ({self.s_apparent}) must not be below p_active ({self.p_active})"
            )
        if float(self.mains_freq) not in VALID_MAINS_FREQS:
            raise ValueError(f"mains_freq must be one of {VALID_MAINS_FREQS}, got {self.mains_freq}")
        if self.noise_stddev < 0.0:
            raise ValueError(f"noise_stddev must be non-negative, got {self.noise_stddev}")
        if self.gain_error <= 0.0:
            raise ValueError(f"gain_error must be positive, got {self.gain_error}")

    @property
    def phase_angle(self) -> float:
        """Current lag behind voltage in radians: arccos(P / S), 0 for a zero load."""
        if self.s_apparent == 0.0:
            return 0.0
        return math.acos(self.p_active / self.s_apparent)

    @property
    def i_rms(self) -> float:
        """Ideal RMS current in amperes, S / U."""
        return self.s_apparent / self.u_rms_nominal

    @property
    def i_peak(self) -> float:
        """Ideal current amplitude in amperes, sqrt(2) * S / U."""
        return math.sqrt(2.0) * self.i_rms

    @property
    def u_peak(self) -> float:
        """Voltage amplitude in volts, sqrt(2) * U."""
        return math.sqrt(2.0) * self.u_rms_nominal


@dataclass(frozen=True)
class WaveformFrame:
    """A window of simultaneously sampled voltage and current."""

    u_samples: np.ndarray
    i_samples: np.ndarray
    sample_rate: float
    start_time: float

    def __post_init__(self):
        if self.sample_rate <= 0.0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if len(self.u_samples) != len(self.i_samples):
            raise ValueError(
                f"voltage and current must have equal length "
                f"({len(self.u_samples)} != {len(self.i_samples)})"
            )
        if len(self.u_samples) < 2:
            raise ValueError("a frame needs at least two samples")

    def __len__(self) -> int:
        return len(self.u_samples)

    @property
    def duration(self) -> float:
        return len(self.u_samples) / self.sample_rate


def synthesize(
    profile: ApplianceProfile,
    sample_rate: float,
    duration: float,
    start_time: float = 0.0,
    rng: np.random.Generator | None = None,
) -> WaveformFrame:
    """Sample one window of the appliance's voltage and current.

    u(t) = sqrt(2) * U * sin(2 pi f t)
    i(t) = gain * sqrt(2) * (S / U) * sin(2 pi f t - phi) + noise

    ``start_time`` is absolute, so consecutive windows are phase-continuous.
    Rejects sample rates below 4x the mains frequency and windows shorter
    than one mains cycle.  With a seeded ``rng`` the output is reproducible
    bit for bit.
    """
    freq = profile.mains_freq
    if sample_rate < MIN_SAMPLES_PER_CYCLE * freq:
        raise ValueError(
            f"sample_rate {sample_rate} Hz is below {MIN_SAMPLES_PER_CYCLE}x "
            f"the mains frequency ({MIN_SAMPLES_PER_CYCLE * freq:.0f} Hz)"
        )
    if duration < 1.0 / freq:
        raise ValueError(
            f"duration {duration} s is shorter than one mains cycle ({1.0 / freq:.3f} s)"
        )
    n = round(duration * sample_rate)

    # Work in units of mains cycles and strip whole cycles off the window
    # start; this keeps the phase argument small no matter how far into a
    # long run the window begins.
    start_cycles = freq * start_time
    frac_cycles = start_cycles - math.floor(start_cycles)
    theta = 2.0 * math.pi * (frac_cycles + (freq / sample_rate) * np.arange(n))

    u = profile.u_peak * np.sin(theta)
    amplitude = profile.gain_error * profile.i_peak
    i = amplitude * np.sin(theta - profile.phase_angle)
    if profile.noise_stddev > 0.0 and profile.i_peak > 0.0:
        if rng is None:
            rng = np.random.default_rng()
        i = i + rng.normal(0.0, profile.noise_stddev * profile.i_peak, n)
    return WaveformFrame(u_samples=u, i_samples=i, sample_rate=float(sample_rate), start_time=start_time)


def relay_gate(frame: WaveformFrame, relay_closed: bool) -> WaveformFrame:
    """Model the load relay: an open relay cuts the current, not the grid voltage."""
    if relay_closed:
        return frame
    return replace(frame, i_samples=np.zeros_like(frame.i_samples))


def _profile_from_section(name: str, section: configparser.SectionProxy) -> ApplianceProfile:
    return ApplianceProfile(
        name=name,
        p_active=section.getfloat("p_active"),
        s_apparent=section.getfloat("s_apparent"),
        u_rms_nominal=section.getfloat("u_rms_nominal", 230.0),
        mains_freq=section.getfloat("mains_freq", 50.0),
        noise_stddev=section.getfloat("noise_stddev", 0.0),
        gain_error=section.getfloat("gain_error", 1.0),
    )


def load_profiles(path: str | Path | None = None) -> dict[str, ApplianceProfile]:
    """Load appliance profiles from an INI file (one section per appliance).

    With no path, the packaged appliance fixtures are used.  Raises
    ``ValueError`` on missing keys or values that violate profile invariants.
    """
    parser = configparser.ConfigParser()
    if path is None:
        text = resources.files("metersim").joinpath("fixtures/appliances.ini").read_text()
        parser.read_string(text)
    else:
        with open(path, "r", encoding="utf-8") as handle:
            parser.read_file(handle)
    profiles: dict[str, ApplianceProfile] = {}
    for name in parser.sections():
        try:
            profiles[name] = _profile_from_section(name, parser[name])
        except (configparser.NoOptionError, TypeError, ValueError) as exc:
            raise ValueError(f"bad profile section [{name}]: {exc}") from exc
    if not profiles:
        raise ValueError(f"no profile sections found in {path}")
    return profiles
