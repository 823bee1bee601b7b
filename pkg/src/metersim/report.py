"""Reference-fleet measurement report.

Runs the full in-process pipeline (waveform synthesis, RMS, phase
estimation, register quantization) for each packaged appliance fixture and
compares the measured quantities against the rated values.  Used both by the
``metersim report`` subcommand and the test suite, so there is exactly one
source of truth for the fixture numbers.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from . import monitor
from .powercalc import PowerTriplet
from .waveform import ApplianceProfile, load_profiles

DEFAULT_SAMPLE_RATE_HZ = 1000.0
DEFAULT_WINDOW_CYCLES = 10

# Rated reactive values differing from sqrt(S^2 - P^2) by more than this are
# flagged as internally inconsistent.
Q_CONSISTENCY_TOLERANCE = 0.01


def measure_profile(
    profile: ApplianceProfile,
    sampling_freq: float = DEFAULT_SAMPLE_RATE_HZ,
    window_cycles: int = DEFAULT_WINDOW_CYCLES,
    seed: int | None = 0,
) -> monitor.PowerReading:
    """One full-pipeline reading for a profile (synthesize, measure, quantize)."""
    state = monitor.new_meter_state(
        meter_id=b"bench\0\0\0",
        profile=profile,
        sampling_freq=sampling_freq,
        seed=seed,
        window_cycles=window_cycles,
    )
    monitor.tick(state, 0.0)  # arm the measurement window
    _, reading = monitor.tick(state, state.measurement_period)
    assert reading is not None
    return reading


def derived_reactive(p_active: float, s_apparent: float) -> float:
    """Reactive power implied by the power triangle: sqrt(S^2 - P^2)."""
    return math.sqrt(max(s_apparent**2 - p_active**2, 0.0))


@dataclass(frozen=True)
class ApplianceReportRow:
    name: str
    rated_p: float
    rated_s: float
    derived_q: float
    rated_q: float | None  # nameplate figure, where one exists
    measured: PowerTriplet

    @property
    def p_error_pct(self) -> float:
        return 100.0 * (self.measured.active_p - self.rated_p) / self.rated_p

    @property
    def s_error_pct(self) -> float:
        return 100.0 * (self.measured.apparent_s - self.rated_s) / self.rated_s

    @property
    def q_error_pct(self) -> float | None:
        if self.derived_q == 0.0:
            return None
        return 100.0 * (self.measured.reactive_q - self.derived_q) / self.derived_q

    @property
    def q_inconsistent(self) -> bool:
        """True when the nameplate reactive figure contradicts the triangle."""
        if self.rated_q is None or self.derived_q == 0.0:
            return False
        return abs(self.rated_q - self.derived_q) / self.derived_q > Q_CONSISTENCY_TOLERANCE


def load_rated_reactive(path: str | Path | None = None) -> dict[str, float]:
    """Nameplate reactive values (q_rated keys) from a profile INI file."""
    parser = configparser.ConfigParser()
    if path is None:
        parser.read_string(
            resources.files("metersim").joinpath("fixtures/appliances.ini").read_text()
        )
    else:
        parser.read(str(path))
    out = {}
    for section in parser.sections():
        if parser.has_option(section, "q_rated"):
            out[section] = parser.getfloat(section, "q_rated")
    return out


def build_report(
    profiles_path: str | Path | None = None,
    sampling_freq: float = DEFAULT_SAMPLE_RATE_HZ,
    window_cycles: int = DEFAULT_WINDOW_CYCLES,
    seed: int | None = 0,
) -> list[ApplianceReportRow]:
    profiles = load_profiles(profiles_path)
    rated_q = load_rated_reactive(profiles_path)
    rows = []
    for name, profile in profiles.items():
        reading = measure_profile(profile, sampling_freq, window_cycles, seed)
        rows.append(
            ApplianceReportRow(
                name=name,
                rated_p=profile.p_active,
                rated_s=profile.s_apparent,
                derived_q=derived_reactive(profile.p_active, profile.s_apparent),
                rated_q=rated_q.get(name),
                measured=reading.triplet,
            )
        )
    return rows


def format_report(rows: list[ApplianceReportRow]) -> str:
    lines = []
    header = (
        f"{'appliance':<16} {'P meas':>8} {'P rated':>8} {'err%':>6} "
        f"{'S meas':>8} {'S rated':>8} {'err%':>6} "
        f"{'Q meas':>8} {'Q derived':>9} {'err%':>6}"
    )
    lines.append(header)
    lines.append("-" * len(header))
    for row in rows:
        q_err = f"{row.q_error_pct:6.2f}" if row.q_error_pct is not None else "   n/a"
        lines.append(
            f"{row.name:<16} {row.measured.active_p:8.1f} {row.rated_p:8.1f} "
            f"{row.p_error_pct:6.2f} {row.measured.apparent_s:8.1f} {row.rated_s:8.1f} "
            f"{row.s_error_pct:6.2f} {row.measured.reactive_q:8.1f} {row.derived_q:9.1f} {q_err}"
        )
    for row in rows:
        if row.q_inconsistent:
            lines.append(
                f"NOTE: {row.name}: nameplate reactive value {row.rated_q:.1f} var is "
                f"inconsistent with sqrt(S^2 - P^2) = {row.derived_q:.1f} var; "
                f"measurements track the derived value."
            )
    return "\n".join(lines)
