"""Emulated metering front end: fixed-point register file and meter state.

The register file mirrors the layout of a small energy-metering IC: RMS and
power quantities live in 24-bit fixed-point registers, the energy counter in
a saturating 48-bit register, and readings are rebuilt from the quantized
register contents so the simulation round-trips through exactly the
precision a real part would offer.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .powercalc import (
    DEFAULT_FS_CEILING_HZ,
    DEFAULT_WINDOW_CYCLES,
    EnergyAccumulator,
    PowerTriplet,
    SamplingFrequencyError,
    accumulate,
    power_triplet,
    phase_shift,
    rms,
    validate_sampling_frequency,
)
from .protocol import (
    OP_SET_FS,
    OP_SLEEP,
    OP_SWITCH_OFF,
    OP_SWITCH_ON,
    OP_WAKE,
    Command,
)
from .waveform import MIN_SAMPLES_PER_CYCLE, ApplianceProfile, relay_gate, synthesize

DEFAULT_BUFFER_CAPACITY = 4096
DEFAULT_SAMPLING_FREQ_HZ = 1000.0

# mode_reg bits
MODE_SLEEPING = 0x01
MODE_RELAY_CLOSED = 0x02


class RegisterSpec(NamedTuple):
    attr: str
    bits: int
    signed: bool
    lsb: float
    unit: str


# Register map.  RMS registers use 1 LSB = 2^-12 of full scale
# (400 V / 32 A); power registers 0.125 W per LSB; energy 1 mJ per LSB.
REGISTERS: dict[str, RegisterSpec] = {
    "vrms": RegisterSpec("vrms_reg", 24, False, 400.0 / 4096.0, "V"),
    "irms": RegisterSpec("irms_reg", 24, False, 32.0 / 4096.0, "A"),
    "p": RegisterSpec("p_reg", 24, True, 0.125, "W"),
    "q": RegisterSpec("q_reg", 24, True, 0.125, "var"),
    "s": RegisterSpec("s_reg", 24, True, 0.125, "VA"),
    "energy": RegisterSpec("energy_reg", 48, False, 0.001, "J"),
    "fs": RegisterSpec("fs_reg", 16, False, 1.0, "Hz"),
    "mode": RegisterSpec("mode_reg", 8, False, 1.0, ""),
}


@dataclass
class RegisterFile:
    """Raw register contents; signed registers hold two's-complement patterns."""

    vrms_reg: int = 0
    irms_reg: int = 0
    p_reg: int = 0
    q_reg: int = 0
    s_reg: int = 0
    energy_reg: int = 0
    fs_reg: int = 0
    mode_reg: int = 0


def encode_register(name: str, value: float) -> int:
    """Quantize an engineering value to the register's raw bit pattern.

    Values are rounded to the nearest LSB and clamped (saturated) at the
    register's range limits.
    """
    spec = REGISTERS[name]
    counts = round(value / spec.lsb)
    if spec.signed:
        lo, hi = -(1 << (spec.bits - 1)), (1 << (spec.bits - 1)) - 1
        counts = max(lo, min(hi, counts))
        return counts & ((1 << spec.bits) - 1)
    counts = max(0, min((1 << spec.bits) - 1, counts))
    return counts


def decode_register(name: str, raw: int) -> float:
    """Engineering value of a raw register pattern."""
    spec = REGISTERS[name]
    if raw < 0 or raw >= 1 << spec.bits:
        raise ValueError(f"raw value {raw} does not fit register {name!r} ({spec.bits} bits)")
    if spec.signed and raw >= 1 << (spec.bits - 1):
        raw -= 1 << spec.bits
    return raw * spec.lsb


def read_register(registers: RegisterFile, name: str) -> tuple[int, float]:
    """(raw pattern, decoded engineering value) of one register by name."""
    if name not in REGISTERS:
        raise KeyError(f"unknown register {name!r}")
    raw = getattr(registers, REGISTERS[name].attr)
    return raw, decode_register(name, raw)


def write_register(registers: RegisterFile, name: str, value: float) -> int:
    """Quantize and store an engineering value; returns the raw pattern.

    The energy register is monotonic: writes below its current contents are
    ignored (use :func:`reset_energy` to clear it), and it saturates at full
    scale instead of wrapping.
    """
    if name not in REGISTERS:
        raise KeyError(f"unknown register {name!r}")
    raw = encode_register(name, value)
    if name == "energy":
        raw = max(raw, registers.energy_reg)
    setattr(registers, REGISTERS[name].attr, raw)
    return raw


def reset_energy(registers: RegisterFile) -> None:
    """Explicitly clear the energy counter (the only way it may decrease)."""
    registers.energy_reg = 0


@dataclass(frozen=True)
class PowerReading:
    """One emitted measurement, built from register-decoded values."""

    meter_id: bytes
    seq: int
    timestamp_ms: int
    v_rms: float
    i_rms: float
    phi: float
    triplet: PowerTriplet
    energy_j: float
    relay_closed: bool


@dataclass(frozen=True)
class CommandOutcome:
    """Result of one applied (or refused) command, kept for acknowledgement."""

    command_id: int
    accepted: bool
    detail: str = ""


@dataclass
class MeterState:
    """Complete state of one virtual meter; owned by a single task."""

    meter_id: bytes
    profile: ApplianceProfile
    registers: RegisterFile
    energy: EnergyAccumulator
    rng: np.random.Generator
    sampling_freq: float = DEFAULT_SAMPLING_FREQ_HZ
    fs_ceiling: float = DEFAULT_FS_CEILING_HZ
    relay_closed: bool = True
    sleeping: bool = False
    seq_next: int = 0
    clock_offset: float = 0.0
    window_cycles: int = DEFAULT_WINDOW_CYCLES
    window_start: float | None = None
    buffer: deque = field(default_factory=lambda: deque(maxlen=DEFAULT_BUFFER_CAPACITY))
    command_outcomes: deque = field(default_factory=lambda: deque(maxlen=256))

    @property
    def measurement_period(self) -> float:
        """Seconds between readings: one RMS window of ``window_cycles`` cycles."""
        return self.window_cycles / self.profile.mains_freq


def new_meter_state(
    meter_id: bytes,
    profile: ApplianceProfile,
    sampling_freq: float = DEFAULT_SAMPLING_FREQ_HZ,
    seed: int | None = None,
    buffer_capacity: int = DEFAULT_BUFFER_CAPACITY,
    window_cycles: int = DEFAULT_WINDOW_CYCLES,
    fs_ceiling: float = DEFAULT_FS_CEILING_HZ,
) -> MeterState:
    """Build a fresh meter with validated configuration."""
    if len(meter_id) != 8:
        raise ValueError(f"meter_id must be exactly 8 bytes, got {len(meter_id)}")
    if buffer_capacity < 1:
        raise ValueError("buffer_capacity must be at least 1")
    if window_cycles < 2:
        raise ValueError("window_cycles must be at least 2 for a usable RMS window")
    validate_sampling_frequency(sampling_freq, fs_ceiling)
    registers = RegisterFile()
    state = MeterState(
        meter_id=bytes(meter_id),
        profile=profile,
        registers=registers,
        energy=EnergyAccumulator(step_s=1.0 / sampling_freq),
        rng=np.random.default_rng(seed),
        sampling_freq=float(sampling_freq),
        fs_ceiling=float(fs_ceiling),
        window_cycles=window_cycles,
        buffer=deque(maxlen=buffer_capacity),
    )
    write_register(registers, "fs", state.sampling_freq)
    _write_mode(state)
    return state


def _write_mode(state: MeterState) -> None:
    mode = (MODE_SLEEPING if state.sleeping else 0) | (
        MODE_RELAY_CLOSED if state.relay_closed else 0
    )
    write_register(state.registers, "mode", mode)


def tick(state: MeterState, now: float) -> tuple[MeterState, PowerReading | None]:
    """Advance the meter to ``now``; emits at most one reading per call.

    A sleeping meter does nothing and its registers stay frozen.  Otherwise,
    once a full measurement period has elapsed since the current window
    opened, the window is synthesized, gated by the relay, measured, the
    energy integral advanced, all quantity registers rewritten, and a
    reading built from the decoded registers is appended to the send buffer
    (evicting the oldest entry when full, which later shows up as a
    sequence gap).
    """
    if state.sleeping:
        return state, None
    if state.window_start is None:
        state.window_start = now
        return state, None
    period = state.measurement_period
    if now - state.window_start < period:
        return state, None

    profile = state.profile
    # The analog front end keeps at least four samples per mains cycle even
    # when the configured readout rate sits right at the 100 Hz floor.
    afe_rate = max(state.sampling_freq, MIN_SAMPLES_PER_CYCLE * profile.mains_freq)
    frame = synthesize(profile, afe_rate, period, state.window_start, rng=state.rng)
    frame = relay_gate(frame, state.relay_closed)

    v_rms = rms(frame.u_samples)
    i_rms = rms(frame.i_samples)
    if i_rms == 0.0:
        phi = 0.0
        triplet = PowerTriplet(0.0, 0.0, 0.0)
    else:
        phi = phase_shift(frame.u_samples, frame.i_samples, afe_rate, profile.mains_freq)
        triplet = power_triplet(v_rms, i_rms, phi)

    # Left-endpoint Riemann sum at the configured readout step: the window's
    # power is taken as constant over each of its 1/f_s slices.
    steps = round(state.sampling_freq * period)
    acc = state.energy
    for _ in range(steps):
        acc = accumulate(acc, triplet.active_p)
    state.energy = acc

    regs = state.registers
    write_register(regs, "vrms", v_rms)
    write_register(regs, "irms", i_rms)
    write_register(regs, "p", triplet.active_p)
    write_register(regs, "q", triplet.reactive_q)
    write_register(regs, "s", triplet.apparent_s)
    write_register(regs, "energy", acc.energy_j)
    write_register(regs, "fs", state.sampling_freq)
    _write_mode(state)

    window_end = state.window_start + period
    reading = PowerReading(
        meter_id=state.meter_id,
        seq=state.seq_next,
        timestamp_ms=round((window_end + state.clock_offset) * 1000.0),
        v_rms=read_register(regs, "vrms")[1],
        i_rms=read_register(regs, "irms")[1],
        phi=phi,
        triplet=PowerTriplet(
            active_p=read_register(regs, "p")[1],
            reactive_q=read_register(regs, "q")[1],
            apparent_s=read_register(regs, "s")[1],
        ),
        energy_j=read_register(regs, "energy")[1],
        relay_closed=state.relay_closed,
    )
    state.seq_next += 1
    state.buffer.append(reading)
    state.window_start = window_end
    return state, reading


def apply_command(state: MeterState, command: Command) -> MeterState:
    """Apply one control command; the outcome is recorded for acknowledgement.

    A SET_FS outside the accepted band leaves the meter completely
    unchanged apart from the recorded rejection.
    """
    accepted = True
    detail = ""
    if command.opcode == OP_SWITCH_ON:
        state.relay_closed = True
    elif command.opcode == OP_SWITCH_OFF:
        state.relay_closed = False
    elif command.opcode == OP_SLEEP:
        state.sleeping = True
        state.window_start = None  # discard any partial window
    elif command.opcode == OP_WAKE:
        state.sleeping = False
        state.window_start = None  # restart window timing from the next tick
    elif command.opcode == OP_SET_FS:
        freq = command.argument / 10.0
        try:
            validate_sampling_frequency(freq, state.fs_ceiling)
        except SamplingFrequencyError as exc:
            accepted = False
            detail = str(exc)
        else:
            state.sampling_freq = freq
            state.energy = replace(state.energy, step_s=1.0 / freq)
            write_register(state.registers, "fs", freq)
    else:
        accepted = False
        detail = f"unknown opcode {command.opcode}"
    _write_mode(state)
    state.command_outcomes.append(
        CommandOutcome(command_id=command.command_id, accepted=accepted, detail=detail)
    )
    return state


def command_window(state: MeterState, inbox: list[Command]) -> MeterState:
    """Apply every queued command in arrival order (runs after emission)."""
    for command in inbox:
        state = apply_command(state, command)
    return state


def drain_buffer(state: MeterState, max_count: int | None = None) -> list[PowerReading]:
    """Remove and return up to ``max_count`` oldest buffered readings."""
    if max_count is None:
        max_count = len(state.buffer)
    if max_count < 0:
        raise ValueError("max_count must be non-negative")
    out = []
    while state.buffer and len(out) < max_count:
        out.append(state.buffer.popleft())
    return out
