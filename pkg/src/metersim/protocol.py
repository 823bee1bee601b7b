"""Binary UDP datagram format spoken between meter nodes and the coordinator.

Every datagram is big-endian and at most 512 bytes:

    magic 0x59 0x4D | version 0x01 | kind | meter_id (8 bytes) | payload | crc32

The CRC-32 (IEEE, as in zlib) covers every byte before it.  Kinds:

    0x01 measurement   seq u32, timestamp_ms u64, v_rms u32 (mV),
                       i_rms u32 (mA), phi i32 (urad), p i32 (mW),
                       q i32 (mvar), s u32 (mVA), energy u64 (mJ), flags u8
    0x02 command       opcode u8, argument u32, command_id u32
    0x03 ack           command_id u32
    0x04 sync request  client_time_ms u64
    0x05 sync reply    client_time_ms u64 (echo), server_time_ms u64

Command opcodes: 1 SWITCH_ON, 2 SWITCH_OFF, 3 SLEEP, 4 WAKE, 5 SET_FS.
SET_FS carries the sampling frequency in tenths of a hertz; the other
opcodes carry argument 0.  The codec refuses to encode or decode a SET_FS
below the 100 Hz sampling floor, so an out-of-range retune can never cross
the wire.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

from .powercalc import NYQUIST_FLOOR_HZ

MAGIC = b"\x59\x4d"
VERSION = 0x01
MAX_DATAGRAM_BYTES = 512
DEFAULT_UDP_PORT = 7753

KIND_MEASUREMENT = 0x01
KIND_COMMAND = 0x02
KIND_ACK = 0x03
KIND_SYNC_REQUEST = 0x04
KIND_SYNC_REPLY = 0x05

OP_SWITCH_ON = 1
OP_SWITCH_OFF = 2
OP_SLEEP = 3
OP_WAKE = 4
OP_SET_FS = 5

OPCODE_NAMES = {
    OP_SWITCH_ON: "switch_on",
    OP_SWITCH_OFF: "switch_off",
    OP_SLEEP: "sleep",
    OP_WAKE: "wake",
    OP_SET_FS: "set_fs",
}

FLAG_RELAY_CLOSED = 0x01
FLAG_SLEEPING = 0x02

# SET_FS wire argument is in tenths of a hertz.
SET_FS_FLOOR_DECIHZ = round(NYQUIST_FLOOR_HZ * 10)

_HEADER = struct.Struct(">2sBB8s")
_CRC = struct.Struct(">I")
_MEASUREMENT = struct.Struct(">IQIIiiiIQB")
_COMMAND = struct.Struct(">BII")
_ACK = struct.Struct(">I")
_SYNC_REQUEST = struct.Struct(">Q")
_SYNC_REPLY = struct.Struct(">QQ")

_PAYLOAD_SIZES = {
    KIND_MEASUREMENT: _MEASUREMENT.size,
    KIND_COMMAND: _COMMAND.size,
    KIND_ACK: _ACK.size,
    KIND_SYNC_REQUEST: _SYNC_REQUEST.size,
    KIND_SYNC_REPLY: _SYNC_REPLY.size,
}

# Shortest well-formed datagram: header (12) + ack payload (4) + crc (4).
MIN_DATAGRAM_BYTES = _HEADER.size + _ACK.size + _CRC.size


class ProtocolError(ValueError):
    """Base of every datagram encode/decode failure; ``label`` names the class."""

    label = "protocol"


class FieldOverflowError(ProtocolError):
    label = "field_overflow"

    def __init__(self, field: str, value):
        super().__init__(f"field {field} out of range: {value!r}")
        self.field = field


class CommandRangeError(ProtocolError):
    label = "command_range"


class DecodeError(ProtocolError):
    label = "decode"


class TruncatedError(DecodeError):
    label = "truncated"


class CrcMismatchError(DecodeError):
    label = "crc_mismatch"


class BadMagicError(DecodeError):
    label = "bad_magic"


class UnsupportedVersionError(DecodeError):
    label = "unsupported_version"


class UnknownKindError(DecodeError):
    label = "unknown_kind"


class UnknownOpcodeError(DecodeError):
    label = "unknown_opcode"


@dataclass(frozen=True)
class Measurement:
    """One meter reading in wire units (milli-units, microradians)."""

    seq: int
    timestamp_ms: int
    v_rms_mv: int
    i_rms_ma: int
    phi_urad: int
    p_mw: int
    q_mvar: int
    s_mva: int
    energy_mj: int
    flags: int


@dataclass(frozen=True)
class Command:
    """Control instruction; ``argument`` is tenths of Hz for SET_FS, else 0."""

    opcode: int
    argument: int
    command_id: int


@dataclass(frozen=True)
class Ack:
    command_id: int


@dataclass(frozen=True)
class SyncRequest:
    client_time_ms: int


@dataclass(frozen=True)
class SyncReply:
    client_time_ms: int
    server_time_ms: int


@dataclass(frozen=True)
class Datagram:
    kind: int
    meter_id: bytes
    payload: Measurement | Command | Ack | SyncRequest | SyncReply


def set_fs_argument(frequency_hz: float) -> int:
    """Wire argument for a SET_FS command (tenths of a hertz)."""
    return round(frequency_hz * 10)


def _check_unsigned(field: str, value, bits: int) -> int:
    if not isinstance(value, int) or value < 0 or value >= 1 << bits:
        raise FieldOverflowError(field, value)
    return value


def _check_signed(field: str, value, bits: int) -> int:
    half = 1 << (bits - 1)
    if not isinstance(value, int) or value < -half or value >= half:
        raise FieldOverflowError(field, value)
    return value


def _pack_payload(kind: int, payload) -> bytes:
    if kind == KIND_MEASUREMENT:
        m: Measurement = payload
        return _MEASUREMENT.pack(
            _check_unsigned("seq", m.seq, 32),
            _check_unsigned("timestamp_ms", m.timestamp_ms, 64),
            _check_unsigned("v_rms_mv", m.v_rms_mv, 32),
            _check_unsigned("i_rms_ma", m.i_rms_ma, 32),
            _check_signed("phi_urad", m.phi_urad, 32),
            _check_signed("p_mw", m.p_mw, 32),
            _check_signed("q_mvar", m.q_mvar, 32),
            _check_unsigned("s_mva", m.s_mva, 32),
            _check_unsigned("energy_mj", m.energy_mj, 64),
            _check_unsigned("flags", m.flags, 8),
        )
    if kind == KIND_COMMAND:
        c: Command = payload
        if c.opcode not in OPCODE_NAMES:
            raise UnknownOpcodeError(f"unknown command opcode {c.opcode}")
        _check_unsigned("argument", c.argument, 32)
        if c.opcode == OP_SET_FS and c.argument < SET_FS_FLOOR_DECIHZ:
            raise CommandRangeError(
                f"SET_FS argument {c.argument} is below the "
                f"{NYQUIST_FLOOR_HZ:.0f} Hz sampling floor"
            )
        return _COMMAND.pack(
            c.opcode, c.argument, _check_unsigned("command_id", c.command_id, 32)
        )
    if kind == KIND_ACK:
        return _ACK.pack(_check_unsigned("command_id", payload.command_id, 32))
    if kind == KIND_SYNC_REQUEST:
        return _SYNC_REQUEST.pack(_check_unsigned("client_time_ms", payload.client_time_ms, 64))
    if kind == KIND_SYNC_REPLY:
        return _SYNC_REPLY.pack(
            _check_unsigned("client_time_ms", payload.client_time_ms, 64),
            _check_unsigned("server_time_ms", payload.server_time_ms, 64),
        )
    raise UnknownKindError(f"unknown datagram kind {kind}")


def encode(datagram: Datagram) -> bytes:
    """Serialize a datagram, appending the CRC-32 of all preceding bytes."""
    if not isinstance(datagram.meter_id, (bytes, bytearray)) or len(datagram.meter_id) != 8:
        raise FieldOverflowError("meter_id", datagram.meter_id)
    body = _HEADER.pack(MAGIC, VERSION, datagram.kind, bytes(datagram.meter_id))
    body += _pack_payload(datagram.kind, datagram.payload)
    out = body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)
    if len(out) > MAX_DATAGRAM_BYTES:
        raise FieldOverflowError("datagram", f"{len(out)} bytes")
    return out


def _unpack_payload(kind: int, raw: bytes):
    if kind == KIND_MEASUREMENT:
        return Measurement(*_MEASUREMENT.unpack(raw))
    if kind == KIND_COMMAND:
        opcode, argument, command_id = _COMMAND.unpack(raw)
        if opcode not in OPCODE_NAMES:
            raise UnknownOpcodeError(f"unknown command opcode {opcode}")
        if opcode == OP_SET_FS and argument < SET_FS_FLOOR_DECIHZ:
            raise CommandRangeError(
                f"SET_FS argument {argument} is below the "
                f"{NYQUIST_FLOOR_HZ:.0f} Hz sampling floor"
            )
        return Command(opcode, argument, command_id)
    if kind == KIND_ACK:
        return Ack(*_ACK.unpack(raw))
    if kind == KIND_SYNC_REQUEST:
        return SyncRequest(*_SYNC_REQUEST.unpack(raw))
    return SyncReply(*_SYNC_REPLY.unpack(raw))


def decode(data: bytes) -> Datagram:
    """Parse one datagram; failures raise a classified ``ProtocolError``.

    The checksum is verified before anything else, so any corruption of a
    well-formed datagram surfaces as a CRC mismatch rather than a confusing
    downstream parse error.
    """
    if len(data) < MIN_DATAGRAM_BYTES:
        raise TruncatedError(f"datagram of {len(data)} bytes is shorter than {MIN_DATAGRAM_BYTES}")
    if len(data) > MAX_DATAGRAM_BYTES:
        raise TruncatedError(f"datagram of {len(data)} bytes exceeds {MAX_DATAGRAM_BYTES}")
    (stated_crc,) = _CRC.unpack(data[-4:])
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != stated_crc:
        raise CrcMismatchError("crc32 check failed")
    magic, version, kind, meter_id = _HEADER.unpack(data[: _HEADER.size])
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    if kind not in _PAYLOAD_SIZES:
        raise UnknownKindError(f"unknown datagram kind {kind}")
    expected = _HEADER.size + _PAYLOAD_SIZES[kind] + _CRC.size
    if len(data) != expected:
        raise TruncatedError(
            f"kind {kind} datagram must be {expected} bytes, got {len(data)}"
        )
    payload = _unpack_payload(kind, data[_HEADER.size : -4])
    return Datagram(kind=kind, meter_id=meter_id, payload=payload)


def time_sync_offset_ms(
    request_sent_ms: float, reply_received_ms: float, coordinator_time_ms: float
) -> float:
    """Clock offset (coordinator minus local) from one request/reply exchange.

    Models the reply's coordinator timestamp as taken halfway through the
    round trip:

        offset = coordinator_time + (reply_received - request_sent) / 2
                 - reply_received

    Adding the offset to a local timestamp yields coordinator time.
    """
    rtt = reply_received_ms - request_sent_ms
    if rtt < 0:
        raise ValueError(f"negative round trip ({rtt} ms): reply precedes request")
    return coordinator_time_ms + rtt / 2.0 - reply_received_ms
