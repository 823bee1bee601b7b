"""Meter node: store-and-forward telemetry loop around one MeterState.

Each iteration follows the same order: measure (tick), forward buffered
readings, then run the command window over whatever arrived since the last
pass and acknowledge what was applied.  Readings stay in the bounded buffer
until a time-sync handshake with the coordinator has succeeded, so a late
coordinator receives the backlog instead of a sequence gap; once the buffer
wraps, the evicted readings are gone and show up as gaps on the other side.
"""

from __future__ import annotations

import logging

from . import monitor, protocol
from .clock import Clock

log = logging.getLogger(__name__)

DEFAULT_DRAIN_CHUNK = 64
SYNC_RETRY_S = 1.0


def measurement_from_reading(
    reading: monitor.PowerReading, sleeping: bool = False
) -> protocol.Measurement:
    """Convert a reading to wire units (mV/mA/mW/mJ, microradians)."""
    flags = (protocol.FLAG_RELAY_CLOSED if reading.relay_closed else 0) | (
        protocol.FLAG_SLEEPING if sleeping else 0
    )
    return protocol.Measurement(
        seq=reading.seq,
        timestamp_ms=reading.timestamp_ms,
        v_rms_mv=round(reading.v_rms * 1000),
        i_rms_ma=round(reading.i_rms * 1000),
        phi_urad=round(reading.phi * 1e6),
        p_mw=round(reading.triplet.active_p * 1000),
        q_mvar=round(reading.triplet.reactive_q * 1000),
        s_mva=round(reading.triplet.apparent_s * 1000),
        energy_mj=round(reading.energy_j * 1000),
        flags=flags,
    )


class MeterNode:
    """Drives one meter against a coordinator over a datagram transport.

    ``transport`` needs ``send(dest_addr, data)`` and ``receive_all()``; both
    a real UDP socket wrapper and the simulated network qualify.
    """

    def __init__(
        self,
        state: monitor.MeterState,
        transport,
        coordinator_addr,
        clock: Clock,
        drain_chunk: int = DEFAULT_DRAIN_CHUNK,
    ):
        self.state = state
        self.transport = transport
        self.coordinator_addr = coordinator_addr
        self.clock = clock
        self.drain_chunk = drain_chunk
        self.synced = False
        self._last_sync_attempt: float | None = None
        self.transmitted = 0
        self.acks_sent = 0
        self.drops = 0

    # -- handshake ---------------------------------------------------------

    def _request_sync(self, now: float) -> None:
        self._last_sync_attempt = now
        request = protocol.Datagram(
            kind=protocol.KIND_SYNC_REQUEST,
            meter_id=self.state.meter_id,
            payload=protocol.SyncRequest(client_time_ms=round(now * 1000.0)),
        )
        self.transport.send(self.coordinator_addr, protocol.encode(request))

    def _complete_sync(self, reply: protocol.SyncReply, now: float) -> None:
        try:
            offset_ms = protocol.time_sync_offset_ms(
                reply.client_time_ms, now * 1000.0, reply.server_time_ms
            )
        except ValueError as exc:
            log.warning("discarding sync reply: %s", exc)
            return
        self.state.clock_offset = offset_ms / 1000.0
        if not self.synced:
            log.info(
                "time sync complete: offset %.1f ms, flushing %d buffered readings",
                offset_ms, len(self.state.buffer),
            )
        self.synced = True

    # -- one loop iteration ------------------------------------------------

    def step(self, now: float | None = None) -> None:
        """Run one iteration: tick, forward, command window, acknowledgements."""
        if now is None:
            now = self.clock.now()

        if not self.synced and (
            self._last_sync_attempt is None or now - self._last_sync_attempt >= SYNC_RETRY_S
        ):
            self._request_sync(now)

        monitor.tick(self.state, now)

        if self.synced:
            for reading in monitor.drain_buffer(self.state, self.drain_chunk):
                datagram = protocol.Datagram(
                    kind=protocol.KIND_MEASUREMENT,
                    meter_id=self.state.meter_id,
                    payload=measurement_from_reading(reading, self.state.sleeping),
                )
                self.transport.send(self.coordinator_addr, protocol.encode(datagram))
                self.transmitted += 1

        inbox = []
        for data, source in self.transport.receive_all():
            try:
                datagram = protocol.decode(data)
            except protocol.ProtocolError as exc:
                self.drops += 1
                log.debug("meter dropped datagram from %s: %s", source, exc)
                continue
            if datagram.meter_id != self.state.meter_id:
                self.drops += 1
                continue
            if datagram.kind == protocol.KIND_COMMAND:
                inbox.append(datagram.payload)
            elif datagram.kind == protocol.KIND_SYNC_REPLY:
                self._complete_sync(datagram.payload, now)
            else:
                self.drops += 1

        monitor.command_window(self.state, inbox)

        while self.state.command_outcomes:
            outcome = self.state.command_outcomes.popleft()
            if not outcome.accepted:
                log.warning(
                    "command %d refused: %s", outcome.command_id, outcome.detail
                )
                continue  # refused commands are not acknowledged
            ack = protocol.Datagram(
                kind=protocol.KIND_ACK,
                meter_id=self.state.meter_id,
                payload=protocol.Ack(command_id=outcome.command_id),
            )
            self.transport.send(self.coordinator_addr, protocol.encode(ack))
            self.acks_sent += 1

    def flush(self) -> int:
        """Forward everything still buffered (shutdown path); returns the count."""
        if not self.synced:
            return 0
        sent = 0
        for reading in monitor.drain_buffer(self.state):
            datagram = protocol.Datagram(
                kind=protocol.KIND_MEASUREMENT,
                meter_id=self.state.meter_id,
                payload=measurement_from_reading(reading, self.state.sleeping),
            )
            self.transport.send(self.coordinator_addr, protocol.encode(datagram))
            sent += 1
        self.transmitted += sent
        return sent


class UdpTransport:
    """Non-blocking UDP socket with the endpoint interface the node expects."""

    def __init__(self, bind_host: str = "0.0.0.0", bind_port: int = 0):
        import socket

        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind((bind_host, bind_port))
        self.sock.setblocking(False)
        self.addr = self.sock.getsockname()

    def send(self, dest_addr, data: bytes) -> None:
        try:
            self.sock.sendto(data, dest_addr)
        except OSError as exc:
            log.debug("udp send failed: %s", exc)

    def receive_all(self) -> list[tuple[bytes, tuple]]:
        out = []
        while True:
            try:
                data, addr = self.sock.recvfrom(2048)
            except (BlockingIOError, InterruptedError):
                break
            except OSError:
                break
            out.append((data, addr))
        return out

    def close(self) -> None:
        self.sock.close()
