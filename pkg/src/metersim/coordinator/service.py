"""Coordinator core: datagram routing, command tickets, UDP front end.

``CoordinatorCore`` is transport-agnostic: hand it raw datagrams through
:meth:`handle_datagram` and give it a ``send(addr, bytes)`` callable for its
replies.  ``UdpServer`` wires the core to a real socket with a bounded
ingest queue (one receive loop, worker decode), which is also the shape the
simulated end-to-end harness drives directly.
"""

from __future__ import annotations

import logging
import queue
import socket
import threading
from collections import Counter
from dataclasses import dataclass, field

from .. import protocol
from ..clock import Clock, SystemClock
from ..powercalc import validate_sampling_frequency, SamplingFrequencyError
from .store import ReadingStore, StoredReading

log = logging.getLogger(__name__)

DEFAULT_LIVENESS_WINDOW_S = 60.0
DEFAULT_RETRY_INTERVAL_S = 0.5
DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_QUEUE_SIZE = 8192


class UnknownMeterError(KeyError):
    """No meter with that storage id has ever contacted the coordinator."""


class StaleMeterError(RuntimeError):
    """The meter has not been heard from within the liveness window."""


class CommandValidationError(ValueError):
    """The command is malformed or out of range and was never dispatched."""


@dataclass
class Ticket:
    """Lifecycle of one dispatched command: pending until acked or failed."""

    command_id: int
    storage_id: str
    op: str
    arg: float | None
    state: str = "pending"  # pending | acked | failed
    attempts: int = 1
    created_ms: int = 0
    last_attempt_ms: int = 0
    resolved_ms: int | None = None
    datagram: bytes = b""
    dest: tuple | None = None

    def to_api(self) -> dict:
        return {
            "command_id": self.command_id,
            "meter": self.storage_id,
            "op": self.op,
            "arg": self.arg,
            "state": self.state,
            "attempts": self.attempts,
            "created_ms": self.created_ms,
            "resolved_ms": self.resolved_ms,
        }


class CoordinatorCore:
    """Decodes and routes datagrams, tracks meters, owns command tickets."""

    def __init__(
        self,
        store: ReadingStore,
        clock: Clock | None = None,
        send=None,
        liveness_window_s: float = DEFAULT_LIVENESS_WINDOW_S,
        retry_interval_s: float = DEFAULT_RETRY_INTERVAL_S,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        fs_ceiling: float | None = None,
    ):
        self.store = store
        self.clock = clock or SystemClock()
        self.send = send or (lambda addr, data: None)
        self.liveness_window_s = liveness_window_s
        self.retry_interval_s = retry_interval_s
        self.max_attempts = max_attempts
        self.fs_ceiling = fs_ceiling
        self.drops = Counter()
        self.accepted = 0
        self.duplicates = 0
        self.acks_received = 0
        self.sync_requests = 0
        self.unexpected_kind = 0
        self.queue_overflow = 0
        self.tickets: dict[int, Ticket] = {}
        self._next_command_id = 1
        self._lock = threading.RLock()

    # -- ingest ------------------------------------------------------------

    def handle_datagram(self, data: bytes, source) -> str:
        """Process one raw datagram; never raises on bad input.

        Returns a short outcome label (handy for tests and logs); decode
        failures are counted per error class and dropped.
        """
        try:
            datagram = protocol.decode(data)
        except protocol.ProtocolError as exc:
            self.drops[exc.label] += 1
            log.debug("dropped datagram from %s: %s", source, exc)
            return f"dropped:{exc.label}"

        now_ms = self.clock.now_ms()
        if datagram.kind == protocol.KIND_MEASUREMENT:
            return self._ingest_measurement(datagram, source, now_ms)
        if datagram.kind == protocol.KIND_ACK:
            return self._ingest_ack(datagram)
        if datagram.kind == protocol.KIND_SYNC_REQUEST:
            return self._answer_sync(datagram, source, now_ms)
        self.unexpected_kind += 1
        return "dropped:unexpected_kind"

    def _ingest_measurement(self, datagram, source, now_ms: int) -> str:
        m: protocol.Measurement = datagram.payload
        record = self.store.record_for(datagram.meter_id, now_ms, addr=source)
        reading = StoredReading(
            seq=m.seq,
            timestamp_ms=m.timestamp_ms,
            v_rms_mv=m.v_rms_mv,
            i_rms_ma=m.i_rms_ma,
            phi_urad=m.phi_urad,
            p_mw=m.p_mw,
            q_mvar=m.q_mvar,
            s_mva=m.s_mva,
            energy_mj=m.energy_mj,
            flags=m.flags,
        )
        outcome = self.store.append(record, reading)
        if outcome == "stored":
            self.accepted += 1
        else:
            self.duplicates += 1
        return outcome

    def _ingest_ack(self, datagram) -> str:
        ack: protocol.Ack = datagram.payload
        with self._lock:
            ticket = self.tickets.get(ack.command_id)
            if ticket is None or ticket.state != "pending":
                return "ack:ignored"
            ticket.state = "acked"
            ticket.resolved_ms = self.clock.now_ms()
            self.acks_received += 1
        return "ack:applied"

    def _answer_sync(self, datagram, source, now_ms: int) -> str:
        req: protocol.SyncRequest = datagram.payload
        # A handshake counts as first contact: the meter gets its storage id
        # (and a return address for commands) before any reading arrives.
        self.store.record_for(datagram.meter_id, now_ms, addr=source)
        self.sync_requests += 1
        reply = protocol.Datagram(
            kind=protocol.KIND_SYNC_REPLY,
            meter_id=datagram.meter_id,
            payload=protocol.SyncReply(
                client_time_ms=req.client_time_ms, server_time_ms=now_ms
            ),
        )
        self.send(source, protocol.encode(reply))
        return "sync:replied"

    # -- command dispatch --------------------------------------------------

    def dispatch_command(self, storage_id: str, op: str, arg: float | None = None) -> Ticket:
        """Validate, encode and send a command; returns its pending ticket.

        Raises ``UnknownMeterError`` for meters never seen,
        ``StaleMeterError`` when outside the liveness window, and
        ``CommandValidationError`` for bad ops or out-of-range arguments
        (a SET_FS below the 100 Hz floor never leaves the coordinator).
        """
        opcode = {v: k for k, v in protocol.OPCODE_NAMES.items()}.get(op)
        if opcode is None:
            raise CommandValidationError(f"unknown command op {op!r}")
        if opcode == protocol.OP_SET_FS:
            if arg is None:
                raise CommandValidationError("set_fs needs a frequency argument")
            try:
                ceiling_kwargs = {} if self.fs_ceiling is None else {"ceiling": self.fs_ceiling}
                validate_sampling_frequency(float(arg), **ceiling_kwargs)
            except (TypeError, ValueError, SamplingFrequencyError) as exc:
                raise CommandValidationError(str(exc)) from exc
            argument = protocol.set_fs_argument(float(arg))
        else:
            if arg not in (None, 0):
                raise CommandValidationError(f"op {op!r} takes no argument")
            arg = None
            argument = 0

        record = self.store.get(storage_id)
        if record is None:
            raise UnknownMeterError(storage_id)
        now_ms = self.clock.now_ms()
        if now_ms - record.last_seen_ms > self.liveness_window_s * 1000.0:
            raise StaleMeterError(
                f"meter {storage_id} last seen {(now_ms - record.last_seen_ms) / 1000.0:.1f} s "
                f"ago (liveness window {self.liveness_window_s:.0f} s)"
            )
        if record.last_addr is None:
            raise StaleMeterError(f"meter {storage_id} has no known return address")

        with self._lock:
            command_id = self._next_command_id
            self._next_command_id += 1
        data = protocol.encode(
            protocol.Datagram(
                kind=protocol.KIND_COMMAND,
                meter_id=record.wire_id,
                payload=protocol.Command(opcode=opcode, argument=argument, command_id=command_id),
            )
        )
        ticket = Ticket(
            command_id=command_id,
            storage_id=storage_id,
            op=op,
            arg=arg,
            created_ms=now_ms,
            last_attempt_ms=now_ms,
            datagram=data,
            dest=record.last_addr,
        )
        with self._lock:
            self.tickets[command_id] = ticket
        self.send(record.last_addr, data)
        log.info("dispatched %s to %s (command %d)", op, storage_id, command_id)
        return ticket

    def pump(self) -> None:
        """Retry timers: resend overdue pending commands, fail exhausted ones."""
        now_ms = self.clock.now_ms()
        with self._lock:
            pending = [t for t in self.tickets.values() if t.state == "pending"]
        for ticket in pending:
            if now_ms - ticket.last_attempt_ms < self.retry_interval_s * 1000.0:
                continue
            if ticket.attempts >= self.max_attempts:
                ticket.state = "failed"
                ticket.resolved_ms = now_ms
                log.warning(
                    "command %d to %s failed after %d attempts",
                    ticket.command_id, ticket.storage_id, ticket.attempts,
                )
                continue
            ticket.attempts += 1
            ticket.last_attempt_ms = now_ms
            self.send(ticket.dest, ticket.datagram)

    # -- reporting ---------------------------------------------------------

    def meter_summaries(self) -> list[dict]:
        now_ms = self.clock.now_ms()
        out = []
        for record in sorted(self.store.meters(), key=lambda r: r.storage_id):
            last = record.readings[-1] if record.readings else None
            out.append(
                {
                    "storage_id": record.storage_id,
                    "wire_id": record.wire_id.hex(),
                    "last_seen_ms": record.last_seen_ms,
                    "live": now_ms - record.last_seen_ms <= self.liveness_window_s * 1000.0,
                    "stored": len(record.readings),
                    "gap_events": record.gap_events,
                    "last_reading": reading_to_api(last) if last else None,
                }
            )
        return out

    def health(self) -> dict:
        return {
            "accepted": self.accepted,
            "stored": self.store.stored_total,
            "duplicates": self.duplicates,
            "gap_events": self.store.gap_events_total(),
            "dropped": dict(self.drops),
            "queue_overflow": self.queue_overflow,
            "acks": self.acks_received,
            "sync_requests": self.sync_requests,
            "unexpected_kind": self.unexpected_kind,
            "meters": len(self.store.meters()),
            "corrupt_log_lines": self.store.corrupt_log_lines,
        }


def reading_to_api(r: StoredReading) -> dict:
    """Engineering-unit view of a stored reading for the HTTP API."""
    return {
        "seq": r.seq,
        "timestamp_ms": r.timestamp_ms,
        "v_rms": r.v_rms_mv / 1000.0,
        "i_rms": r.i_rms_ma / 1000.0,
        "phi": r.phi_urad / 1e6,
        "p": r.p_mw / 1000.0,
        "q": r.q_mvar / 1000.0,
        "s": r.s_mva / 1000.0,
        "energy_j": r.energy_mj / 1000.0,
        "relay_closed": bool(r.flags & protocol.FLAG_RELAY_CLOSED),
        "sleeping": bool(r.flags & protocol.FLAG_SLEEPING),
    }


class UdpServer:
    """Real-socket front end: one receive loop feeding a bounded work queue."""

    def __init__(
        self,
        core: CoordinatorCore,
        host: str = "0.0.0.0",
        port: int = protocol.DEFAULT_UDP_PORT,
        queue_size: int = DEFAULT_QUEUE_SIZE,
    ):
        self.core = core
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 20)
        self.sock.bind((host, port))
        self.port = self.sock.getsockname()[1]
        self._queue: queue.Queue = queue.Queue(maxsize=queue_size)
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()
        core.send = self.send

    def send(self, addr, data: bytes) -> None:
        try:
            self.sock.sendto(data, addr)
        except OSError as exc:
            log.warning("send to %s failed: %s", addr, exc)

    def start(self) -> None:
        self._stop.clear()
        recv = threading.Thread(target=self._recv_loop, name="udp-recv", daemon=True)
        work = threading.Thread(target=self._work_loop, name="udp-work", daemon=True)
        pump = threading.Thread(target=self._pump_loop, name="cmd-pump", daemon=True)
        self._threads = [recv, work, pump]
        for t in self._threads:
            t.start()

    def _recv_loop(self) -> None:
        self.sock.settimeout(0.2)
        while not self._stop.is_set():
            try:
                data, addr = self.sock.recvfrom(2048)
            except socket.timeout:
                continue
            except OSError:
                break
            try:
                self._queue.put_nowait((data, addr))
            except queue.Full:
                self.core.queue_overflow += 1

    def _work_loop(self) -> None:
        while not self._stop.is_set() or not self._queue.empty():
            try:
                data, addr = self._queue.get(timeout=0.2)
            except queue.Empty:
                continue
            try:
                self.core.handle_datagram(data, addr)
            except Exception:
                log.exception("unexpected ingest failure")

    def _pump_loop(self) -> None:
        while not self._stop.is_set():
            self.core.pump()
            self._stop.wait(0.05)

    def stop(self) -> None:
        self._stop.set()
        for t in self._threads:
            t.join(timeout=2.0)
        self.sock.close()
