"""Durable reading storage: append-only per-meter logs plus a meter index.

Layout under the data directory:

    meters.idx                 one JSON line per meter (wire id -> storage id)
    <storage_id>/readings.log  one JSON line per accepted reading, in
                               arrival order, flushed on every append

Log lines keep the wire's integer milli-units so persistence round-trips
exactly.  On startup both files are replayed through the same dedup/gap
logic as live ingest, so counters and query results match what a process
that never restarted would report.
"""

from __future__ import annotations

import bisect
import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger(__name__)

INDEX_FILENAME = "meters.idx"
READINGS_FILENAME = "readings.log"

# Readings whose sequence number fell this far behind the newest are outside
# the dedup window; the in-memory seq set covers everything ever stored, so
# the window only bounds how far out of order a packet may usefully arrive.
DEDUP_WINDOW = 1024


@dataclass(frozen=True)
class StoredReading:
    """One accepted reading in wire units (exact integers)."""

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

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "seq": self.seq,
                "ts": self.timestamp_ms,
                "v_mv": self.v_rms_mv,
                "i_ma": self.i_rms_ma,
                "phi_urad": self.phi_urad,
                "p_mw": self.p_mw,
                "q_mvar": self.q_mvar,
                "s_mva": self.s_mva,
                "e_mj": self.energy_mj,
                "flags": self.flags,
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json_line(cls, line: str) -> "StoredReading":
        obj = json.loads(line)
        return cls(
            seq=int(obj["seq"]),
            timestamp_ms=int(obj["ts"]),
            v_rms_mv=int(obj["v_mv"]),
            i_rms_ma=int(obj["i_ma"]),
            phi_urad=int(obj["phi_urad"]),
            p_mw=int(obj["p_mw"]),
            q_mvar=int(obj["q_mvar"]),
            s_mva=int(obj["s_mva"]),
            energy_mj=int(obj["e_mj"]),
            flags=int(obj["flags"]),
        )


@dataclass
class MeterRecord:
    """Everything the coordinator tracks for one meter."""

    wire_id: bytes
    storage_id: str
    created_ms: int
    last_seen_ms: int = 0
    last_addr: tuple | None = None
    last_seq: int | None = None
    gap_events: int = 0
    readings: list = field(default_factory=list)  # StoredReading, sorted by seq
    seqs_seen: set = field(default_factory=set)


class ReadingStore:
    """Thread-safe persistent store for meter records and their readings."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._by_wire_id: dict[bytes, MeterRecord] = {}
        self._by_storage_id: dict[str, MeterRecord] = {}
        self._log_files: dict[str, object] = {}
        self.stored_total = 0
        self.duplicates_total = 0
        self.corrupt_log_lines = 0
        self._load()

    # -- loading -----------------------------------------------------------

    def _load(self) -> None:
        index_path = self.data_dir / INDEX_FILENAME
        if not index_path.exists():
            return
        for line in index_path.read_text().splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
                record = MeterRecord(
                    wire_id=bytes.fromhex(entry["wire_id"]),
                    storage_id=str(entry["storage_id"]),
                    created_ms=int(entry.get("created_ms", 0)),
                )
            except (ValueError, KeyError) as exc:
                self.corrupt_log_lines += 1
                log.warning("skipping corrupt index line: %s", exc)
                continue
            self._by_wire_id[record.wire_id] = record
            self._by_storage_id[record.storage_id] = record
            self._replay_log(record)

    def _replay_log(self, record: MeterRecord) -> None:
        path = self.data_dir / record.storage_id / READINGS_FILENAME
        if not path.exists():
            return
        for line in path.read_text().splitlines():
            if not line.strip():
                continue
            try:
                reading = StoredReading.from_json_line(line)
            except (ValueError, KeyError) as exc:
                self.corrupt_log_lines += 1
                log.warning("skipping corrupt reading line in %s: %s", path, exc)
                continue
            self._absorb(record, reading, persist=False)
            record.last_seen_ms = max(record.last_seen_ms, reading.timestamp_ms)

    # -- meters ------------------------------------------------------------

    def record_for(self, wire_id: bytes, now_ms: int, addr=None) -> MeterRecord:
        """Look up a meter by wire id, assigning a storage id on first contact."""
        with self._lock:
            record = self._by_wire_id.get(wire_id)
            if record is None:
                storage_id = f"m{len(self._by_wire_id) + 1:03d}"
                record = MeterRecord(
                    wire_id=wire_id,
                    storage_id=storage_id,
                    created_ms=now_ms,
                    last_seen_ms=now_ms,
                )
                self._by_wire_id[wire_id] = record
                self._by_storage_id[storage_id] = record
                with open(self.data_dir / INDEX_FILENAME, "a") as fh:
                    fh.write(
                        json.dumps(
                            {
                                "wire_id": wire_id.hex(),
                                "storage_id": storage_id,
                                "created_ms": now_ms,
                            },
                            separators=(",", ":"),
                        )
                        + "\n"
                    )
                    fh.flush()
            record.last_seen_ms = max(record.last_seen_ms, now_ms)
            if addr is not None:
                record.last_addr = addr
            return record

    def get(self, storage_id: str) -> MeterRecord | None:
        with self._lock:
            return self._by_storage_id.get(storage_id)

    def meters(self) -> list[MeterRecord]:
        with self._lock:
            return list(self._by_storage_id.values())

    # -- readings ----------------------------------------------------------

    def _absorb(self, record: MeterRecord, reading: StoredReading, persist: bool) -> str:
        """Shared dedup/gap/insert logic for live ingest and log replay."""
        if reading.seq in record.seqs_seen:
            self.duplicates_total += 1
            return "duplicate"
        if record.last_seq is not None and reading.seq > record.last_seq + 1:
            record.gap_events += 1
        record.seqs_seen.add(reading.seq)
        if record.last_seq is None or reading.seq > record.last_seq:
            record.last_seq = reading.seq
        bisect.insort(record.readings, reading, key=lambda r: r.seq)
        self.stored_total += 1
        if persist:
            fh = self._log_file(record.storage_id)
            fh.write(reading.to_json_line() + "\n")
            fh.flush()
        return "stored"

    def append(self, record: MeterRecord, reading: StoredReading) -> str:
        """Store one reading; returns ``"stored"`` or ``"duplicate"``.

        A sequence number ever stored for this meter is never stored twice;
        a jump past ``last_seq + 1`` counts one gap event.
        """
        with self._lock:
            return self._absorb(record, reading, persist=True)

    def _log_file(self, storage_id: str):
        fh = self._log_files.get(storage_id)
        if fh is None:
            meter_dir = self.data_dir / storage_id
            meter_dir.mkdir(parents=True, exist_ok=True)
            fh = open(meter_dir / READINGS_FILENAME, "a")
            self._log_files[storage_id] = fh
        return fh

    def query(
        self,
        storage_id: str,
        from_ms: int | None = None,
        to_ms: int | None = None,
        max_count: int = 1000,
        after_seq: int | None = None,
    ) -> tuple[list[StoredReading], int | None]:
        """Readings with timestamp in [from_ms, to_ms), ordered by seq.

        At most ``max_count`` rows are returned; when
        more remain, the second element is a continuation token (pass it
        back as ``after_seq``), otherwise None.  Unknown meters raise
        ``KeyError``.
        """
        if max_count < 1:
            raise ValueError("max_count must be at least 1")
        with self._lock:
            record = self._by_storage_id.get(storage_id)
            if record is None:
                raise KeyError(storage_id)
            out = []
            for reading in record.readings:
                if after_seq is not None and reading.seq <= after_seq:
                    continue
                if from_ms is not None and reading.timestamp_ms < from_ms:
                    continue
                if to_ms is not None and reading.timestamp_ms >= to_ms:
                    continue
                if len(out) == max_count:
                    return out, out[-1].seq
                out.append(reading)
            return out, None

    def gap_events_total(self) -> int:
        with self._lock:
            return sum(r.gap_events for r in self._by_storage_id.values())

    def close(self) -> None:
        with self._lock:
            for fh in self._log_files.values():
                fh.close()
            self._log_files.clear()
