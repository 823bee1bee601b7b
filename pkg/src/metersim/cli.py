"""Command-line entry point: node, coordinator, replay and report subcommands."""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import signal
import sys
import threading
import time
from pathlib import Path

from . import monitor, protocol
from .clock import SystemClock
from .coordinator import CoordinatorCore, ReadingStore, UdpServer, make_api_server
from .coordinator.api import DEFAULT_HTTP_PORT
from .coordinator.store import StoredReading
from .node import MeterNode, UdpTransport
from .report import build_report, format_report
from .waveform import load_profiles

log = logging.getLogger("metersim")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

ENV_PREFIX = "METERSIM_"


class ConfigError(Exception):
    """Bad configuration: wrong flags, unreadable files, invalid values."""


class _Parser(argparse.ArgumentParser):
    # Treat bad command lines as configuration errors (exit code 1).
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_CONFIG)


def _setting(flag_value, env_name: str, config_value, default, convert=str):
    """Resolve one option: flags beat environment beats config file beats default."""
    if flag_value is not None:
        return flag_value
    env = os.environ.get(ENV_PREFIX + env_name)
    if env is not None:
        try:
            return convert(env)
        except ValueError as exc:
            raise ConfigError(f"bad {ENV_PREFIX}{env_name}={env!r}: {exc}") from exc
    if config_value is not None:
        return config_value
    return default


def _read_ini(path: str | None, section: str) -> configparser.SectionProxy | None:
    if path is None:
        return None
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"config file not found: {path}")
    if section not in parser:
        raise ConfigError(f"config file {path} has no [{section}] section")
    return parser[section]


def _wire_meter_id(text: str) -> bytes:
    raw = text.encode()
    if not raw or len(raw) > 8:
        raise ConfigError(f"meter id {text!r} must be 1..8 bytes")
    return raw.ljust(8, b"\0")


def _parse_addr(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        raise ConfigError(f"address {text!r} must look like host:port")
    try:
        return host, int(port)
    except ValueError as exc:
        raise ConfigError(f"bad port in address {text!r}") from exc


# -- node ------------------------------------------------------------------


def run_node(args) -> int:
    section = _read_ini(args.config, "meter")
    if section is None:
        raise ConfigError("the node subcommand needs --config pointing at a [meter] INI file")

    def opt(name, default=None):
        return section.get(name, default)

    meter_id = _wire_meter_id(opt("id", "meter01"))
    profiles_file = opt("profiles_file")
    profiles = load_profiles(profiles_file)
    profile_name = opt("profile")
    if profile_name is None or profile_name not in profiles:
        raise ConfigError(
            f"profile {profile_name!r} not found; available: {sorted(profiles)}"
        )
    coordinator = _parse_addr(opt("coordinator", f"127.0.0.1:{protocol.DEFAULT_UDP_PORT}"))
    seed = args.seed if args.seed is not None else section.getint("seed", 0)
    try:
        state = monitor.new_meter_state(
            meter_id=meter_id,
            profile=profiles[profile_name],
            sampling_freq=section.getfloat("sampling_freq", monitor.DEFAULT_SAMPLING_FREQ_HZ),
            seed=seed,
            buffer_capacity=section.getint("buffer_capacity", monitor.DEFAULT_BUFFER_CAPACITY),
            window_cycles=section.getint("window_cycles", monitor.DEFAULT_WINDOW_CYCLES),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    transport = UdpTransport()
    clock = SystemClock()
    node = MeterNode(state, transport, coordinator, clock)
    stop = threading.Event()

    def handle_signal(signum, frame):
        stop.set()

    signal.signal(signal.SIGINT, handle_signal)
    signal.signal(signal.SIGTERM, handle_signal)

    poll = min(0.05, state.measurement_period / 4.0)
    log.info(
        "meter %s (%s) reporting to %s:%d every %.3f s",
        opt("id", "meter01"), profile_name, coordinator[0], coordinator[1],
        state.measurement_period,
    )
    try:
        while not stop.is_set():
            node.step()
            stop.wait(poll)
    finally:
        flushed = node.flush()
        transport.close()
        log.info("stopped; flushed %d buffered readings", flushed)
    return EXIT_OK


# -- coordinator -----------------------------------------------------------


def run_coordinator(args) -> int:
    section = _read_ini(args.config, "coordinator")

    def conf(name, getter="get"):
        if section is None:
            return None
        if name not in section:
            return None
        return getattr(section, getter)(name)

    data_dir = _setting(args.data_dir, "DATA_DIR", conf("data_dir"), "./data")
    udp_port = _setting(
        args.udp_port, "UDP_PORT", conf("udp_port", "getint"), protocol.DEFAULT_UDP_PORT, int
    )
    http_port = _setting(
        args.http_port, "HTTP_PORT", conf("http_port", "getint"), DEFAULT_HTTP_PORT, int
    )
    http_host = _setting(args.http_host, "HTTP_HOST", conf("http_host"), "127.0.0.1")
    liveness = _setting(
        args.liveness_window, "LIVENESS_WINDOW_S",
        conf("liveness_window_s", "getfloat"), 60.0, float,
    )
    static_dir = _setting(args.static_dir, "STATIC_DIR", conf("static_dir"), None)
    if static_dir is not None and not Path(static_dir).is_dir():
        raise ConfigError(f"static dir {static_dir!r} is not a directory")

    store = ReadingStore(data_dir)
    core = CoordinatorCore(store, clock=SystemClock(), liveness_window_s=liveness)
    try:
        udp = UdpServer(core, port=udp_port)
    except OSError as exc:
        raise ConfigError(f"cannot bind UDP port {udp_port}: {exc}") from exc
    try:
        api = make_api_server(core, host=http_host, port=http_port, static_dir=static_dir)
    except OSError as exc:
        udp.sock.close()
        raise ConfigError(f"cannot bind HTTP port {http_port}: {exc}") from exc

    stop = threading.Event()

    def handle_signal(signum, frame):
        stop.set()

    signal.signal(signal.SIGINT, handle_signal)
    signal.signal(signal.SIGTERM, handle_signal)

    udp.start()
    api_thread = threading.Thread(target=api.serve_forever, name="http", daemon=True)
    api_thread.start()
    log.info(
        "coordinator up: udp %d, http %s:%d, data in %s",
        udp.port, http_host, http_port, data_dir,
    )
    try:
        while not stop.is_set():
            stop.wait(0.2)
    finally:
        api.shutdown()
        udp.stop()
        store.close()
        log.info("coordinator stopped; %d readings stored", store.stored_total)
    return EXIT_OK


# -- replay ----------------------------------------------------------------


def run_replay(args) -> int:
    path = Path(args.log)
    if not path.is_file():
        raise ConfigError(f"log file not found: {path}")
    if args.speed < 0:
        raise ConfigError("--speed must be >= 0 (0 replays as fast as possible)")
    dest = _parse_addr(args.to)
    wire_id = _wire_meter_id(args.wire_id)

    transport = UdpTransport()
    sent = 0
    skipped = 0
    previous_ts: int | None = None
    try:
        for line in path.read_text().splitlines():
            if not line.strip():
                continue
            try:
                reading = StoredReading.from_json_line(line)
                datagram = protocol.encode(
                    protocol.Datagram(
                        kind=protocol.KIND_MEASUREMENT,
                        meter_id=wire_id,
                        payload=protocol.Measurement(
                            seq=reading.seq,
                            timestamp_ms=reading.timestamp_ms,
                            v_rms_mv=reading.v_rms_mv,
                            i_rms_ma=reading.i_rms_ma,
                            phi_urad=reading.phi_urad,
                            p_mw=reading.p_mw,
                            q_mvar=reading.q_mvar,
                            s_mva=reading.s_mva,
                            energy_mj=reading.energy_mj,
                            flags=reading.flags,
                        ),
                    )
                )
            except (ValueError, KeyError, protocol.ProtocolError) as exc:
                skipped += 1
                log.warning("skipping malformed log line: %s", exc)
                continue
            if args.speed > 0 and previous_ts is not None:
                gap_s = max(0, reading.timestamp_ms - previous_ts) / 1000.0
                time.sleep(gap_s / args.speed)
            previous_ts = reading.timestamp_ms
            transport.send(dest, datagram)
            sent += 1
    finally:
        transport.close()
    print(json.dumps({"sent": sent, "skipped": skipped}))
    return EXIT_OK


# -- report ----------------------------------------------------------------


def run_report(args) -> int:
    rows = build_report(
        profiles_path=args.fixtures,
        sampling_freq=args.sample_rate,
        seed=args.seed if args.seed is not None else 0,
    )
    print(format_report(rows))
    return EXIT_OK


# -- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="metersim", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--seed", type=int, help="RNG seed (reproducible runs)")
        p.add_argument(
            "--log-level", default="info",
            choices=["debug", "info", "warning", "error"],
        )

    p_node = sub.add_parser("node", help="run one simulated meter")
    common(p_node)
    p_node.set_defaults(func=run_node)

    p_coord = sub.add_parser("coordinator", help="run the telemetry coordinator")
    common(p_coord)
    p_coord.add_argument("--data-dir", help="persistence directory (default ./data)")
    p_coord.add_argument("--udp-port", type=int, help=f"telemetry port (default {protocol.DEFAULT_UDP_PORT})")
    p_coord.add_argument("--http-port", type=int, help=f"API port (default {DEFAULT_HTTP_PORT})")
    p_coord.add_argument("--http-host", help="API bind host (default 127.0.0.1)")
    p_coord.add_argument("--liveness-window", type=float, help="seconds before a silent meter counts as stale")
    p_coord.add_argument("--static-dir", help="serve this directory at / (dashboard bundle)")
    p_coord.set_defaults(func=run_coordinator)

    p_replay = sub.add_parser("replay", help="re-send a persisted readings log over UDP")
    common(p_replay)
    p_replay.add_argument("log", help="path to a readings.log file")
    p_replay.add_argument("--to", default=f"127.0.0.1:{protocol.DEFAULT_UDP_PORT}", help="destination host:port")
    p_replay.add_argument("--wire-id", default="replay01", help="meter id to stamp on replayed datagrams")
    p_replay.add_argument("--speed", type=float, default=0.0, help="time scale; 0 = as fast as possible")
    p_replay.set_defaults(func=run_replay)

    p_report = sub.add_parser("report", help="measure the packaged appliance fixtures")
    common(p_report)
    p_report.add_argument("--fixtures", help="alternative appliance INI file")
    p_report.add_argument("--sample-rate", type=float, default=1000.0, help="waveform sample rate in Hz")
    p_report.set_defaults(func=run_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        return EXIT_OK
    except Exception as exc:  # runtime failure
        log.exception("runtime failure: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
