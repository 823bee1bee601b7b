"""Command-line interface tests: in-process for argument handling, real
subprocesses (UDP + HTTP on ephemeral ports) for the long-running services."""

from __future__ import annotations

import json
import signal
import socket
import subprocess
import sys
import time

import pytest

pytest.importorskip("httpx")
import httpx

from conftest import free_tcp_port, free_udp_port
from metersim import protocol
from metersim.cli import EXIT_CONFIG, EXIT_OK, main
from metersim.coordinator.store import StoredReading


def run_cli(*argv) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "metersim.cli", *argv],
        capture_output=True, text=True, timeout=60,
    )


class TestArgumentHandling:
    def test_no_subcommand_is_config_error(self):
        assert main([]) == EXIT_CONFIG

    def test_unknown_subcommand_is_config_error(self):
        assert main(["frobnicate"]) == EXIT_CONFIG

    def test_node_requires_config(self, capsys):
        assert main(["node"]) == EXIT_CONFIG

    def test_node_missing_config_file(self, tmp_path):
        assert main(["node", "--config", str(tmp_path / "none.ini")]) == EXIT_CONFIG

    def test_node_config_needs_meter_section(self, tmp_path):
        cfg = tmp_path / "meter.ini"
        cfg.write_text("[other]\nx = 1\n")
        assert main(["node", "--config", str(cfg)]) == EXIT_CONFIG

    def test_node_unknown_profile(self, tmp_path):
        cfg = tmp_path / "meter.ini"
        cfg.write_text("[meter]\nid = m1\nprofile = flux_capacitor\n")
        assert main(["node", "--config", str(cfg)]) == EXIT_CONFIG

    def test_node_sub_floor_sampling_rejected(self, tmp_path):
        cfg = tmp_path / "meter.ini"
        cfg.write_text(
            "[meter]\nid = m1\nprofile = water_kettle\nsampling_freq = 99\n"
        )
        assert main(["node", "--config", str(cfg)]) == EXIT_CONFIG

    def test_node_meter_id_too_long(self, tmp_path):
        cfg = tmp_path / "meter.ini"
        cfg.write_text("[meter]\nid = much_too_long_id\nprofile = water_kettle\n")
        assert main(["node", "--config", str(cfg)]) == EXIT_CONFIG

    def test_replay_missing_log(self, tmp_path):
        assert main(["replay", str(tmp_path / "nope.log")]) == EXIT_CONFIG

    def test_replay_negative_speed(self, tmp_path):
        log = tmp_path / "readings.log"
        log.write_text("")
        assert main(["replay", str(log), "--speed", "-1"]) == EXIT_CONFIG

    def test_coordinator_bad_static_dir(self, tmp_path):
        assert main([
            "coordinator", "--data-dir", str(tmp_path / "d"),
            "--static-dir", str(tmp_path / "missing"),
        ]) == EXIT_CONFIG


class TestReportCommand:
    def test_report_prints_table(self):
        proc = run_cli("report", "--seed", "0")
        assert proc.returncode == EXIT_OK
        for name in ["refrigerator", "ventilator", "convection_oven",
                     "water_kettle", "radiant_heater"]:
            assert name in proc.stdout
        assert "NOTE" in proc.stdout

    def test_report_with_custom_fixture_file(self, tmp_path):
        ini = tmp_path / "one.ini"
        ini.write_text("[toaster]\np_active = 800\ns_apparent = 805\n")
        proc = run_cli("report", "--fixtures", str(ini))
        assert proc.returncode == EXIT_OK
        assert "toaster" in proc.stdout
        assert "refrigerator" not in proc.stdout


class TestReplayCommand:
    def test_replay_resends_log_lines(self, tmp_path):
        log = tmp_path / "readings.log"
        lines = []
        for seq in range(3):
            lines.append(StoredReading(
                seq=seq, timestamp_ms=1000 + 200 * seq, v_rms_mv=229980,
                i_rms_ma=8391, phi_urad=101578, p_mw=1930000, q_mvar=196723,
                s_mva=1940050, energy_mj=772000 * (seq + 1), flags=1,
            ).to_json_line())
        lines.insert(2, "this is not json")
        log.write_text("\n".join(lines) + "\n")

        sink = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        sink.bind(("127.0.0.1", 0))
        sink.settimeout(5.0)
        port = sink.getsockname()[1]
        try:
            proc = run_cli("replay", str(log), "--to", f"127.0.0.1:{port}",
                           "--wire-id", "replayed")
            assert proc.returncode == EXIT_OK
            stats = json.loads(proc.stdout.strip().splitlines()[-1])
            assert stats == {"sent": 3, "skipped": 1}
            received = []
            while len(received) < 3:
                data, _ = sink.recvfrom(2048)
                received.append(protocol.decode(data))
            assert [d.payload.seq for d in received] == [0, 1, 2]
            assert received[0].meter_id == b"replayed"
            assert received[0].payload.p_mw == 1930000
        finally:
            sink.close()


@pytest.mark.slow
class TestServiceProcesses:
    """Coordinator and node as real processes over loopback UDP + HTTP."""

    @staticmethod
    def wait_http(client, path, predicate, timeout=20.0, interval=0.1):
        deadline = time.monotonic() + timeout
        last = None
        while time.monotonic() < deadline:
            try:
                resp = client.get(path)
                last = resp
                if resp.status_code == 200 and predicate(resp.json()):
                    return resp.json()
            except httpx.TransportError:
                pass
            time.sleep(interval)
        raise AssertionError(f"timed out waiting on {path}; last={last and last.text}")

    @staticmethod
    def stop(proc):
        if proc.poll() is None:
            proc.send_signal(signal.SIGINT)
            try:
                return proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                proc.kill()
                raise
        return proc.returncode

    def spawn_coordinator(self, tmp_path, udp_port, http_port):
        return subprocess.Popen(
            [sys.executable, "-m", "metersim.cli", "coordinator",
             "--data-dir", str(tmp_path / "data"),
             "--udp-port", str(udp_port), "--http-port", str(http_port)],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
        )

    def spawn_node(self, tmp_path, udp_port, name="cliket01"):
        cfg = tmp_path / f"{name}.ini"
        cfg.write_text(
            f"[meter]\nid = {name}\nprofile = water_kettle\n"
            f"coordinator = 127.0.0.1:{udp_port}\n"
            "window_cycles = 2\n"  # 40 ms readings keep the test quick
        )
        return subprocess.Popen(
            [sys.executable, "-m", "metersim.cli", "node", "--config", str(cfg)],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
        )

    def test_end_to_end_over_real_sockets(self, tmp_path):
        udp_port, http_port = free_udp_port(), free_tcp_port()
        coordinator = self.spawn_coordinator(tmp_path, udp_port, http_port)
        node = None
        client = httpx.Client(base_url=f"http://127.0.0.1:{http_port}", timeout=5.0)
        try:
            self.wait_http(client, "/api/health", lambda h: True)
            node = self.spawn_node(tmp_path, udp_port)
            meters = self.wait_http(
                client, "/api/meters", lambda m: m and m[0]["stored"] >= 3
            )
            storage_id = meters[0]["storage_id"]
            assert meters[0]["live"] is True

            resp = client.post(f"/api/meters/{storage_id}/command",
                               json={"op": "switch_off"})
            assert resp.status_code == 201
            command_id = resp.json()["command_id"]
            ticket = self.wait_http(
                client, f"/api/tickets/{command_id}", lambda t: t["state"] == "acked"
            )
            assert ticket["attempts"] <= 3

            def has_zero_tail(body):
                readings = body["readings"]
                return readings and readings[-1]["p"] == 0.0

            body = self.wait_http(
                client, f"/api/meters/{storage_id}/readings?max=1000",
                has_zero_tail,
            )
            tail = body["readings"][-1]
            assert tail["relay_closed"] is False
            assert tail["v_rms"] == pytest.approx(230.0, rel=5e-3)

            # A sub-floor sampling frequency never leaves the coordinator.
            resp = client.post(f"/api/meters/{storage_id}/command",
                               json={"op": "set_fs", "arg": 99.9})
            assert resp.status_code == 422

            seqs_before = [r["seq"] for r in body["readings"]]
            assert seqs_before == sorted(seqs_before)

            assert self.stop(node) == EXIT_OK
            assert self.stop(coordinator) == EXIT_OK

            # Restart the coordinator on the same directory: nothing lost.
            http_port2 = free_tcp_port()
            coordinator = self.spawn_coordinator(tmp_path, free_udp_port(), http_port2)
            client2 = httpx.Client(base_url=f"http://127.0.0.1:{http_port2}", timeout=5.0)
            try:
                self.wait_http(client2, "/api/health", lambda h: True)
                body2 = self.wait_http(
                    client2, f"/api/meters/{storage_id}/readings?max=1000",
                    lambda b: len(b["readings"]) >= len(seqs_before),
                )
                seqs_after = [r["seq"] for r in body2["readings"]]
                assert seqs_after[: len(seqs_before)] == seqs_before
            finally:
                client2.close()
        finally:
            client.close()
            for proc in (node, coordinator):
                if proc is not None and proc.poll() is None:
                    proc.kill()
                    proc.wait()

    def test_coordinator_port_conflict_is_config_error(self, tmp_path):
        udp_port, http_port = free_udp_port(), free_tcp_port()
        first = self.spawn_coordinator(tmp_path, udp_port, http_port)
        client = httpx.Client(base_url=f"http://127.0.0.1:{http_port}", timeout=5.0)
        try:
            self.wait_http(client, "/api/health", lambda h: True)
            second = run_cli(
                "coordinator", "--data-dir", str(tmp_path / "data2"),
                "--udp-port", str(udp_port), "--http-port", str(free_tcp_port()),
            )
            assert second.returncode == EXIT_CONFIG
        finally:
            client.close()
            self.stop(first)
