"""HTTP API over the coordinator core, plus optional static file serving.

Endpoints (all JSON, CORS enabled):

    GET  /api/meters
    GET  /api/meters/{id}/readings?from=&to=&max=&after=
    POST /api/meters/{id}/command      {"op": "...", "arg": ...}
    GET  /api/tickets/{command_id}
    GET  /api/health

Unknown meters map to 404, invalid commands to 422, meters outside the
liveness window to 409.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import re
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .service import (
    CommandValidationError,
    CoordinatorCore,
    StaleMeterError,
    UnknownMeterError,
    reading_to_api,
)

log = logging.getLogger(__name__)

DEFAULT_HTTP_PORT = 8080

_READINGS_RE = re.compile(r"^/api/meters/([^/]+)/readings$")
_COMMAND_RE = re.compile(r"^/api/meters/([^/]+)/command$")
_TICKET_RE = re.compile(r"^/api/tickets/(\d+)$")


def _int_param(params: dict, name: str) -> int | None:
    values = params.get(name)
    if not values:
        return None
    try:
        return int(values[0])
    except ValueError:
        raise ValueError(f"query parameter {name!r} must be an integer")


def make_api_server(
    core: CoordinatorCore,
    host: str = "127.0.0.1",
    port: int = DEFAULT_HTTP_PORT,
    cors_origin: str = "*",
    static_dir: str | Path | None = None,
) -> ThreadingHTTPServer:
    """Build (but do not start) the HTTP server bound to ``host:port``."""
    static_root = Path(static_dir).resolve() if static_dir else None

    class Handler(BaseHTTPRequestHandler):
        server_version = "metersim"

        # -- plumbing ------------------------------------------------------

        def log_message(self, fmt, *args):
            log.debug("http %s", fmt % args)

        def _cors(self):
            self.send_header("Access-Control-Allow-Origin", cors_origin)
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")

        def _reply(self, status: int, payload: dict | list) -> None:
            body = json.dumps(payload).encode()
            self.send_response(status)
            self._cors()
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _error(self, status: int, message: str) -> None:
            self._reply(status, {"error": message})

        # -- routes --------------------------------------------------------

        def do_OPTIONS(self):
            self.send_response(204)
            self._cors()
            self.end_headers()

        def do_GET(self):
            try:
                url = urlparse(self.path)
                if url.path == "/api/meters":
                    return self._reply(200, core.meter_summaries())
                if url.path == "/api/health":
                    return self._reply(200, core.health())
                match = _READINGS_RE.match(url.path)
                if match:
                    return self._get_readings(match.group(1), parse_qs(url.query))
                match = _TICKET_RE.match(url.path)
                if match:
                    return self._get_ticket(int(match.group(1)))
                if static_root is not None:
                    return self._get_static(url.path)
                return self._error(404, f"no such resource: {url.path}")
            except Exception:
                log.exception("GET %s failed", self.path)
                return self._error(500, "internal error")

        def _get_readings(self, storage_id: str, params: dict):
            try:
                from_ms = _int_param(params, "from")
                to_ms = _int_param(params, "to")
                max_count = _int_param(params, "max")
                if max_count is None:
                    max_count = 1000
                after_seq = _int_param(params, "after")
                readings, next_token = core.store.query(
                    storage_id, from_ms, to_ms, max_count, after_seq
                )
            except KeyError:
                return self._error(404, f"unknown meter {storage_id!r}")
            except ValueError as exc:
                return self._error(422, str(exc))
            return self._reply(
                200,
                {"readings": [reading_to_api(r) for r in readings], "next": next_token},
            )

        def _get_ticket(self, command_id: int):
            ticket = core.tickets.get(command_id)
            if ticket is None:
                return self._error(404, f"unknown ticket {command_id}")
            return self._reply(200, ticket.to_api())

        def _get_static(self, path: str):
            rel = path.lstrip("/") or "index.html"
            target = (static_root / rel).resolve()
            if not str(target).startswith(str(static_root)) or not target.is_file():
                return self._error(404, f"no such resource: {path}")
            body = target.read_bytes()
            ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
            self.send_response(200)
            self._cors()
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):
            try:
                url = urlparse(self.path)
                match = _COMMAND_RE.match(url.path)
                if not match:
                    return self._error(404, f"no such resource: {url.path}")
                length = int(self.headers.get("Content-Length") or 0)
                raw = self.rfile.read(length) if length else b"{}"
                try:
                    body = json.loads(raw.decode() or "{}")
                except (ValueError, UnicodeDecodeError):
                    return self._error(422, "request body must be JSON")
                if not isinstance(body, dict) or "op" not in body:
                    return self._error(422, 'request body needs an "op" field')
                try:
                    ticket = core.dispatch_command(
                        match.group(1), str(body["op"]), body.get("arg")
                    )
                except UnknownMeterError as exc:
                    return self._error(404, f"unknown meter {exc.args[0]!r}")
                except CommandValidationError as exc:
                    return self._error(422, str(exc))
                except StaleMeterError as exc:
                    return self._error(409, str(exc))
                return self._reply(201, ticket.to_api())
            except Exception:
                log.exception("POST %s failed", self.path)
                return self._error(500, "internal error")

    server = ThreadingHTTPServer((host, port), Handler)
    server.daemon_threads = True
    return server
