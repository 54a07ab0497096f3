"""HTTP front end for the cloud core.

Request and response bodies are the line-delimited text records from
`wire`.  Served endpoints:

  POST  /ingest                      packet batch -> acked keys
  POST  /nodes                       register a node
  PATCH /nodes/{id}                  edit a node
  GET   /nodes                       list node lines
  GET   /nodes/{id}                  node detail (channels, notes, edits)
  POST  /groups/{name}/rate          body: period_s <n>
  GET   /groups/{name}/commands      per-node command status
  GET   /nodes/{id}/health           health line
  GET   /health/silent               health lines for silent nodes
  GET   /series?node&channel&from&to point lines
  GET   /export/semantic?node&seq    triple lines
  GET   /status                      deployment summary counts
  POST  /control/inject              live mode only: schedule a node fault

With a ui directory configured, /ui/... serves the console's static
assets and / redirects there.
"""

from __future__ import annotations

import mimetypes
import os
import queue
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from . import wire
from .cloudcore import (
    CloudCore,
    GroupError,
    QueryError,
    RegistryError,
    UnknownChannelError,
    UnknownNodeError,
)
from .scenario import FAULT_KINDS, FaultEntry


@dataclass
class InjectRequest:
    at: float
    node: str
    fault: str
    params: dict


class LiveControl:
    """Queue of operator interventions consumed by the live sim thread."""

    def __init__(self) -> None:
        self.queue: queue.Queue = queue.Queue()

    def empty(self) -> bool:
        return self.queue.empty()

    def get_nowait(self):
        return self.queue.get_nowait()

    def inject(self, at: float, node: str, fault: str, params: dict) -> FaultEntry:
        entry = FaultEntry(at=at, fault=fault, node=node, params=params)
        self.queue.put(entry)
        return entry


class CloudApiServer:
    def __init__(
        self,
        core: CloudCore,
        host: str = "127.0.0.1",
        port: int = 8080,
        control: LiveControl | None = None,
        ui_dir: str | None = None,
    ):
        self.core = core
        self.control = control
        self.ui_dir = ui_dir
        handler = _make_handler(core, control, ui_dir)
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self.httpd.serve_forever()

    def shutdown(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


def _make_handler(core: CloudCore, control: LiveControl | None, ui_dir: str | None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args) -> None:  # quiet server
            pass

        # -- plumbing ------------------------------------------------------

        def _body(self) -> str:
            length = int(self.headers.get("Content-Length", 0))
            return self.rfile.read(length).decode("utf-8") if length else ""

        def _send(self, status: int, text: str, content_type: str = "text/plain; charset=utf-8") -> None:
            data = text.encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(data)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, PATCH, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.end_headers()
            self.wfile.write(data)

        def _error(self, status: int, message: str) -> None:
            self._send(status, wire.encode_error(message))

        def _dispatch(self, method: str) -> None:
            try:
                self._route(method)
            except (RegistryError, GroupError, QueryError, wire.WireError, ValueError) as exc:
                self._error(400, str(exc))
            except (UnknownNodeError, UnknownChannelError) as exc:
                self._error(404, str(exc.args[0] if exc.args else exc))
            except Exception as exc:  # noqa: BLE001 — surface, don't crash the server
                self._error(500, f"internal: {exc}")

        def do_GET(self) -> None:
            self._dispatch("GET")

        def do_POST(self) -> None:
            self._dispatch("POST")

        def do_PATCH(self) -> None:
            self._dispatch("PATCH")

        def do_OPTIONS(self) -> None:
            self._send(204, "")

        # -- routing ---------------------------------------------------------

        def _route(self, method: str) -> None:
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            q = {k: v[0] for k, v in parse_qs(url.query).items()}

            if method == "GET" and url.path in ("", "/") and ui_dir:
                self.send_response(302)
                self.send_header("Location", "/ui/")
                self.send_header("Content-Length", "0")
                self.end_headers()
                return
            if method == "GET" and parts and parts[0] == "ui":
                self._serve_static(parts[1:])
                return

            if method == "POST" and parts == ["ingest"]:
                packets = wire.decode_packets(self._body())
                acked = core.ingest_batch(packets)
                self._send(200, wire.encode_acked(acked))
            elif method == "POST" and parts == ["nodes"]:
                d = wire.decode_node(self._body())
                core.register_node(d)
                self._send(200, "ok\n")
            elif method == "PATCH" and len(parts) == 2 and parts[0] == "nodes":
                patch = wire.decode_patch(self._body())
                core.update_node(parts[1], patch)
                self._send(200, "ok\n")
            elif method == "GET" and parts == ["nodes"]:
                lines = [wire.encode_node_line(d) for d in core.list_nodes()]
                self._send(200, "\n".join(lines) + ("\n" if lines else ""))
            elif method == "GET" and len(parts) == 2 and parts[0] == "nodes":
                d = core.get_node(parts[1])
                self._send(200, wire.encode_node_detail(d, len(core.edit_history[d.node_id])))
            elif method == "GET" and len(parts) == 3 and parts[0] == "nodes" and parts[2] == "health":
                h = core.node_health(parts[1])
                self._send(200, wire.encode_health(h) + "\n")
            elif method == "POST" and len(parts) == 3 and parts[0] == "groups" and parts[2] == "rate":
                period = _parse_rate_body(self._body())
                cmd = core.set_group_rate(parts[1], period)
                lines = [f"staged {len(cmd.fanout)}"] + [f"node {n}" for n in cmd.fanout]
                self._send(200, "\n".join(lines) + "\n")
            elif method == "GET" and len(parts) == 3 and parts[0] == "groups" and parts[2] == "commands":
                rows = core.group_command_status(parts[1])
                lines = [wire.encode_command_status(n, st) for n, st in rows]
                self._send(200, "\n".join(lines) + ("\n" if lines else ""))
            elif method == "GET" and parts == ["health", "silent"]:
                lines = [wire.encode_health(h) for h in core.silent_nodes()]
                self._send(200, "\n".join(lines) + ("\n" if lines else ""))
            elif method == "GET" and parts == ["series"]:
                series = core.query_series(
                    q.get("node", ""), q.get("channel", ""),
                    float(q.get("from", 0)), float(q.get("to", 0)),
                )
                self._send(200, wire.encode_points(series))
            elif method == "GET" and parts == ["export", "semantic"]:
                lines = core.export_semantic(q.get("node", ""), int(q.get("seq", 0)))
                self._send(200, "\n".join(lines) + ("\n" if lines else ""))
            elif method == "GET" and parts == ["status"]:
                self._send(200, self._status_line())
            elif method == "POST" and parts == ["control", "inject"]:
                self._inject()
            else:
                self._error(404, f"no route {method} {url.path}")

        def _status_line(self) -> str:
            nodes = core.list_nodes()
            soil = sum(1 for d in nodes if d.kind == "soil")
            livestock = sum(1 for d in nodes if d.kind == "livestock")
            silent = len(core.silent_nodes())
            return (
                f"status nodes {len(nodes)} soil {soil} livestock {livestock} "
                f"observations {len(core.observations)} quarantine {len(core.quarantine)} "
                f"silent {silent} now {int(core.clock())}\n"
            )

        def _inject(self) -> None:
            if control is None:
                self._error(400, "no live simulation attached")
                return
            parts = self._body().split()
            if len(parts) < 4 or parts[0] != "inject":
                raise wire.WireError("expected: inject <at> <node> <fault> [k v ...]")
            at, node, fault = float(parts[1]), parts[2], parts[3]
            if fault not in FAULT_KINDS or fault in ("outage", "restart"):
                raise wire.WireError(f"fault {fault!r} not injectable live")
            extra = parts[4:]
            if len(extra) % 2:
                raise wire.WireError("fault params must be key value pairs")
            params = {}
            for k, v in zip(extra[::2], extra[1::2]):
                params[k] = wire.parse_value(v)
            control.inject(at, node, fault, params)
            self._send(200, "ok\n")

        def _serve_static(self, rel_parts: list[str]) -> None:
            if not ui_dir:
                self._error(404, "console not built")
                return
            rel = "/".join(rel_parts) or "index.html"
            base = os.path.abspath(ui_dir)
            path = os.path.abspath(os.path.normpath(os.path.join(base, rel)))
            if path != base and not path.startswith(base + os.sep):
                self._error(404, "not found")
                return
            if os.path.isdir(path):
                path = os.path.join(path, "index.html")
            if not os.path.isfile(path):
                self._error(404, f"not found: /{rel}")
                return
            ctype = mimetypes.guess_type(path)[0] or "application/octet-stream"
            with open(path, "rb") as fh:
                data = fh.read()
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(data)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(data)

    return Handler


def _parse_rate_body(body: str) -> float:
    for line in body.splitlines():
        parts = line.split(" ")
        if parts[0] == "period_s" and len(parts) == 2:
            return float(parts[1])
    raise wire.WireError("body must contain: period_s <seconds>")
