"""Read-only JSON service over a loaded workspace.

Endpoints:
  GET  /health                         liveness probe
  GET  /search?q=...&method=...&k=...  keyword search
  POST /match?method=...&k=...         table matching; body is one table record

Responses are JSON. The workspace is immutable after startup, so concurrent
requests need no locking.
"""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Mapping
from urllib.parse import parse_qs, urlparse

from .corpus import parse_record
from .pipeline import ConfigError, Workspace


class _Handler(BaseHTTPRequestHandler):
    server_version = "tablerank"

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        pass

    # -- helpers -------------------------------------------------------------

    def _reply(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _workspace(self) -> Workspace:
        return self.server.workspace  # type: ignore[attr-defined]

    def _models(self) -> Mapping[str, object]:
        return self.server.models  # type: ignore[attr-defined]

    def _ranked_payload(self, ranked) -> list[dict]:
        return [{"id": doc_id, "score": score} for doc_id, score in ranked]

    # -- handlers ------------------------------------------------------------

    def do_GET(self) -> None:  # noqa: N802 - stdlib naming
        url = urlparse(self.path)
        if url.path == "/health":
            self._reply(200, {"status": "ok"})
            return
        if url.path != "/search":
            self._reply(404, {"error": f"unknown path {url.path}"})
            return
        params = parse_qs(url.query)
        query = params.get("q", [""])[0]
        if not query:
            self._reply(400, {"error": "missing query parameter q"})
            return
        method = params.get("method", ["mlm"])[0]
        try:
            k = int(params.get("k", ["20"])[0])
            ranked = self._workspace().search(
                query, method=method, k=k, model=self._models().get(method)
            )
        except (ConfigError, ValueError) as exc:
            self._reply(400, {"error": str(exc)})
            return
        self._reply(
            200, {"query": query, "method": method, "results": self._ranked_payload(ranked)}
        )

    def do_POST(self) -> None:  # noqa: N802 - stdlib naming
        url = urlparse(self.path)
        if url.path != "/match":
            self._reply(404, {"error": f"unknown path {url.path}"})
            return
        params = parse_qs(url.query)
        method = params.get("method", ["msje"])[0]
        try:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length)
            table = parse_record(json.loads(raw.decode("utf-8")))
            k = int(params.get("k", ["20"])[0])
            ranked = self._workspace().match(
                table, method=method, k=k, model=self._models().get(method)
            )
        except (ConfigError, ValueError, json.JSONDecodeError) as exc:
            self._reply(400, {"error": str(exc)})
            return
        self._reply(
            200, {"query": table.id, "method": method, "results": self._ranked_payload(ranked)}
        )


def make_server(
    workspace: Workspace, port: int, models: Mapping[str, object] | None = None
) -> ThreadingHTTPServer:
    """Build the HTTP server; caller decides when to serve_forever()."""
    workspace.require_index()
    httpd = ThreadingHTTPServer(("127.0.0.1", port), _Handler)
    httpd.workspace = workspace  # type: ignore[attr-defined]
    httpd.models = dict(models or {})  # type: ignore[attr-defined]
    return httpd


def serve(workspace: Workspace, port: int, models: Mapping[str, object] | None = None) -> None:
    httpd = make_server(workspace, port, models)
    try:
        httpd.serve_forever()
    finally:
        httpd.server_close()
