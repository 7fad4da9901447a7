"""HTTP/1.1 front for the governance service.

The protocol follows request-response-disconnect: every accepted connection
receives exactly one response body (a signed canonical envelope or a
protocol-level error document) and the connection closes. The legal outcome
lives in the signed body; the HTTP status only reports transport health.

Run with ``python -m ssgov.server --config server.json``.
"""

from __future__ import annotations

import argparse
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .canonical import canonical_bytes
from .service import (
    COMMAND_PATH,
    DECIDE_PATH,
    GAZETTE_PATH,
    HEALTH_PATH,
    GovService,
    ProtocolError,
    ServiceConfig,
)


def _make_handler(service: GovService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "ssgov/0.1"

        def log_message(self, fmt, *args):  # quiet by default; errors still surface
            pass

        def _reply(self, status: int, document) -> None:
            body = canonical_bytes(document) + b"\n"
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Connection", "close")
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            try:
                if self.path == GAZETTE_PATH:
                    self._reply(200, service.gazette_document())
                elif self.path == HEALTH_PATH:
                    self._reply(200, service.health_document())
                else:
                    self._reply(404, {"code": "PROTOCOL_ERROR",
                                      "error": f"unknown path {self.path}"})
            except Exception as exc:  # one response per connection, no silent drops
                self._reply(500, {"code": "PROTOCOL_ERROR", "error": str(exc)})

        def do_POST(self):
            try:
                length = int(self.headers.get("Content-Length", "0"))
                body = self.rfile.read(length)
                if self.path == COMMAND_PATH:
                    status, document = service.handle_command(body, self.path)
                elif self.path == DECIDE_PATH:
                    status, document = service.handle_decide(body, self.path)
                else:
                    status, document = 404, {"code": "PROTOCOL_ERROR",
                                             "error": f"unknown path {self.path}"}
                self._reply(status, document)
            except ProtocolError as exc:
                self._reply(exc.status, {"code": exc.code, "error": exc.detail})
            except Exception as exc:
                self._reply(500, {"code": "PROTOCOL_ERROR", "error": str(exc)})

        def do_PUT(self):
            self._reply(405, {"code": "PROTOCOL_ERROR", "error": "method not allowed"})

        do_DELETE = do_PUT

    return Handler


class GovHttpServer:
    """Threaded HTTP server wrapper used by tests, demos and the CLI entry."""

    def __init__(self, service: GovService, host: str | None = None,
                 port: int | None = None):
        self.service = service
        host = host if host is not None else service.config.listen_host
        port = port if port is not None else service.config.listen_port
        self._httpd = ThreadingHTTPServer((host, port), _make_handler(service))
        self._httpd.request_queue_size = 256
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._httpd.server_address[:2]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> "GovHttpServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def shutdown(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ssgov.server",
                                     description="Run the governance endpoint")
    parser.add_argument("--config", required=True, help="path to service config JSON")
    args = parser.parse_args(argv)
    service = GovService(ServiceConfig.load(args.config))
    server = GovHttpServer(service)
    print(f"ssgov listening on {server.url}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
