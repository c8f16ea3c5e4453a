"""HTTP service speaking the token-tagging wire protocol.

POST {"lang": str, "tokens": [str, ...]} -> {"labels": ["O"|"ANCHOR", ...]}
of equal length, which is exactly what the pipeline's external-backend
client expects.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .tagger import TaggerBundle

log = logging.getLogger(__name__)


def _make_handler(bundle: TaggerBundle):
    class Handler(BaseHTTPRequestHandler):
        def _reply(self, status: int, payload: dict):
            data = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            self._reply(200, {"status": "ok"})

        def do_POST(self):
            try:
                body = json.loads(self.rfile.read(int(self.headers.get("Content-Length", 0))))
                tokens = body["tokens"]
                if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
                    raise ValueError("'tokens' must be a list of strings")
            except (ValueError, KeyError) as exc:
                self._reply(400, {"error": str(exc)})
                return
            self._reply(200, {"labels": bundle.predict(tokens)})

        def log_message(self, fmt, *args):
            log.debug("tagging service: " + fmt, *args)

    return Handler


class TaggingService:
    """Threaded server wrapper usable both from the CLI and from tests."""

    def __init__(self, bundle: TaggerBundle, host: str = "127.0.0.1", port: int = 0):
        self._server = ThreadingHTTPServer((host, port), _make_handler(bundle))
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/tag"

    def start(self) -> "TaggingService":
        self._thread.start()
        log.info("tagging service listening on %s", self.url)
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()

    def serve_forever(self):
        log.info("tagging service listening on %s", self.url)
        self._server.serve_forever()
