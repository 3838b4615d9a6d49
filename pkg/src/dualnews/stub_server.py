"""Local stand-in for a claim-spotting scoring endpoint.

Serves ``GET <prefix><url-quoted sentence>`` with
``{"results": [{"text": ..., "score": ...}]}`` and counts requests, so the
remote scorer and its cache can be exercised without network access.
"""

from __future__ import annotations

import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable
from urllib.parse import unquote


def hash_score(text: str) -> float:
    """Deterministic pseudo-score in [0, 1)."""
    return int(hashlib.sha256(text.encode("utf-8")).hexdigest()[:8], 16) / 2**32


class StubScoreServer:
    def __init__(
        self,
        score_fn: Callable[[str], float] = hash_score,
        prefix: str = "/score/",
        fail_first: int = 0,
    ):
        self.score_fn = score_fn
        self.prefix = prefix
        self.fail_first = fail_first
        self.requests: list[str] = []
        self._lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):  # noqa: N802
                if not self.path.startswith(server.prefix):
                    self.send_error(404)
                    return
                text = unquote(self.path[len(server.prefix):])
                with server._lock:
                    server.requests.append(text)
                    fail = len(server.requests) <= server.fail_first
                if fail:
                    self.send_error(503)
                    return
                body = json.dumps({"results": [{"text": text, "score": server.score_fn(text)}]})
                data = body.encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def endpoint(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}{self.prefix}"

    @property
    def request_count(self) -> int:
        return len(self.requests)

    def start(self) -> "StubScoreServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
