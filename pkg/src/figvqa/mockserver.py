"""Scripted OpenAI-compatible endpoint for offline tests and demos.

Serves POST /v1/chat/completions from a plain responder callable, while
tracking request counts and the in-flight high-water mark so concurrency
bounds and retry counts can be asserted from outside.
"""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable

Responder = Callable[[dict, int], "str | tuple[int, str]"]


def last_user_text(payload: dict) -> str:
    """Text of the final message in a chat request (string or parts form)."""
    content = payload["messages"][-1]["content"]
    if isinstance(content, str):
        return content
    return "".join(p.get("text", "") for p in content if p.get("type") == "text")


def echo_responder(payload: dict, hit: int) -> str:
    return last_user_text(payload)


class MockVisionServer:
    """Threaded mock chat-completions server.

    responder(payload, hit_index) returns either the completion text or a
    (status, body) pair for scripted failures. Responder calls are serialized
    under a lock; the artificial delay runs outside it so real request
    concurrency stays observable via max_inflight.
    """

    def __init__(self, responder: Responder = echo_responder, delay_s: float = 0.0):
        self.responder = responder
        self.delay_s = delay_s
        self.hits = 0
        self.inflight = 0
        self.max_inflight = 0
        self._lock = threading.Lock()
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        assert self._httpd is not None, "server not started"
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def reset_counters(self) -> None:
        with self._lock:
            self.hits = 0
            self.inflight = 0
            self.max_inflight = 0

    def start(self) -> "MockVisionServer":
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 (http.server API)
                if not self.path.endswith("/v1/chat/completions"):
                    self.send_error(404)
                    return
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length) or b"{}")
                with outer._lock:
                    outer.hits += 1
                    hit = outer.hits
                    outer.inflight += 1
                    outer.max_inflight = max(outer.max_inflight, outer.inflight)
                try:
                    if outer.delay_s:
                        time.sleep(outer.delay_s)
                    with outer._lock:
                        result = outer.responder(payload, hit)
                    if isinstance(result, tuple):
                        status, body = result
                    else:
                        status = 200
                        body = json.dumps(
                            {"choices": [{"message": {"role": "assistant", "content": result}}]}
                        )
                    data = body.encode("utf-8")
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(data)))
                    self.end_headers()
                    self.wfile.write(data)
                finally:
                    with outer._lock:
                        outer.inflight -= 1

            def log_message(self, *args):
                pass

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None

    def __enter__(self) -> "MockVisionServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
