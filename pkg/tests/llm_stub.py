"""Local chat-completion stub server for adapter tests."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer


def completion_payload(text: str) -> dict:
    return {"choices": [{"message": {"content": text}}]}


class ScriptedLlmServer:
    """Serves a scripted sequence of (status, payload) responses.

    When the script runs out, the last step repeats, so "always 500" is a
    one-line script. All requests are recorded for count/shape assertions.
    """

    def __init__(self):
        self.script: list[tuple[int, dict]] = []
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 - stdlib naming
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length).decode("utf-8")) if length else {}
                with stub._lock:
                    stub.requests.append(
                        {"path": self.path, "body": body, "auth": self.headers.get("Authorization")}
                    )
                    if not stub.script:
                        status, payload = 500, {"error": "script exhausted"}
                    elif len(stub.script) == 1:
                        status, payload = stub.script[0]
                    else:
                        status, payload = stub.script.pop(0)
                data = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):  # silence request logging
                pass

        self.server = HTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.server.server_port}"

    def respond_with(self, *steps: tuple[int, dict]) -> None:
        self.script = list(steps)
        self.requests = []

    def start(self) -> None:
        self._thread.start()

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()
