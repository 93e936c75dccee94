"""
In-process chat-completions server for offline runs and tests.

A responder receives the decoded JSON request body and returns either the
reply text or a ``(status, body)`` tuple for error responses.
"""

from __future__ import annotations

import base64
import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable, Iterable, Union

Reply = Union[str, tuple[int, Any]]
Responder = Callable[[dict], Reply]


def last_user_text(body: dict) -> str:
    for msg in reversed(body.get("messages", [])):
        if msg.get("role") != "user":
            continue
        content = msg.get("content")
        if isinstance(content, str):
            return content
        return "".join(p.get("text", "") for p in content if p.get("type") == "text")
    return ""


def image_payloads(body: dict) -> list[bytes]:
    """Decoded bytes of every image part in the request."""
    out = []
    for msg in body.get("messages", []):
        content = msg.get("content")
        if not isinstance(content, list):
            continue
        for part in content:
            if part.get("type") == "image_url":
                url = part["image_url"]["url"]
                out.append(base64.b64decode(url.split(",", 1)[1]))
    return out


def echo_text(body: dict) -> str:
    return last_user_text(body)


def echo_image(body: dict) -> str:
    """Reply with the first image's bytes read as UTF-8.

    Test fixtures store the expected answer as the "image" content, which
    makes this a perfect model.
    """
    images = image_payloads(body)
    return images[0].decode("utf-8") if images else ""


def constant(text: str) -> Responder:
    return lambda body: text


def scripted(replies: Iterable[Reply], then: Responder | None = None) -> Responder:
    """Serve ``replies`` in order, then fall back to ``then`` (default: echo)."""
    queue = list(replies)
    lock = threading.Lock()
    fallback = then or echo_text

    def respond(body: dict) -> Reply:
        with lock:
            if queue:
                return queue.pop(0)
        return fallback(body)

    return respond


def completion_body(text: str, model: str = "stub") -> dict:
    return {
        "id": "stub-completion",
        "object": "chat.completion",
        "model": model,
        "choices": [
            {"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}
        ],
        "usage": {"prompt_tokens": 0, "completion_tokens": 0, "total_tokens": 0},
    }


class _QuietServer(ThreadingHTTPServer):
    def handle_error(self, request: Any, client_address: Any) -> None:
        pass  # clients that time out and hang up are expected in tests


class StubServer:
    """Threaded HTTP server speaking the chat-completions wire format.

    ``max_in_flight`` records the highest number of requests handled at once.
    """

    def __init__(self, responder: Responder = echo_text, delay: float = 0.0, port: int = 0):
        self.responder = responder
        self.delay = delay
        self.port = port
        self.requests: list[dict] = []
        self.headers: list[dict[str, str]] = []
        self.raw_bodies: list[bytes] = []
        self.in_flight = 0
        self.max_in_flight = 0
        self._lock = threading.Lock()
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        assert self._server is not None, "server not started"
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1"

    def _handle(self, raw: bytes, headers: dict[str, str]) -> tuple[int, bytes]:
        with self._lock:
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
            self.raw_bodies.append(raw)
            self.headers.append(headers)
        try:
            body = json.loads(raw or b"{}")
            with self._lock:
                self.requests.append(body)
            if self.delay:
                time.sleep(self.delay)
            reply = self.responder(body)
            if isinstance(reply, tuple):
                status, payload = reply
                if not isinstance(payload, (bytes, str)):
                    payload = json.dumps(payload)
                return status, payload.encode() if isinstance(payload, str) else payload
            return 200, json.dumps(completion_body(reply, body.get("model", "stub"))).encode()
        finally:
            with self._lock:
                self.in_flight -= 1

    def start(self) -> "StubServer":
        stub = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def do_POST(self) -> None:  # noqa: N802
                length = int(self.headers.get("Content-Length") or 0)
                raw = self.rfile.read(length)
                status, payload = stub._handle(raw, dict(self.headers))
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args: Any) -> None:
                pass

        self._server = _QuietServer(("127.0.0.1", self.port), Handler)
        self._server.daemon_threads = True
        self._thread = threading.Thread(
            target=self._server.serve_forever, kwargs={"poll_interval": 0.02}, daemon=True
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self) -> "StubServer":
        return self.start()

    def __exit__(self, *exc: object) -> None:
        self.stop()
