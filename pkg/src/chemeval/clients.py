"""
Clients for OpenAI-compatible chat-completions endpoints.

One protocol serves both the model under test (text + images) and the
text-only judge. Each endpoint gets its own concurrency limiter.
"""

from __future__ import annotations

import base64
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence, Union

import httpx

__all__ = [
    "AuthError",
    "BadRequest",
    "ChatClient",
    "ChatRequest",
    "ChatResponse",
    "ClientError",
    "EndpointConfigError",
    "ImagePart",
    "JudgeClient",
    "JudgeUnavailable",
    "Message",
    "ModelEndpoint",
    "TextPart",
    "Unavailable",
    "get_client",
    "query_judge",
    "query_model",
]

log = logging.getLogger(__name__)


class ClientError(RuntimeError):
    pass


class EndpointConfigError(ClientError):
    pass


class Unavailable(ClientError):
    """Transport failure, timeout, 429 or 5xx that outlasted every retry."""

    def __init__(self, message: str, attempts: int = 0):
        super().__init__(message)
        self.attempts = attempts


class JudgeUnavailable(Unavailable):
    pass


class AuthError(ClientError):
    def __init__(self, status: int, message: str = ""):
        super().__init__(f"HTTP {status}: {message}".rstrip(": "))
        self.status = status


class BadRequest(ClientError):
    def __init__(self, status: int, message: str = ""):
        super().__init__(f"HTTP {status}: {message}".rstrip(": "))
        self.status = status


@dataclass(frozen=True)
class ModelEndpoint:
    base_url: str
    model_name: str
    api_key_env: str | None = None
    timeout: float = 60.0
    max_retries: int = 3
    max_concurrency: int = 4
    temperature: float = 0.0
    max_tokens: int = 1024
    # seconds before the first retry; doubles every attempt
    backoff_base: float = 1.0
    backoff_factor: float = 2.0

    def __post_init__(self) -> None:
        if not self.base_url:
            raise EndpointConfigError("base_url is required")
        if not self.model_name:
            raise EndpointConfigError("model_name is required")
        if self.timeout <= 0:
            raise EndpointConfigError(f"timeout must be > 0, got {self.timeout}")
        if self.max_retries < 0:
            raise EndpointConfigError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.max_concurrency < 1:
            raise EndpointConfigError(
                f"max_concurrency must be >= 1, got {self.max_concurrency}"
            )
        if self.backoff_base < 0 or self.backoff_factor < 1:
            raise EndpointConfigError("backoff_base must be >= 0 and backoff_factor >= 1")

    @property
    def url(self) -> str:
        return self.base_url.rstrip("/") + "/chat/completions"

    def api_key(self) -> str | None:
        """Read the key from the environment at call time."""
        if not self.api_key_env:
            return None
        key = os.environ.get(self.api_key_env)
        if not key:
            raise EndpointConfigError(
                f"environment variable {self.api_key_env} is not set"
            )
        return key

    def public_dict(self) -> dict[str, Any]:
        """Settings safe to write into reports (never the key itself)."""
        return {
            "base_url": self.base_url,
            "model_name": self.model_name,
            "api_key_env": self.api_key_env,
            "timeout": self.timeout,
            "max_retries": self.max_retries,
            "max_concurrency": self.max_concurrency,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass(frozen=True)
class TextPart:
    text: str

    def to_json(self) -> dict[str, Any]:
        return {"type": "text", "text": self.text}


@dataclass(frozen=True)
class ImagePart:
    data: str  # base64, no data-URL prefix
    media_type: str = "image/png"

    @classmethod
    def from_bytes(cls, raw: bytes, media_type: str = "image/png") -> "ImagePart":
        return cls(base64.b64encode(raw).decode("ascii"), media_type)

    @property
    def data_url(self) -> str:
        return f"data:{self.media_type};base64,{self.data}"

    def to_json(self) -> dict[str, Any]:
        return {"type": "image_url", "image_url": {"url": self.data_url}}


Part = Union[TextPart, ImagePart]


@dataclass(frozen=True)
class Message:
    role: str
    parts: tuple[Part, ...]

    @classmethod
    def user(cls, *parts: Part | str) -> "Message":
        return cls("user", tuple(TextPart(p) if isinstance(p, str) else p for p in parts))

    @classmethod
    def system(cls, text: str) -> "Message":
        return cls("system", (TextPart(text),))

    def to_json(self) -> dict[str, Any]:
        if all(isinstance(p, TextPart) for p in self.parts) and self.role != "user":
            return {"role": self.role, "content": "".join(p.text for p in self.parts)}
        return {"role": self.role, "content": [p.to_json() for p in self.parts]}


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("request has no messages")
        roles = [m.role for m in self.messages]
        if roles.count("system") > 1:
            raise ValueError("at most one system message is allowed")
        for m in self.messages:
            if m.role not in ("system", "user", "assistant"):
                raise ValueError(f"unknown role {m.role!r}")
            if m.role != "user" and any(isinstance(p, ImagePart) for p in m.parts):
                raise ValueError("image parts are only allowed in user messages")

    @classmethod
    def text(cls, prompt: str) -> "ChatRequest":
        return cls((Message.user(prompt),))

    def payload(self, ep: ModelEndpoint) -> dict[str, Any]:
        return {
            "model": ep.model_name,
            "messages": [m.to_json() for m in self.messages],
            "temperature": ep.temperature,
            "max_tokens": ep.max_tokens,
        }


@dataclass
class ChatResponse:
    text: str
    latency: float
    retries: int = 0
    usage: dict[str, Any] = field(default_factory=dict)


def _content_text(content: Any) -> str:
    if content is None:
        return ""
    if isinstance(content, str):
        return content
    if isinstance(content, list):
        return "".join(p.get("text", "") for p in content if isinstance(p, dict))
    return str(content)


class ChatClient:
    """Blocking client for one endpoint; safe to share across threads."""

    def __init__(
        self,
        endpoint: ModelEndpoint,
        *,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        seed: int | None = None,
    ):
        self.endpoint = endpoint
        self._limiter = threading.BoundedSemaphore(endpoint.max_concurrency)
        self._http = httpx.Client(timeout=endpoint.timeout, transport=transport)
        self._sleep = sleep
        self._rng = random.Random(seed)
        self._rng_lock = threading.Lock()

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "ChatClient":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def backoff_delay(self, attempt: int) -> float:
        """Delay before retry number ``attempt + 1``, without jitter."""
        ep = self.endpoint
        return ep.backoff_base * ep.backoff_factor**attempt

    def _jitter(self, delay: float) -> float:
        with self._rng_lock:
            return delay * (1.0 + 0.25 * self._rng.random())

    def chat(self, request: ChatRequest) -> ChatResponse:
        ep = self.endpoint
        headers = {"Content-Type": "application/json"}
        key = ep.api_key()
        if key is not None:
            headers["Authorization"] = f"Bearer {key}"
        payload = request.payload(ep)

        started = time.perf_counter()
        attempt = 0
        while True:
            failure: str
            try:
                with self._limiter:
                    resp = self._http.post(ep.url, json=payload, headers=headers)
            except httpx.TransportError as exc:
                failure = f"{type(exc).__name__}: {exc}"
            else:
                status = resp.status_code
                if status == 200:
                    try:
                        data = resp.json()
                        text = _content_text(data["choices"][0]["message"].get("content"))
                    except (ValueError, KeyError, IndexError, TypeError, AttributeError):
                        failure = "malformed response body"
                    else:
                        return ChatResponse(
                            text=text,
                            latency=time.perf_counter() - started,
                            retries=attempt,
                            usage=data.get("usage") or {},
                        )
                elif status in (401, 403):
                    raise AuthError(status, resp.text[:200])
                elif status == 429 or status >= 500:
                    failure = f"HTTP {status}"
                else:
                    raise BadRequest(status, resp.text[:200])

            if attempt >= ep.max_retries:
                raise Unavailable(
                    f"{ep.url} unavailable after {attempt + 1} attempts: {failure}",
                    attempts=attempt + 1,
                )
            delay = self._jitter(self.backoff_delay(attempt))
            log.warning("retrying %s in %.2fs (%s)", ep.url, delay, failure)
            self._sleep(delay)
            attempt += 1

    def complete(self, prompt: str) -> str:
        return self.chat(ChatRequest.text(prompt)).text


class JudgeClient:
    """Text-only judge wrapper; transport failures surface as JudgeUnavailable."""

    def __init__(self, client: ChatClient):
        self.client = client

    @classmethod
    def for_endpoint(cls, endpoint: ModelEndpoint) -> "JudgeClient":
        return cls(get_client(endpoint))

    def complete(self, prompt: str) -> str:
        try:
            return self.client.complete(prompt)
        except JudgeUnavailable:
            raise
        except Unavailable as exc:
            raise JudgeUnavailable(str(exc), exc.attempts) from exc


_clients: dict[ModelEndpoint, ChatClient] = {}
_clients_lock = threading.Lock()


def get_client(endpoint: ModelEndpoint) -> ChatClient:
    """Shared client per endpoint, so the concurrency bound is per endpoint."""
    with _clients_lock:
        client = _clients.get(endpoint)
        if client is None:
            client = _clients[endpoint] = ChatClient(endpoint)
        return client


def query_model(endpoint: ModelEndpoint, request: ChatRequest) -> ChatResponse:
    return get_client(endpoint).chat(request)


def query_judge(endpoint: ModelEndpoint, prompt: str) -> str:
    return get_client(endpoint).complete(prompt)


def user_request(text: str, images: Sequence[ImagePart] = (), system: str | None = None) -> ChatRequest:
    messages = []
    if system:
        messages.append(Message.system(system))
    messages.append(Message.user(text, *images))
    return ChatRequest(tuple(messages))
