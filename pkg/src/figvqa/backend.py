"""HTTP client for OpenAI-compatible vision-chat endpoints.

Requests are fingerprinted and cached on disk so reruns are byte-identical
and free. The fingerprint covers backend name, model id, sampling settings,
turn texts, and raw image bytes; transport knobs (timeout, max_retries) are
deliberately excluded so tuning them never invalidates a cache.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

_MIME_BY_EXT = {
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".gif": "image/gif",
    ".webp": "image/webp",
    ".bmp": "image/bmp",
}

_BACKOFF_BASE_S = 0.1


class BackendError(Exception):
    """Base class for client failures."""


class TransportError(BackendError):
    def __init__(self, message: str, status: int | None = None, body: str = ""):
        super().__init__(message)
        self.status = status
        self.body = body


class BackendTimeout(BackendError):
    pass


class OfflineCacheMiss(BackendError):
    """Offline mode was requested but the cache has no entry."""


class InputError(BackendError):
    """Unreadable image or otherwise invalid request material."""


@dataclass(frozen=True)
class BackendConfig:
    name: str
    base_url: str
    model_id: str
    api_key_env: str = ""
    temperature: float = 0.0
    max_tokens: int = 512
    timeout: float = 60.0
    max_retries: int = 2

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError(f"backend {self.name}: temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError(f"backend {self.name}: max_tokens must be >= 1")
        if self.max_retries < 0:
            raise ValueError(f"backend {self.name}: max_retries must be >= 0")


@dataclass(frozen=True)
class Turn:
    role: str
    text: str
    image: str | None = None  # path to an image file


@dataclass
class ModelResponse:
    text: str
    backend_name: str
    latency_ms: float
    from_cache: bool
    request_fingerprint: str


class ResponseCache:
    """Content-addressed directory of fingerprint-named response files.

    Readers are lock-free; writers go through a per-fingerprint lock, which
    also deduplicates concurrent in-flight requests for the same fingerprint
    (the second caller finds the file the first one wrote).
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _path(self, fingerprint: str) -> Path:
        return self.directory / f"{fingerprint}.txt"

    def lock_for(self, fingerprint: str) -> threading.Lock:
        with self._locks_guard:
            lock = self._locks.get(fingerprint)
            if lock is None:
                lock = self._locks[fingerprint] = threading.Lock()
            return lock

    def get(self, fingerprint: str) -> str | None:
        path = self._path(fingerprint)
        if not path.exists():
            return None
        return path.read_text(encoding="utf-8")

    def put(self, fingerprint: str, text: str) -> None:
        path = self._path(fingerprint)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)


def _read_image(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read image file {path}: {exc}") from exc


def fingerprint_request(config: BackendConfig, turns: list[Turn]) -> str:
    """SHA-256 over everything that determines the model's answer."""
    hasher = hashlib.sha256()
    for part in (config.name, config.model_id, repr(float(config.temperature)), str(config.max_tokens)):
        hasher.update(part.encode("utf-8"))
        hasher.update(b"\x00")
    for turn in turns:
        hasher.update(turn.text.encode("utf-8"))
        hasher.update(b"\x00")
        if turn.image is not None:
            hasher.update(_read_image(turn.image))
            hasher.update(b"\x00")
    return hasher.hexdigest()


def _image_part(path: str) -> dict:
    data = base64.b64encode(_read_image(path)).decode("ascii")
    mime = _MIME_BY_EXT.get(Path(path).suffix.lower(), "image/png")
    return {"type": "image_url", "image_url": {"url": f"data:{mime};base64,{data}"}}


def build_messages(turns: list[Turn]) -> list[dict]:
    messages = []
    for turn in turns:
        if turn.image is None:
            messages.append({"role": turn.role, "content": turn.text})
        else:
            messages.append(
                {
                    "role": turn.role,
                    "content": [
                        {"type": "text", "text": turn.text},
                        _image_part(turn.image),
                    ],
                }
            )
    return messages


def _auth_headers(config: BackendConfig) -> dict:
    headers = {"Content-Type": "application/json"}
    if config.api_key_env:
        key = os.environ.get(config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
    return headers


def _extract_text(payload: dict) -> str:
    content = payload["choices"][0]["message"]["content"]
    if isinstance(content, str):
        return content
    # Some servers return content parts; concatenate the text ones.
    return "".join(p.get("text", "") for p in content if isinstance(p, dict))


def _post_once(config: BackendConfig, body: dict) -> str:
    url = config.base_url.rstrip("/") + "/v1/chat/completions"
    try:
        resp = requests.post(url, json=body, headers=_auth_headers(config), timeout=config.timeout)
    except requests.Timeout as exc:
        raise BackendTimeout(f"{config.name}: request timed out after {config.timeout}s") from exc
    except requests.RequestException as exc:
        raise TransportError(f"{config.name}: {exc}") from exc
    if resp.status_code != 200:
        raise TransportError(
            f"{config.name}: HTTP {resp.status_code}",
            status=resp.status_code,
            body=resp.text[:500],
        )
    try:
        return _extract_text(resp.json())
    except (ValueError, KeyError, IndexError) as exc:
        raise TransportError(f"{config.name}: malformed completion payload: {exc}") from exc


def chat(
    config: BackendConfig,
    turns: list[Turn],
    cache: ResponseCache,
    offline: bool = False,
) -> ModelResponse:
    """Send one chat request, or answer it from the cache.

    Retries non-success responses and timeouts with exponentially growing
    jittered sleeps (capped by the configured timeout); total attempts are
    max_retries + 1. The last error is re-raised once attempts run out.
    """
    fingerprint = fingerprint_request(config, turns)
    start = time.perf_counter()
    cached = cache.get(fingerprint)
    if cached is not None:
        return ModelResponse(
            text=cached,
            backend_name=config.name,
            latency_ms=(time.perf_counter() - start) * 1000.0,
            from_cache=True,
            request_fingerprint=fingerprint,
        )

    with cache.lock_for(fingerprint):
        # Another thread may have answered the same fingerprint while we waited.
        cached = cache.get(fingerprint)
        if cached is not None:
            return ModelResponse(
                text=cached,
                backend_name=config.name,
                latency_ms=(time.perf_counter() - start) * 1000.0,
                from_cache=True,
                request_fingerprint=fingerprint,
            )
        if offline:
            raise OfflineCacheMiss(
                f"{config.name}: offline mode and no cached response for {fingerprint[:12]}"
            )

        body = {
            "model": config.model_id,
            "temperature": config.temperature,
            "max_tokens": config.max_tokens,
            "messages": build_messages(turns),
        }
        last_error: BackendError | None = None
        for attempt in range(config.max_retries + 1):
            if attempt > 0:
                delay = _BACKOFF_BASE_S * (2 ** (attempt - 1))
                delay += random.uniform(0, delay)
                time.sleep(min(delay, config.timeout))
            try:
                sent = time.perf_counter()
                text = _post_once(config, body)
                cache.put(fingerprint, text)
                return ModelResponse(
                    text=text,
                    backend_name=config.name,
                    latency_ms=(time.perf_counter() - sent) * 1000.0,
                    from_cache=False,
                    request_fingerprint=fingerprint,
                )
            except (TransportError, BackendTimeout) as exc:
                last_error = exc
        assert last_error is not None
        raise last_error


def probe(config: BackendConfig) -> bool:
    """One minimal text-only request; True iff it succeeds within timeout."""
    body = {
        "model": config.model_id,
        "temperature": config.temperature,
        "max_tokens": 1,
        "messages": [{"role": "user", "content": "ping"}],
    }
    try:
        _post_once(config, body)
        return True
    except BackendError:
        return False


@dataclass
class BackendRegistry:
    backends: dict[str, BackendConfig] = field(default_factory=dict)

    def get(self, name: str) -> BackendConfig:
        if name not in self.backends:
            raise KeyError(f"unknown backend: {name} (registered: {sorted(self.backends)})")
        return self.backends[name]

    def __contains__(self, name: str) -> bool:
        return name in self.backends


def load_registry(path: str | Path) -> BackendRegistry:
    """Read a JSON registry file ({"backends": [{...}, ...]})."""
    with Path(path).open("r", encoding="utf-8") as fh:
        data = json.load(fh)
    registry = BackendRegistry()
    for entry in data.get("backends", []):
        config = BackendConfig(**entry)
        if config.name in registry.backends:
            raise ValueError(f"duplicate backend name in registry: {config.name}")
        registry.backends[config.name] = config
    return registry
