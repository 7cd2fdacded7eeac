"""Completion backends behind a single wire contract.

Every backend answers a :class:`ChatRequest` (step role, filled prompt text,
optional media reference) with plain response text. Real multimodal or text
endpoints, local subprocesses, simulated judges, and replay caches all sit
behind the same seam, so the orchestration above them is testable without
any live model.

Requests are content-addressed: the sha256 of (role, text, media) keys the
replay cache and the recording wrapper. Two textually identical requests are
the same request.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping

import requests


class BackendError(RuntimeError):
    """A backend failed to produce a response; retriable."""


class MediaNotSupportedError(ValueError):
    """A text-only backend was handed a request with a media attachment."""


class ReplayMissError(KeyError):
    """The replay cache holds no response for this request hash."""


class BackendKind(str, Enum):
    MULTIMODAL_ENDPOINT = "multimodal_endpoint"
    TEXT_ENDPOINT = "text_endpoint"
    SUBPROCESS = "subprocess"
    SIMULATED = "simulated"
    REPLAY = "replay"


@dataclass(frozen=True)
class ChatRequest:
    """One completion request: the full wire contract."""

    role: str
    text: str
    media: str | None = None

    def digest(self) -> str:
        payload = json.dumps(
            {"role": self.role, "text": self.text, "media": self.media},
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class JudgeBackend:
    """Base class: subclasses implement :meth:`_complete`."""

    id: str
    kind: BackendKind
    accepts_media: bool = True

    def complete(self, request: ChatRequest) -> str:
        if request.media is not None and not self.accepts_media:
            raise MediaNotSupportedError(
                f"backend {self.id!r} ({self.kind.value}) is text-only but got "
                f"media {request.media!r}"
            )
        return self._complete(request)

    def _complete(self, request: ChatRequest) -> str:
        raise NotImplementedError


@dataclass
class RetryPolicy:
    """Retry transient backend failures, then give up.

    ``retries`` counts attempts AFTER the first; backoff doubles per retry.
    ``sleep`` is injectable so tests do not wait.
    """

    retries: int = 2
    backoff_s: float = 0.5
    sleep: Callable[[float], None] = time.sleep

    def call(self, backend: JudgeBackend, request: ChatRequest) -> str:
        attempt = 0
        while True:
            try:
                return backend.complete(request)
            except BackendError:
                if attempt >= self.retries:
                    raise
                self.sleep(self.backoff_s * (2**attempt))
                attempt += 1


class HttpEndpointBackend(JudgeBackend):
    """POSTs the request as JSON and expects ``{"text": ...}`` back."""

    def __init__(
        self,
        id: str,
        url: str,
        kind: BackendKind = BackendKind.MULTIMODAL_ENDPOINT,
        timeout_s: float = 120.0,
        headers: Mapping[str, str] | None = None,
        session: requests.Session | None = None,
    ) -> None:
        if kind not in (BackendKind.MULTIMODAL_ENDPOINT, BackendKind.TEXT_ENDPOINT):
            raise ValueError(f"HttpEndpointBackend cannot be kind {kind.value}")
        self.id = id
        self.url = url
        self.kind = kind
        self.accepts_media = kind is BackendKind.MULTIMODAL_ENDPOINT
        self.timeout_s = timeout_s
        self.headers = dict(headers or {})
        self.session = session or requests.Session()

    def _complete(self, request: ChatRequest) -> str:
        body = {"role": request.role, "prompt": request.text, "media": request.media}
        try:
            resp = self.session.post(
                self.url, json=body, headers=self.headers, timeout=self.timeout_s
            )
            resp.raise_for_status()
            doc = resp.json()
        except requests.RequestException as exc:
            raise BackendError(f"backend {self.id!r}: {exc}") from exc
        except ValueError as exc:
            raise BackendError(f"backend {self.id!r}: non-JSON response") from exc
        if not isinstance(doc, dict) or not isinstance(doc.get("text"), str):
            raise BackendError(f"backend {self.id!r}: response missing 'text' field")
        return doc["text"]


class SubprocessBackend(JudgeBackend):
    """Runs a local command; request JSON on stdin, response text on stdout."""

    kind = BackendKind.SUBPROCESS

    def __init__(
        self, id: str, command: list[str], accepts_media: bool = True, timeout_s: float = 300.0
    ) -> None:
        if not command:
            raise ValueError("subprocess backend needs a nonempty command")
        self.id = id
        self.command = list(command)
        self.accepts_media = accepts_media
        self.timeout_s = timeout_s

    def _complete(self, request: ChatRequest) -> str:
        payload = json.dumps(
            {"role": request.role, "prompt": request.text, "media": request.media}
        )
        try:
            proc = subprocess.run(
                self.command,
                input=payload,
                capture_output=True,
                text=True,
                timeout=self.timeout_s,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise BackendError(f"backend {self.id!r}: {exc}") from exc
        if proc.returncode != 0:
            raise BackendError(
                f"backend {self.id!r}: exit {proc.returncode}: {proc.stderr.strip()[:200]}"
            )
        return proc.stdout.strip()


class ReplayBackend(JudgeBackend):
    """Serves recorded responses from ``<cache_dir>/<request sha256>.txt``.

    A cache miss is an error, never a live call: replay runs must be exact.
    """

    kind = BackendKind.REPLAY

    def __init__(self, id: str, cache_dir: str | Path, accepts_media: bool = True) -> None:
        self.id = id
        self.cache_dir = Path(cache_dir)
        self.accepts_media = accepts_media

    def _complete(self, request: ChatRequest) -> str:
        path = self.cache_dir / f"{request.digest()}.txt"
        if not path.exists():
            raise ReplayMissError(
                f"backend {self.id!r}: no recorded response for request "
                f"{request.digest()[:12]}… (role {request.role!r})"
            )
        return path.read_text(encoding="utf-8")


class RecordingBackend(JudgeBackend):
    """Delegates to an inner backend and records responses for later replay."""

    def __init__(self, inner: JudgeBackend, cache_dir: str | Path) -> None:
        self.inner = inner
        self.id = inner.id
        self.kind = inner.kind
        self.accepts_media = inner.accepts_media
        self.cache_dir = Path(cache_dir)

    def _complete(self, request: ChatRequest) -> str:
        text = self.inner.complete(request)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        (self.cache_dir / f"{request.digest()}.txt").write_text(text, encoding="utf-8")
        return text


class StaticBackend(JudgeBackend):
    """Answers every request with one fixed text; handy in tests and docs."""

    kind = BackendKind.SIMULATED

    def __init__(self, id: str, text: str, accepts_media: bool = True) -> None:
        self.id = id
        self.text = text
        self.accepts_media = accepts_media

    def _complete(self, request: ChatRequest) -> str:
        return self.text


def backend_from_config(config: Mapping) -> JudgeBackend:
    """Build a backend from a config mapping (one ``[backends.X]`` table)."""
    try:
        kind = BackendKind(config["kind"])
        backend_id = config["id"]
    except (KeyError, ValueError) as exc:
        raise ValueError(f"bad backend config: {exc}") from exc
    if kind in (BackendKind.MULTIMODAL_ENDPOINT, BackendKind.TEXT_ENDPOINT):
        return HttpEndpointBackend(
            backend_id,
            url=config["url"],
            kind=kind,
            timeout_s=float(config.get("timeout_s", 120.0)),
            headers=config.get("headers"),
        )
    if kind is BackendKind.SUBPROCESS:
        return SubprocessBackend(
            backend_id,
            command=list(config["command"]),
            accepts_media=bool(config.get("accepts_media", True)),
            timeout_s=float(config.get("timeout_s", 300.0)),
        )
    if kind is BackendKind.REPLAY:
        return ReplayBackend(
            backend_id,
            cache_dir=config["cache_dir"],
            accepts_media=bool(config.get("accepts_media", True)),
        )
    raise ValueError(
        f"backend kind {kind.value!r} cannot be built from config; construct it in code"
    )
