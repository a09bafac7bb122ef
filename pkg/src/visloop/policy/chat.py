"""Client for a chat-completions style multimodal endpoint."""

from __future__ import annotations

import logging
import os
import time

import httpx

from ..segmenter import ProviderRejected, ProviderTimeout, ProviderUnavailable
from .base import PolicyRequest, QuotaExceeded

logger = logging.getLogger(__name__)

TOKEN_ENV = "VISLOOP_POLICY_TOKEN"
REDACTED = "***"


def redact_headers(headers: dict) -> dict:
    return {k: (REDACTED if k.lower() in ("authorization", "x-api-key") else v) for k, v in headers.items()}


def _content_text(content) -> str:
    if isinstance(content, str):
        return content
    if isinstance(content, list):
        return "".join(p.get("text", "") for p in content if isinstance(p, dict))
    raise ProviderRejected("response message has no text content")


class ChatPolicy:
    """Sends each request as JSON and returns the first choice's text.

    Every exchange is appended to ``log`` with images replaced by their
    digests and credentials redacted, ready to be written to a trace.
    """

    def __init__(self, endpoint: str, model: str, token: str | None = None, temperature: float = 0.0,
                 timeout: float = 120.0, retries: int = 3, backoff: float = 1.0,
                 max_requests: int | None = None, client: httpx.Client | None = None):
        self.endpoint = endpoint
        self.model = model
        self.token = token if token is not None else os.environ.get(TOKEN_ENV)
        self.temperature = temperature
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.max_requests = max_requests
        self._client = client or httpx.Client()
        self.requests = 0
        self.log: list = []

    def _headers(self) -> dict:
        h = {"Content-Type": "application/json"}
        if self.token:
            h["Authorization"] = f"Bearer {self.token}"
        return h

    def decide(self, req: PolicyRequest) -> str:
        body = req.to_wire(self.model, self.temperature)
        entry = {"request": req.to_wire(self.model, self.temperature, images_as="digest"),
                 "headers": redact_headers(self._headers())}
        last_error = None
        for attempt in range(self.retries + 1):
            if self.max_requests is not None and self.requests >= self.max_requests:
                raise QuotaExceeded(f"request quota of {self.max_requests} used up")
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            self.requests += 1
            try:
                r = self._client.post(self.endpoint, json=body, headers=self._headers(), timeout=self.timeout)
            except httpx.TimeoutException as exc:
                raise ProviderTimeout(f"policy request exceeded {self.timeout}s") from exc
            except httpx.TransportError as exc:
                last_error = f"transport error: {exc}"
                logger.warning("policy attempt %d failed: %s", attempt + 1, last_error)
                continue
            if r.status_code >= 500 or r.status_code == 429:
                last_error = f"HTTP {r.status_code}"
                logger.warning("policy attempt %d failed: %s", attempt + 1, last_error)
                continue
            if r.status_code >= 400:
                raise ProviderRejected(f"HTTP {r.status_code}: {r.text[:200]}")
            try:
                payload = r.json()
                text = _content_text(payload["choices"][0]["message"]["content"])
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise ProviderRejected(f"malformed completion: {exc}") from exc
            entry["response"] = payload
            self.log.append(entry)
            return text
        raise ProviderUnavailable(f"giving up after {self.retries} retries ({last_error})")

    def drain(self) -> list:
        out, self.log = self.log, []
        return out
