"""JSON-over-HTTP POST with bounded exponential backoff."""

from __future__ import annotations

import logging
import os
import random
import time
from dataclasses import dataclass
from typing import Any, Callable

import httpx

log = logging.getLogger(__name__)

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


class TransportFailure(Exception):
    """Final failure of a POST after all retries; carries the last status if any."""

    def __init__(self, message: str, attempts: int, status: int | None = None, body: str = ""):
        super().__init__(message)
        self.attempts = attempts
        self.status = status
        self.body = body


@dataclass
class Backoff:
    base: float = 1.0
    factor: float = 2.0
    jitter: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        self._rng = random.Random(self.seed)

    def delay(self, retry: int) -> float:
        """Delay before retry number ``retry`` (1-based)."""
        d = self.base * self.factor ** (retry - 1)
        return d + d * self.jitter * self._rng.random()


def bearer_headers(api_key_env: str | None) -> dict[str, str]:
    headers = {"Content-Type": "application/json"}
    if api_key_env:
        token = os.environ.get(api_key_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        else:
            log.warning("environment variable %s is not set; sending request without auth", api_key_env)
    return headers


def post_json(
    url: str,
    body: dict,
    *,
    headers: dict[str, str],
    max_retries: int,
    backoff: Backoff,
    timeout: float = 60.0,
    sleep: Callable[[float], None] = time.sleep,
    client: httpx.Client | None = None,
) -> tuple[Any, int]:
    """POST ``body`` and return ``(parsed_json, attempt)``.

    Transport errors, 429 and 5xx are retried up to ``max_retries`` times.
    Any other non-2xx status fails immediately.
    """
    own = client is None
    client = client or httpx.Client(timeout=timeout)
    last = "no attempt made"
    last_status: int | None = None
    last_body = ""
    try:
        for attempt in range(1, max_retries + 2):
            if attempt > 1:
                sleep(backoff.delay(attempt - 1))
            try:
                resp = client.post(url, json=body, headers=headers)
            except httpx.TransportError as exc:
                last, last_status, last_body = f"{type(exc).__name__}: {exc}", None, ""
                log.warning("POST %s attempt %d: %s", url, attempt, last)
                continue
            if resp.status_code in RETRYABLE_STATUS:
                last, last_status, last_body = f"HTTP {resp.status_code}", resp.status_code, resp.text
                log.warning("POST %s attempt %d: HTTP %d", url, attempt, resp.status_code)
                continue
            if resp.status_code >= 400:
                raise TransportFailure(
                    f"HTTP {resp.status_code}", attempt, status=resp.status_code, body=resp.text
                )
            try:
                return resp.json(), attempt
            except ValueError:
                raise TransportFailure(
                    "response is not JSON", attempt, status=resp.status_code, body=resp.text
                ) from None
        raise TransportFailure(last, max_retries + 1, status=last_status, body=last_body)
    finally:
        if own:
            client.close()
