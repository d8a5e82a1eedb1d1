"""Bounded retry with exponential backoff for remote providers."""

from __future__ import annotations

import logging
import os
import time
from typing import Callable, TypeVar

import httpx

log = logging.getLogger(__name__)

T = TypeVar("T")

RETRY_STATUSES = frozenset({408, 429, 500, 502, 503, 504})


class TransportFailure(RuntimeError):
    """A remote call still failed after all retries."""


def with_retries(
    fn: Callable[[], T],
    *,
    max_retries: int = 3,
    backoff: float = 1.0,
    sleep: Callable[[float], None] = time.sleep,
) -> T:
    """Call ``fn`` and retry transport errors and retryable HTTP statuses.

    Waits ``backoff * 2**attempt`` seconds between attempts. Non-retryable
    HTTP errors propagate immediately.
    """
    attempt = 0
    while True:
        try:
            return fn()
        except httpx.HTTPStatusError as exc:
            if exc.response.status_code not in RETRY_STATUSES:
                raise TransportFailure(f"HTTP {exc.response.status_code} from {exc.request.url}") from exc
            err: Exception = exc
        except httpx.TransportError as exc:
            err = exc
        if attempt >= max_retries:
            raise TransportFailure(f"giving up after {attempt + 1} attempts: {err}") from err
        delay = backoff * 2**attempt
        log.warning("request failed (%s); retrying in %.1fs", err, delay)
        sleep(delay)
        attempt += 1


def auth_headers(token_env: str | None) -> dict[str, str]:
    if not token_env:
        return {}
    token = os.environ.get(token_env)
    return {"Authorization": f"Bearer {token}"} if token else {}
