"""JSON-over-HTTP clients for externally hosted decision and reasoning
services.  Transport failures get bounded retries with exponential backoff;
malformed responses are protocol errors and are not retried."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Sequence

import requests

from .errors import RemoteCallError, ValidationError
from .orchestrator import ObservationFrame, PolicyDecision

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RemoteConfig:
    endpoint: str
    timeout_s: float = 10.0
    retries: int = 2
    backoff_base_s: float = 1.0

    def validate(self) -> None:
        if not self.endpoint:
            raise ValidationError("remote endpoint must be non-empty")
        if self.timeout_s <= 0.0:
            raise ValidationError(f"timeout_s={self.timeout_s} must be positive")
        if self.retries < 0:
            raise ValidationError(f"retries={self.retries} must be non-negative")
        if self.backoff_base_s < 0.0:
            raise ValidationError(f"backoff_base_s={self.backoff_base_s} must be non-negative")


class RemoteClient:
    """POSTs JSON payloads, retrying transport-level failures only.

    Retryable: connection errors, timeouts, 5xx statuses.  A 4xx status or
    an unparseable body means the server understood us and answered badly,
    so those surface immediately.
    """

    def __init__(self, config: RemoteConfig, session: requests.Session | None = None) -> None:
        config.validate()
        self._config = config
        self._session = session or requests.Session()

    @property
    def endpoint(self) -> str:
        return self._config.endpoint

    def post_json(self, payload: dict) -> dict:
        cfg = self._config
        last_error: str = "no attempts made"
        for attempt in range(cfg.retries + 1):
            if attempt > 0:
                delay = cfg.backoff_base_s * (2.0 ** (attempt - 1))
                log.debug("retrying %s in %.3fs (attempt %d)", cfg.endpoint, delay, attempt + 1)
                time.sleep(delay)
            try:
                resp = self._session.post(cfg.endpoint, json=payload, timeout=cfg.timeout_s)
            except requests.RequestException as exc:
                last_error = f"transport error: {exc}"
                continue
            if 500 <= resp.status_code < 600:
                last_error = f"server error {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise RemoteCallError(
                    f"{cfg.endpoint} answered {resp.status_code}: {resp.text[:200]}"
                )
            try:
                body = resp.json()
            except ValueError as exc:
                raise RemoteCallError(f"{cfg.endpoint} sent a non-JSON body: {exc}") from exc
            if not isinstance(body, dict):
                raise RemoteCallError(f"{cfg.endpoint} sent a non-object body")
            return body
        raise RemoteCallError(
            f"{cfg.endpoint} unreachable after {cfg.retries + 1} attempts ({last_error})"
        )


def _require_number(body: dict, key: str, endpoint: str) -> float:
    if key not in body:
        raise RemoteCallError(f"{endpoint} response is missing {key!r}")
    v = body[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise RemoteCallError(f"{endpoint} sent a non-numeric {key!r}: {v!r}")
    return float(v)


def _require_text(body: dict, key: str, endpoint: str) -> str:
    if key not in body:
        raise RemoteCallError(f"{endpoint} response is missing {key!r}")
    v = body[key]
    if not isinstance(v, str):
        raise RemoteCallError(f"{endpoint} sent a non-string {key!r}: {v!r}")
    return v


class RemotePolicyBackend:
    """Decision backend served over the wire.  Stateless between calls apart
    from the session id it hands the server, so instances are shareable."""

    shareable = True

    def __init__(self, client: RemoteClient, session_id: str) -> None:
        self._client = client
        self._session_id = session_id

    def decide(
        self,
        instruction: str,
        fused_context: str,
        frames: Sequence[ObservationFrame],
    ) -> PolicyDecision:
        payload = {
            "instruction": instruction,
            "fused_context": fused_context,
            "frames": [f.to_json() for f in frames],
            "session_id": self._session_id,
        }
        body = self._client.post_json(payload)
        endpoint = self._client.endpoint
        return PolicyDecision(
            d_reason=_require_number(body, "d_reason", endpoint),
            d_act=_require_number(body, "d_act", endpoint),
            text=_require_text(body, "text", endpoint),
        )


class RemoteReasonerBackend:
    """Reasoning service client: ships conversation turns, gets text back."""

    shareable = True

    def __init__(self, client: RemoteClient, session_id: str) -> None:
        self._client = client
        self._session_id = session_id

    def complete(self, turns: Sequence) -> str:
        payload = {
            "messages": [t.to_json() for t in turns],
            "session_id": self._session_id,
        }
        body = self._client.post_json(payload)
        return _require_text(body, "text", self._client.endpoint)
