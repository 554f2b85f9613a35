"""Transports for language-model requests: HTTP, transcript replay and a mock.

Every transport exposes ``complete(prompt, purpose, **meta) -> str``. The
``purpose`` is one of ``propose``, ``reflect`` or ``rate``; ``meta`` carries
hints the mock uses to answer deterministically.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from typing import Any, Dict, List, Optional

API_KEY_ENV = "SCLM_API_KEY"


class TransportError(RuntimeError):
    pass


class BackendUnavailable(TransportError):
    pass


class TranscriptMissing(TransportError):
    pass


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


class HttpTransport:
    """POSTs ``{"model", "prompt", **params}`` and reads ``text`` from the reply."""

    def __init__(self, endpoint: str, model: Optional[str] = None, params: Optional[dict] = None,
                 retries: int = 3, timeout: float = 60.0, max_requests_per_minute: Optional[float] = None,
                 api_key: Optional[str] = None):
        import httpx

        self.endpoint = endpoint
        self.model = model
        self.params = dict(params or {})
        self.retries = retries
        self.timeout = timeout
        self.min_interval = 60.0 / max_requests_per_minute if max_requests_per_minute else 0.0
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self._client = httpx.Client(timeout=timeout)
        self._lock = threading.Lock()
        self._last = 0.0

    def _throttle(self):
        with self._lock:
            wait = self._last + self.min_interval - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last = time.monotonic()

    def complete(self, prompt: str, purpose: str = "", **meta) -> str:
        import httpx

        payload = {"prompt": prompt, **self.params}
        if self.model:
            payload["model"] = self.model
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        last_err: Optional[Exception] = None
        for attempt in range(self.retries + 1):
            self._throttle()
            try:
                resp = self._client.post(self.endpoint, json=payload, headers=headers)
                if resp.status_code < 500:
                    resp.raise_for_status()
                    return str(resp.json()["text"])
                last_err = TransportError(f"server error {resp.status_code}")
            except (httpx.HTTPError, KeyError, ValueError) as exc:
                last_err = exc
            time.sleep(min(2.0 ** attempt * 0.5, 8.0))
        raise BackendUnavailable(f"LLM endpoint failed after {self.retries} retries: {last_err}")


class TranscriptTransport:
    """Replays recorded exchanges.

    A request is answered by the first unused record with the same prompt
    hash; failing that, by the next unused record with the same purpose.
    """

    def __init__(self, records: List[Dict[str, Any]]):
        self.records = list(records)
        self.used = [False] * len(self.records)

    @classmethod
    def load(cls, path) -> "TranscriptTransport":
        with open(path) as fh:
            return cls([json.loads(line) for line in fh if line.strip()])

    def complete(self, prompt: str, purpose: str = "", **meta) -> str:
        h = _digest(prompt)
        for match in (lambda r: r["request"].get("prompt_sha256") == h
                      or r["request"].get("prompt") == prompt,
                      lambda r: r["request"].get("purpose") == purpose):
            for i, rec in enumerate(self.records):
                if not self.used[i] and match(rec):
                    self.used[i] = True
                    return rec["response"]
        raise TranscriptMissing(f"no recorded response for a {purpose!r} request")


class RecordingTransport:
    """Wraps another transport and appends every exchange to a JSON-lines file."""

    def __init__(self, inner, path):
        self.inner = inner
        self.path = path
        self._lock = threading.Lock()

    def complete(self, prompt: str, purpose: str = "", **meta) -> str:
        reply = self.inner.complete(prompt, purpose, **meta)
        rec = {"request": {"purpose": purpose, "prompt": prompt, "prompt_sha256": _digest(prompt)},
               "response": reply}
        with self._lock, open(self.path, "a") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return reply


class MockTransport:
    """Offline stand-in with hash-derived, reproducible answers."""

    def __init__(self, salt: str = ""):
        self.salt = salt
        self.calls = 0

    def _h(self, *parts) -> int:
        return int(_digest("|".join([self.salt, *map(str, parts)]))[:12], 16)

    def complete(self, prompt: str, purpose: str = "", **meta) -> str:
        self.calls += 1
        if purpose == "rate":
            k = self._h(meta.get("candidate_id"), meta.get("clause")) % 5 + 1
            return f"rating: {k}"
        if purpose == "reflect":
            n = int(meta.get("n_candidates", 1))
            return f"The best reward function is at number: {self._h(prompt) % n}"
        return f"$$$ {meta.get('fallback', 'state')} $$$"


_DOLLARS = re.compile(r"\$\$\$(.*?)\$\$\$", re.S)
_CHOICE = re.compile(r"number:\s*\[?\s*(\d+)\s*\]?", re.I)
_RATING = re.compile(r"rating:\s*\[?\s*(-?\d+)", re.I)


def extract_expression(reply: str) -> Optional[str]:
    m = _DOLLARS.search(reply)
    if not m:
        return None
    text = m.group(1).strip().strip("'\"`").strip()
    return text or None


def extract_choice(reply: str) -> Optional[int]:
    m = _CHOICE.search(reply)
    return int(m.group(1)) if m else None


def extract_rating(reply: str) -> Optional[int]:
    m = _RATING.search(reply)
    if m is None:
        m = re.fullmatch(r"\s*(-?\d+)\s*\.?\s*", reply)
    return int(m.group(1)) if m else None
