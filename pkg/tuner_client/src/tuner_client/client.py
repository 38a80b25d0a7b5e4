"""Thin HTTP client with bounded retries and exponential backoff."""

from __future__ import annotations

import time

import requests


class ServiceUnavailable(RuntimeError):
    pass


class ServiceError(RuntimeError):
    def __init__(self, status: int, payload):
        self.status = status
        self.payload = payload
        super().__init__(f"service returned {status}: {payload}")


class ServiceClient:
    """Retries network failures up to ``attempts`` times with exponential
    backoff, then aborts. HTTP error statuses are not retried: they are
    deterministic answers, not flakes."""

    def __init__(self, endpoint: str, attempts: int = 3,
                 backoff_s: float = 0.2, timeout_s: float = 30.0):
        self.endpoint = endpoint.rstrip("/")
        self.attempts = attempts
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s
        self.session = requests.Session()

    def _request(self, method: str, path: str, **kw):
        url = f"{self.endpoint}{path}"
        last = None
        for attempt in range(self.attempts):
            try:
                resp = self.session.request(method, url,
                                            timeout=self.timeout_s, **kw)
            except requests.RequestException as e:
                last = e
                if attempt + 1 < self.attempts:
                    time.sleep(self.backoff_s * (2 ** attempt))
                continue
            if resp.status_code >= 400:
                raise ServiceError(resp.status_code, _safe_json(resp))
            return resp.json()
        raise ServiceUnavailable(
            f"{method} {url} failed after {self.attempts} attempts: {last}")

    # -- endpoint wrappers

    def health(self) -> dict:
        return self._request("GET", "/v1/health")

    def insights(self, **params) -> dict:
        return self._request("GET", "/v1/insights", params=params)

    def optimize(self, plan: dict, engines: list, mode: str = "full",
                 variant: str = "A", query_id_suffix: str = "") -> dict:
        body = {"plan": plan, "target_engines": engines, "mode": mode,
                "variant": variant}
        return self._request("POST", "/v1/optimize", json=body)

    def run(self, plans: list) -> dict:
        return self._request("POST", "/v1/run", json={"plans": plans})

    def put_config(self, scope: dict, key: str, value, author: str) -> dict:
        return self._request("PUT", "/v1/config",
                             json={"scope": scope, "key": key,
                                   "value": value, "author": author})

    def resolve_config(self, key: str, **context) -> dict:
        params = {"key": key}
        params.update(context)
        return self._request("GET", "/v1/config/resolve", params=params)


def _safe_json(resp):
    try:
        return resp.json()
    except ValueError:
        return resp.text[:200]
