"""Shodan search API client with on-disk response caching.

Each (query, page) response is cached under a file named by the SHA-256 of
the query text plus the page number, so re-runs replay from disk and spend
no API credits.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from ttlscout.ingest import DeviceRecord, IngestError, banner_to_record

log = logging.getLogger(__name__)

API_BASE = "https://api.shodan.io"
PAGE_SIZE = 100
MAX_ATTEMPTS = 5

# Status codes worth retrying; everything else 4xx is a hard failure.
_TRANSIENT_STATUS = {429, 500, 502, 503, 504}


class ShodanError(Exception):
    """Base class for fetch failures."""


class AuthenticationError(ShodanError):
    """Invalid or missing API key."""


class QuotaExceededError(ShodanError):
    """Search credits exhausted."""


class FetchError(ShodanError):
    """Transient failures persisted past the retry budget."""


@dataclass
class HttpResponse:
    status: int
    text: str


@dataclass
class FetchStats:
    pages: int = 0
    records: int = 0
    skipped: int = 0
    cache_hits: int = 0


def _requests_get(url: str, params: dict, timeout: float) -> HttpResponse:
    import requests

    try:
        resp = requests.get(url, params=params, timeout=timeout)
    except requests.RequestException as exc:
        raise ConnectionError(str(exc)) from exc
    return HttpResponse(status=resp.status_code, text=resp.text)


def query_cache_name(query: str, page: int) -> str:
    digest = hashlib.sha256(query.encode("utf-8")).hexdigest()
    return f"{digest}-{page}.json"


class ShodanClient:
    """Pages through /shodan/host/search, caching raw responses to disk."""

    def __init__(
        self,
        api_key: str,
        cache_dir: str | Path,
        http_get: Callable[[str, dict, float], HttpResponse] | None = None,
        timeout: float = 30.0,
        backoff_base: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not api_key:
            raise AuthenticationError("no API key supplied")
        self.api_key = api_key
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._http_get = http_get or _requests_get
        self._timeout = timeout
        self._backoff_base = backoff_base
        self._sleep = sleep
        self.stats = FetchStats()

    def _cache_path(self, query: str, page: int) -> Path:
        return self.cache_dir / query_cache_name(query, page)

    def _request_page(self, query: str, page: int) -> str:
        url = f"{API_BASE}/shodan/host/search"
        params = {"key": self.api_key, "query": query, "page": page}
        last_error: Exception | None = None
        for attempt in range(MAX_ATTEMPTS):
            if attempt:
                delay = self._backoff_base * (2 ** (attempt - 1))
                self._sleep(delay)
            try:
                resp = self._http_get(url, params, self._timeout)
            except ConnectionError as exc:
                last_error = exc
                log.warning("attempt %d for %r page %d failed: %s", attempt + 1, query, page, exc)
                continue
            if resp.status == 401:
                raise AuthenticationError("Shodan rejected the API key")
            if resp.status == 402:
                raise QuotaExceededError("Shodan query credits exhausted")
            if resp.status in _TRANSIENT_STATUS:
                last_error = FetchError(f"HTTP {resp.status}")
                log.warning("transient HTTP %d for %r page %d", resp.status, query, page)
                continue
            if resp.status != 200:
                raise FetchError(f"HTTP {resp.status} fetching {query!r} page {page}")
            body = resp.text
            try:
                parsed = json.loads(body)
            except json.JSONDecodeError as exc:
                raise FetchError(f"unparseable response body: {exc}") from None
            error_text = str(parsed.get("error", "")) if isinstance(parsed, dict) else ""
            if error_text:
                lowered = error_text.lower()
                if "credit" in lowered or "quota" in lowered or "upgrade" in lowered:
                    raise QuotaExceededError(error_text)
                if "key" in lowered or "unauthorized" in lowered:
                    raise AuthenticationError(error_text)
                raise FetchError(error_text)
            return body
        raise FetchError(
            f"gave up on {query!r} page {page} after {MAX_ATTEMPTS} attempts: {last_error}"
        )

    def _get_page(self, query: str, page: int) -> dict:
        cache_path = self._cache_path(query, page)
        if cache_path.exists():
            self.stats.cache_hits += 1
            body = cache_path.read_text(encoding="utf-8")
        else:
            body = self._request_page(query, page)
            cache_path.write_text(body, encoding="utf-8")
        try:
            parsed = json.loads(body)
        except json.JSONDecodeError as exc:
            raise FetchError(f"cached page {cache_path.name} unparseable: {exc}") from None
        if not isinstance(parsed, dict):
            raise FetchError(f"page {page} for {query!r} is not a JSON object")
        return parsed

    def fetch_query(self, query: str, page_limit: int | None = None) -> list[DeviceRecord]:
        """Fetch every result for a search string, tagged with its origin query.

        Pages until the result set is exhausted or the page limit is hit.
        Malformed banners are skipped, logged, and counted in ``stats``.
        """
        records: list[DeviceRecord] = []
        page = 1
        while page_limit is None or page <= page_limit:
            payload = self._get_page(query, page)
            self.stats.pages += 1
            matches = payload.get("matches")
            if not isinstance(matches, list):
                self.stats.skipped += 1
                log.warning("malformed page %d for %r: no matches list", page, query)
                matches = []
            for banner in matches:
                try:
                    record = banner_to_record(banner, origin_query=query)
                except IngestError as exc:
                    self.stats.skipped += 1
                    log.warning("skipping banner on %r page %d: %s", query, page, exc)
                    continue
                records.append(record)
                self.stats.records += 1
            total = payload.get("total", 0)
            if not matches or page * PAGE_SIZE >= int(total or 0):
                break
            page += 1
        return records
