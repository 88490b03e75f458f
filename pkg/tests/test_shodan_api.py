import hashlib
import json

import pytest

from ttlscout.shodan_api import (
    AuthenticationError,
    FetchError,
    HttpResponse,
    QuotaExceededError,
    ShodanClient,
    query_cache_name,
)


def _page(matches, total=None):
    return json.dumps({"matches": matches, "total": total if total is not None else len(matches)})


def _match(ip, port=102, **kw):
    banner = {"ip_str": ip, "port": port}
    banner.update(kw)
    return banner


class StubHttp:
    """Scripted responses keyed by (query, page); records every call."""

    def __init__(self, pages):
        self.pages = pages
        self.calls = []

    def __call__(self, url, params, timeout):
        self.calls.append((params["query"], params["page"]))
        response = self.pages[(params["query"], params["page"])]
        if isinstance(response, Exception):
            raise response
        if callable(response):
            return response()
        return response


def _client(tmp_path, pages, **kw):
    return ShodanClient(api_key="k", cache_dir=tmp_path / "cache", http_get=StubHttp(pages), **kw)


class TestFetchQuery:
    def test_records_tagged_with_origin(self, tmp_path):
        pages = {("6ES7", 1): HttpResponse(200, _page([_match("203.0.113.1"), _match("203.0.113.2")]))}
        client = _client(tmp_path, pages)
        records = client.fetch_query("6ES7")
        assert len(records) == 2
        assert all(r.origin_query == "6ES7" for r in records)

    def test_pages_until_exhausted(self, tmp_path):
        matches_1 = [_match(f"203.0.113.{i}") for i in range(100)]
        matches_2 = [_match(f"203.0.114.{i}") for i in range(50)]
        pages = {
            ("q", 1): HttpResponse(200, _page(matches_1, total=150)),
            ("q", 2): HttpResponse(200, _page(matches_2, total=150)),
        }
        records = _client(tmp_path, pages).fetch_query("q")
        assert len(records) == 150

    def test_page_limit_respected(self, tmp_path):
        pages = {
            ("q", 1): HttpResponse(200, _page([_match(f"203.0.113.{i}") for i in range(100)], total=300)),
        }
        records = _client(tmp_path, pages).fetch_query("q", page_limit=1)
        assert len(records) == 100

    def test_bad_key_raises_auth(self, tmp_path):
        pages = {("q", 1): HttpResponse(401, "")}
        with pytest.raises(AuthenticationError):
            _client(tmp_path, pages).fetch_query("q")

    def test_empty_key_rejected(self, tmp_path):
        with pytest.raises(AuthenticationError):
            ShodanClient(api_key="", cache_dir=tmp_path)

    def test_quota_error_distinguished(self, tmp_path):
        body = json.dumps({"error": "Please upgrade your API plan, no query credits left"})
        pages = {("q", 1): HttpResponse(200, body)}
        with pytest.raises(QuotaExceededError):
            _client(tmp_path, pages).fetch_query("q")

    def test_transient_errors_retry_then_succeed(self, tmp_path):
        attempts = iter(
            [
                HttpResponse(503, ""),
                ConnectionError("reset"),
                HttpResponse(200, _page([_match("203.0.113.1")])),
            ]
        )
        pages = {("q", 1): lambda: _raise_or_return(next(attempts))}
        client = ShodanClient(
            api_key="k", cache_dir=tmp_path, http_get=StubHttp(pages), sleep=lambda _: None
        )
        records = client.fetch_query("q")
        assert len(records) == 1

    def test_retry_budget_exhausted(self, tmp_path):
        pages = {("q", 1): HttpResponse(503, "")}
        client = ShodanClient(
            api_key="k", cache_dir=tmp_path, http_get=StubHttp(pages), sleep=lambda _: None
        )
        with pytest.raises(FetchError, match="5 attempts"):
            client.fetch_query("q")

    def test_malformed_banner_skipped_and_counted(self, tmp_path):
        body = _page([_match("203.0.113.1"), {"port": 80}, _match("not-an-ip")])
        pages = {("q", 1): HttpResponse(200, body)}
        client = _client(tmp_path, pages)
        records = client.fetch_query("q")
        assert len(records) == 1
        assert client.stats.skipped == 2


def _raise_or_return(item):
    if isinstance(item, Exception):
        raise item
    return item


class TestCache:
    def test_cache_file_name_is_query_digest_plus_page(self):
        digest = hashlib.sha256(b"6ES7").hexdigest()
        assert query_cache_name("6ES7", 3) == f"{digest}-3.json"
        assert query_cache_name("6ES7", 3).lower() == query_cache_name("6ES7", 3)

    def test_replay_from_cache_without_network(self, tmp_path):
        body = _page([_match("203.0.113.1"), _match("203.0.113.2", tags=["honeypot"])])
        pages = {("6ES7", 1): HttpResponse(200, body)}
        cache = tmp_path / "cache"
        live = ShodanClient(api_key="k", cache_dir=cache, http_get=StubHttp(pages))
        first = live.fetch_query("6ES7")

        def no_network(url, params, timeout):
            raise AssertionError("network used despite warm cache")

        offline = ShodanClient(api_key="k", cache_dir=cache, http_get=no_network)
        second = offline.fetch_query("6ES7")
        assert first == second
        assert offline.stats.cache_hits == 1

    def test_cache_write_on_fetch(self, tmp_path):
        pages = {("q", 1): HttpResponse(200, _page([_match("203.0.113.1")]))}
        cache = tmp_path / "cache"
        _client_with_cache = ShodanClient(api_key="k", cache_dir=cache, http_get=StubHttp(pages))
        _client_with_cache.fetch_query("q")
        assert (cache / query_cache_name("q", 1)).exists()

    def test_distinct_queries_use_distinct_files(self, tmp_path):
        assert query_cache_name("a", 1) != query_cache_name("b", 1)
