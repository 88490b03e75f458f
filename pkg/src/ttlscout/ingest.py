"""Shodan record ingestion: export parsing, deduplication, banner extraction.

Accepts the newline-delimited JSON exports Shodan produces (optionally
gzip-compressed), maps banners to device records, and deduplicates by
address while merging the evidence carried by discarded duplicates.
"""

from __future__ import annotations

import gzip
import io
import ipaddress
import json
import logging
import re
from dataclasses import dataclass, field, replace
from typing import IO

log = logging.getLogger(__name__)

GZIP_MAGIC = b"\x1f\x8b"

# Siemens order numbers: '6ES7' then a three-digit group and two
# alphanumeric groups, e.g. '6ES7 315-2EH14-0AB0'.
_MODEL_CODE_RE = re.compile(r"6ES7\s*(\d{3}-[A-Z0-9]{5}-[A-Z0-9]{4})", re.IGNORECASE)

HONEYPOT_TAG = "honeypot"


class IngestError(ValueError):
    """Raised for unusable ingest input."""


class ExportFormatError(IngestError):
    """Raised when an export stream yields no parseable records."""


@dataclass(frozen=True)
class HardwareModel:
    """Normalized hardware model string pulled from a service banner."""

    model: str
    vendor: str = "Siemens"


@dataclass(frozen=True)
class DeviceRecord:
    """One internet host as harvested from Shodan."""

    address: str
    matched_port: int
    origin_query: str
    all_ports: frozenset[int] = frozenset()
    tags: frozenset[str] = frozenset()
    org: str = ""
    raw_banner: str = ""
    hardware_models: frozenset[HardwareModel] = frozenset()

    def __post_init__(self) -> None:
        try:
            parsed = ipaddress.ip_address(self.address)
        except ValueError as exc:
            raise IngestError(f"bad address {self.address!r}: {exc}") from None
        if parsed.version != 4:
            raise IngestError(f"address {self.address!r} is not IPv4")
        if not 1 <= self.matched_port <= 65535:
            raise IngestError(f"matched_port {self.matched_port} out of range")
        for port in self.all_ports:
            if not 1 <= port <= 65535:
                raise IngestError(f"port {port} out of range")
        if not self.origin_query:
            raise IngestError("origin_query must be non-empty")


@dataclass
class ParseStats:
    total_lines: int = 0
    parsed: int = 0
    skipped_corrupt: int = 0
    skipped_ipv6: int = 0


@dataclass
class DedupStats:
    total_in: int = 0
    total_out: int = 0
    removed: int = 0
    per_query_before: dict[str, int] = field(default_factory=dict)
    per_query_after: dict[str, int] = field(default_factory=dict)


def default_queries() -> list[str]:
    """Search strings used to harvest purported S7 devices and known honeypots."""
    return ["6ES7", "Technodrome", "Mouser Factory", "[00:13:EA:00:00:00]"]


def extract_hardware_strings(banner: str) -> frozenset[HardwareModel]:
    """Scan a banner for Siemens order numbers, normalized and deduplicated."""
    models = set()
    for match in _MODEL_CODE_RE.finditer(banner):
        code = match.group(1).upper()
        models.add(HardwareModel(model=f"6ES7 {code}"))
    return frozenset(models)


def has_honeypot_tag(record: DeviceRecord) -> bool:
    """True iff the record carries Shodan's honeypot tag (case-insensitive)."""
    return any(tag.lower() == HONEYPOT_TAG for tag in record.tags)


def banner_to_record(banner: dict, origin_query: str) -> DeviceRecord:
    """Map one Shodan banner object to a DeviceRecord.

    Raises IngestError when required fields are missing or invalid.
    """
    try:
        address = banner["ip_str"]
        port = int(banner["port"])
    except (KeyError, TypeError, ValueError) as exc:
        raise IngestError(f"banner missing ip_str/port: {exc}") from None
    if not isinstance(address, str):
        raise IngestError("ip_str is not a string")
    tags = banner.get("tags") or []
    org = banner.get("org") or ""
    data = banner.get("data") or ""
    ports = banner.get("ports") or []
    return DeviceRecord(
        address=address,
        matched_port=port,
        origin_query=origin_query,
        all_ports=frozenset(int(p) for p in ports),
        tags=frozenset(str(t) for t in tags),
        org=str(org),
        raw_banner=str(data),
        hardware_models=extract_hardware_strings(str(data)),
    )


def _decompress_if_gzip(raw: bytes) -> bytes:
    if raw[:2] == GZIP_MAGIC:
        try:
            return gzip.decompress(raw)
        except OSError as exc:
            raise ExportFormatError(f"gzip stream unreadable: {exc}") from None
    return raw


def parse_export(
    stream: IO[bytes], origin_query: str = "export"
) -> tuple[list[DeviceRecord], ParseStats]:
    """Parse a Shodan export: newline-delimited JSON, plain or gzip.

    Corrupt lines are skipped and counted; IPv6 banners are rejected with a
    counted warning (the TTL method reads the IPv4 header). An export with
    lines but zero parseable records is a hard error, distinguishing it from
    an empty-but-valid export.
    """
    try:
        raw = stream.read()
    except OSError as exc:
        raise ExportFormatError(f"stream unreadable: {exc}") from None
    text = _decompress_if_gzip(raw).decode("utf-8", errors="replace")

    stats = ParseStats()
    records: list[DeviceRecord] = []
    for line in io.StringIO(text):
        line = line.strip()
        if not line:
            continue
        stats.total_lines += 1
        try:
            banner = json.loads(line)
            if not isinstance(banner, dict):
                raise IngestError("line is not a JSON object")
            record = banner_to_record(banner, origin_query)
        except json.JSONDecodeError as exc:
            stats.skipped_corrupt += 1
            log.warning("skipping corrupt export line %d: %s", stats.total_lines, exc)
            continue
        except IngestError as exc:
            if "not IPv4" in str(exc):
                stats.skipped_ipv6 += 1
                log.warning("skipping IPv6 record: %s", exc)
            else:
                stats.skipped_corrupt += 1
                log.warning("skipping unusable export line: %s", exc)
            continue
        records.append(record)
        stats.parsed += 1

    if stats.total_lines > 0 and stats.parsed == 0:
        raise ExportFormatError(
            f"no parseable records in {stats.total_lines} lines"
        )
    return records, stats


def _merge(survivor: DeviceRecord, duplicate: DeviceRecord) -> DeviceRecord:
    ports = set(survivor.all_ports) | set(duplicate.all_ports) | {duplicate.matched_port}
    if ports:
        ports.add(survivor.matched_port)
    return replace(
        survivor,
        tags=survivor.tags | duplicate.tags,
        all_ports=frozenset(ports),
        hardware_models=survivor.hardware_models | duplicate.hardware_models,
    )


def deduplicate(records: list[DeviceRecord]) -> tuple[list[DeviceRecord], DedupStats]:
    """Drop later records sharing an address; merge their evidence into the first.

    The survivor keeps the origin query of the first-yielding search string;
    tags, ports, and hardware models of discarded duplicates are merged in.
    Idempotent and order-stable.
    """
    stats = DedupStats(total_in=len(records))
    for record in records:
        stats.per_query_before[record.origin_query] = (
            stats.per_query_before.get(record.origin_query, 0) + 1
        )

    by_address: dict[str, int] = {}
    out: list[DeviceRecord] = []
    for record in records:
        index = by_address.get(record.address)
        if index is None:
            by_address[record.address] = len(out)
            out.append(record)
        else:
            out[index] = _merge(out[index], record)

    stats.total_out = len(out)
    stats.removed = stats.total_in - stats.total_out
    for record in out:
        stats.per_query_after[record.origin_query] = (
            stats.per_query_after.get(record.origin_query, 0) + 1
        )
    return out, stats
