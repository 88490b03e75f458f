"""Publishable outputs: anonymized datasets, summary matrices, plot series.

Addresses are replaced by SHA-256 digests. Unsalted hashing of IPv4
addresses is trivially reversible over the 2^32 space; the default stays
unsalted so output stays comparable with datasets already published under
the plain scheme, and a salt is offered where that weakness matters. The
salt itself is never written into any output.
"""

from __future__ import annotations

import hashlib
import json
import re
from typing import Iterable, Sequence

from ttlscout.analysis import Category, ComparisonOutcome
from ttlscout.ingest import DeviceRecord

DOTTED_QUAD_RE = re.compile(r"\b(?:\d{1,3}\.){3}\d{1,3}\b")


class AnonymizationLeakError(RuntimeError):
    """An anonymized artifact still contained a dotted-quad address."""


def address_digest(address: str, salt: str | None = None) -> str:
    """Lowercase hex SHA-256 of (salt || address)."""
    data = ((salt or "") + address).encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def _scrub(value, address: str, digest: str):
    """Replace occurrences of the original address inside nested strings."""
    if isinstance(value, str):
        return value.replace(address, digest)
    if isinstance(value, list):
        return [_scrub(item, address, digest) for item in value]
    if isinstance(value, dict):
        return {key: _scrub(item, address, digest) for key, item in value.items()}
    return value


def _verify_no_addresses(obj: dict) -> None:
    serialized = json.dumps(obj, sort_keys=True)
    leak = DOTTED_QUAD_RE.search(serialized)
    if leak:
        raise AnonymizationLeakError(
            f"dotted-quad {leak.group(0)!r} survived anonymization"
        )


def anonymize_dicts(
    rows: Iterable[dict], salt: str | None = None, address_key: str = "address"
) -> list[dict]:
    """Replace the address field of each row with its digest.

    The original address string is also scrubbed from any nested text (a
    banner can quote the host's own address); every output row is then
    scanned and a surviving dotted-quad raises rather than leaking.
    """
    out: list[dict] = []
    for row in rows:
        address = row.get(address_key)
        if address is None:
            raise ValueError(f"row has no {address_key!r} field")
        digest = address_digest(address, salt)
        scrubbed = {key: _scrub(value, address, digest) for key, value in row.items()}
        del scrubbed[address_key]
        scrubbed["address_hash"] = digest
        _verify_no_addresses(scrubbed)
        out.append(scrubbed)
    return out


def anonymize_records(records: Iterable[DeviceRecord], salt: str | None = None) -> list[dict]:
    from ttlscout.datafiles import record_to_dict

    return anonymize_dicts((record_to_dict(r) for r in records), salt)


def anonymize_outcomes(
    outcomes: Iterable[ComparisonOutcome], salt: str | None = None
) -> list[dict]:
    from ttlscout.datafiles import comparison_to_dict

    rows = []
    for outcome in outcomes:
        row = comparison_to_dict(outcome)
        # Lift the address to the top level so the digest replaces it there.
        row["address"] = row["record"].pop("address")
        rows.append(row)
    return anonymize_dicts(rows, salt)


def sorted_ttl_series(
    outcomes: Iterable[ComparisonOutcome], include: set[Category] | None = None
) -> list[tuple[int, int, int]]:
    """Aligned (ping TTL, hop count, reconstructed) rows, ascending by
    reconstructed value. Probe-error outcomes carry no numbers and are
    skipped."""
    rows = []
    for outcome in outcomes:
        if include is not None and outcome.category not in include:
            continue
        if outcome.verdict is None:
            continue
        recon = outcome.verdict.reconstructed
        rows.append((recon.ping_ttl, recon.hop_count, recon.value))
    rows.sort(key=lambda row: (row[2], row[0], row[1]))
    return rows


TTL_SERIES_HEADER = ("ping_ttl", "hop_count", "reconstructed_ttl")


def category_summary(
    outcomes: Sequence[ComparisonOutcome],
) -> tuple[list[str], dict[Category, dict[str, int]]]:
    """Matrix of category x origin query counts.

    Returns the sorted query list and per-category counts keyed by query.
    """
    queries = sorted({outcome.record.origin_query for outcome in outcomes})
    matrix: dict[Category, dict[str, int]] = {
        category: {query: 0 for query in queries} for category in Category
    }
    for outcome in outcomes:
        matrix[outcome.category][outcome.record.origin_query] += 1
    return queries, matrix


def category_summary_rows(outcomes: Sequence[ComparisonOutcome]) -> tuple[list[str], list[list]]:
    """CSV-ready rows for the category x query matrix, with totals."""
    queries, matrix = category_summary(outcomes)
    header = ["category", *queries, "total"]
    rows: list[list] = []
    column_totals = {query: 0 for query in queries}
    for category in Category:
        counts = matrix[category]
        row_total = sum(counts.values())
        rows.append([category.value, *(counts[q] for q in queries), row_total])
        for query in queries:
            column_totals[query] += counts[query]
    rows.append(["total", *(column_totals[q] for q in queries), sum(column_totals.values())])
    return header, rows
