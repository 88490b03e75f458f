"""Pipeline file formats: self-describing NDJSON stages and RFC-4180 CSV.

Every intermediate file starts with a header object recording the tool
version, a digest of the effective configuration, and a timestamp. Rows are
serialized with sorted keys so re-runs produce byte-identical files apart
from the header timestamp.
"""

from __future__ import annotations

import csv
import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from ttlscout import __version__
from ttlscout.analysis import (
    Category,
    ComparisonOutcome,
    LocalVerdict,
    ReconstructedTTL,
    VerdictKind,
)
from ttlscout.fingerprints import Fingerprint, FingerprintKind, MatchResult
from ttlscout.ingest import DeviceRecord, HardwareModel
from ttlscout.probe import PingResult, ProbeError, ProbeMethod, ProbeOutcome, TraceResult

TOOL_NAME = "ttlscout"
HEADER_KEY = "record_type"
HEADER_VALUE = "header"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_digest(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def content_digest(path: str | Path) -> str:
    """Digest of a pipeline file with the header timestamp excluded, so
    downstream headers stay stable across re-runs of identical inputs.
    Files without a header object digest as raw bytes."""
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    first_line = raw if newline == -1 else raw[:newline]
    try:
        header = json.loads(first_line)
    except (json.JSONDecodeError, UnicodeDecodeError):
        return hashlib.sha256(raw).hexdigest()
    if not isinstance(header, dict) or header.get(HEADER_KEY) != HEADER_VALUE:
        return hashlib.sha256(raw).hexdigest()
    header.pop("created_utc", None)
    rest = b"" if newline == -1 else raw[newline + 1 :]
    digest = hashlib.sha256()
    digest.update(canonical_json(header).encode("utf-8"))
    digest.update(b"\n")
    digest.update(rest)
    return digest.hexdigest()


def make_header(format_name: str, config: dict, extra: dict | None = None) -> dict:
    header = {
        HEADER_KEY: HEADER_VALUE,
        "format": format_name,
        "tool": TOOL_NAME,
        "tool_version": __version__,
        "config": config,
        "config_digest": config_digest(config),
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    if extra:
        header.update(extra)
    return header


def write_ndjson(path: str | Path, header: dict, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(canonical_json(header) + "\n")
        for row in rows:
            fh.write(canonical_json(row) + "\n")


def read_ndjson(path: str | Path) -> tuple[dict | None, list[dict]]:
    """Read an NDJSON file; a leading header object is split off when present.

    Headerless files (hand-made fixtures) are accepted: all lines are rows.
    """
    header: dict | None = None
    rows: list[dict] = []
    with open(path, "r", encoding="utf-8") as fh:
        for index, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if index == 0 and isinstance(obj, dict) and obj.get(HEADER_KEY) == HEADER_VALUE:
                header = obj
                continue
            rows.append(obj)
    return header, rows


def write_csv(path: str | Path, header: Sequence, rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        return [], []
    return rows[0], rows[1:]


# --- domain object serializers ------------------------------------------

def record_to_dict(record: DeviceRecord) -> dict:
    return {
        "address": record.address,
        "matched_port": record.matched_port,
        "all_ports": sorted(record.all_ports),
        "tags": sorted(record.tags),
        "org": record.org,
        "origin_query": record.origin_query,
        "raw_banner": record.raw_banner,
        "hardware_models": [
            {"model": m.model, "vendor": m.vendor}
            for m in sorted(record.hardware_models, key=lambda m: (m.vendor, m.model))
        ],
    }


def record_from_dict(data: dict) -> DeviceRecord:
    return DeviceRecord(
        address=data["address"],
        matched_port=int(data["matched_port"]),
        origin_query=data["origin_query"],
        all_ports=frozenset(int(p) for p in data.get("all_ports", [])),
        tags=frozenset(str(t) for t in data.get("tags", [])),
        org=data.get("org", ""),
        raw_banner=data.get("raw_banner", ""),
        hardware_models=frozenset(
            HardwareModel(model=m["model"], vendor=m.get("vendor", "Siemens"))
            for m in data.get("hardware_models", [])
        ),
    )


def outcome_to_dict(outcome: ProbeOutcome) -> dict:
    ping = None
    if outcome.ping is not None:
        ping = {
            "reply_ttl": outcome.ping.reply_ttl,
            "rtt": outcome.ping.rtt,
            "method": outcome.ping.method.value,
        }
    trace = None
    if outcome.trace is not None:
        trace = {
            "hop_count": outcome.trace.hop_count,
            "reached": outcome.trace.reached,
            "method": outcome.trace.method.value,
            "hops": [[position, responder] for position, responder in outcome.trace.hops],
        }
    return {
        "target": outcome.target,
        "ping": ping,
        "trace": trace,
        "error": outcome.error.value if outcome.error else None,
    }


def outcome_from_dict(data: dict) -> ProbeOutcome:
    ping = None
    if data.get("ping"):
        p = data["ping"]
        ping = PingResult(
            reply_ttl=int(p["reply_ttl"]), rtt=float(p["rtt"]), method=ProbeMethod(p["method"])
        )
    trace = None
    if data.get("trace"):
        t = data["trace"]
        trace = TraceResult(
            hop_count=int(t["hop_count"]),
            reached=bool(t["reached"]),
            method=ProbeMethod(t["method"]),
            hops=tuple((int(pos), resp) for pos, resp in t.get("hops", [])),
        )
    error = ProbeError(data["error"]) if data.get("error") else None
    return ProbeOutcome(target=data["target"], ping=ping, trace=trace, error=error)


def _fingerprint_to_dict(fp: Fingerprint) -> dict:
    return {"label": fp.label, "kind": fp.kind.value, "ttl": fp.ttl, "range": fp.range_name}


def _fingerprint_from_dict(data: dict) -> Fingerprint:
    return Fingerprint(
        label=data["label"],
        kind=FingerprintKind(data["kind"]),
        ttl=int(data["ttl"]),
        range_name=data.get("range"),
    )


def verdict_to_dict(verdict: LocalVerdict) -> dict:
    return {
        "kind": verdict.kind.value,
        "reconstructed": {
            "value": verdict.reconstructed.value,
            "ping_ttl": verdict.reconstructed.ping_ttl,
            "hop_count": verdict.reconstructed.hop_count,
            "anomalous": verdict.reconstructed.anomalous,
        },
        "matched": {
            "distance": verdict.matched.distance,
            "tied_across_kinds": verdict.matched.tied_across_kinds,
            "best": [_fingerprint_to_dict(fp) for fp in verdict.matched.best],
        },
    }


def verdict_from_dict(data: dict) -> LocalVerdict:
    recon = data["reconstructed"]
    matched = data["matched"]
    return LocalVerdict(
        kind=VerdictKind(data["kind"]),
        reconstructed=ReconstructedTTL(
            value=int(recon["value"]),
            ping_ttl=int(recon["ping_ttl"]),
            hop_count=int(recon["hop_count"]),
        ),
        matched=MatchResult(
            distance=int(matched["distance"]),
            tied_across_kinds=bool(matched["tied_across_kinds"]),
            best=tuple(_fingerprint_from_dict(fp) for fp in matched["best"]),
        ),
    )


def comparison_to_dict(outcome: ComparisonOutcome) -> dict:
    return {
        "category": outcome.category.value,
        "record": record_to_dict(outcome.record),
        "verdict": verdict_to_dict(outcome.verdict) if outcome.verdict else None,
        "probe_error": outcome.probe_error.value if outcome.probe_error else None,
    }


def comparison_from_dict(data: dict) -> ComparisonOutcome:
    return ComparisonOutcome(
        category=Category(data["category"]),
        record=record_from_dict(data["record"]),
        verdict=verdict_from_dict(data["verdict"]) if data.get("verdict") else None,
        probe_error=ProbeError(data["probe_error"]) if data.get("probe_error") else None,
    )
