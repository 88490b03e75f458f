"""Operator-facing command line: fetch, parse, dedup, probe, analyze, report, sim.

Every stage reads and writes declared file formats, so stages re-run
independently and a credit-limited or multi-day collection can resume from
its intermediate files. Exit codes: 0 success, 2 usage, 3 missing input,
4 transport fault, 5 authentication/quota, 1 other data errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from ttlscout import __version__, analysis, datafiles, netsim, reporting
from ttlscout.fingerprints import FingerprintError, FingerprintSet, builtin_set, load_fingerprints
from ttlscout.ingest import (
    IngestError,
    default_queries,
    deduplicate,
    parse_export,
)
from ttlscout.probe import ProbeMethod, ProbeOptions, TransportError, probe_batch
from ttlscout.shodan_api import AuthenticationError, QuotaExceededError, ShodanClient, ShodanError

log = logging.getLogger(__name__)

API_KEY_ENV = "SHODAN_API_KEY"

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2
EXIT_MISSING_INPUT = 3
EXIT_TRANSPORT = 4
EXIT_AUTH_QUOTA = 5


class MissingInputError(Exception):
    pass


class DataError(Exception):
    pass


def _require_file(path: str | Path) -> Path:
    resolved = Path(path)
    if not resolved.is_file():
        raise MissingInputError(f"{resolved} does not exist")
    return resolved


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat key=value text; # comments and blank lines ignored."""
    config: dict[str, str] = {}
    for lineno, line in enumerate(_require_file(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise DataError(f"config line {lineno}: expected key=value")
        key, value = stripped.split("=", 1)
        config[key.strip()] = value.strip()
    return config


def _resolve(explicit, config: dict, key: str, default, cast=str):
    if explicit is not None:
        return explicit
    if key in config:
        raw = config[key]
        if cast is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        return cast(raw)
    return default


def _load_fingerprints(path: str | None) -> FingerprintSet:
    if path is None:
        return builtin_set()
    with open(_require_file(path), "rb") as fh:
        return load_fingerprints(fh, provenance=str(path))


def _read_records(path: str | Path):
    _, rows = datafiles.read_ndjson(_require_file(path))
    try:
        return [datafiles.record_from_dict(row) for row in rows]
    except (KeyError, IngestError, ValueError) as exc:
        raise DataError(f"bad record in {path}: {exc}") from exc


# --- subcommands ----------------------------------------------------------

def cmd_fetch(args, config) -> int:
    api_key = args.api_key or os.environ.get(API_KEY_ENV) or config.get("api_key", "")
    queries = args.query if args.query else default_queries()
    cache_dir = _resolve(args.cache_dir, config, "cache_dir", "shodan-cache")
    client = ShodanClient(api_key=api_key, cache_dir=cache_dir)
    records = []
    for query in queries:
        records.extend(client.fetch_query(query, page_limit=args.page_limit))
    header = datafiles.make_header(
        "device-records",
        {"queries": queries, "page_limit": args.page_limit},
        extra={"fetch_stats": vars(client.stats)},
    )
    datafiles.write_ndjson(args.out, header, (datafiles.record_to_dict(r) for r in records))
    print(f"fetched {len(records)} records across {len(queries)} queries -> {args.out}")
    return EXIT_OK


def cmd_parse(args, config) -> int:
    source = _require_file(args.input)
    with open(source, "rb") as fh:
        records, stats = parse_export(fh, origin_query=args.origin_query)
    header = datafiles.make_header(
        "device-records",
        {"source_digest": datafiles.file_digest(source), "origin_query": args.origin_query},
        extra={"parse_stats": vars(stats)},
    )
    datafiles.write_ndjson(args.out, header, (datafiles.record_to_dict(r) for r in records))
    print(
        f"parsed {stats.parsed} records "
        f"({stats.skipped_corrupt} corrupt, {stats.skipped_ipv6} ipv6 skipped) -> {args.out}"
    )
    return EXIT_OK


def cmd_dedup(args, config) -> int:
    records = _read_records(args.input)
    unique, stats = deduplicate(records)
    header = datafiles.make_header(
        "device-records",
        {"source_digest": datafiles.content_digest(args.input)},
        extra={
            "dedup_stats": {
                "total_in": stats.total_in,
                "total_out": stats.total_out,
                "removed": stats.removed,
                "per_query_before": dict(sorted(stats.per_query_before.items())),
                "per_query_after": dict(sorted(stats.per_query_after.items())),
            }
        },
    )
    datafiles.write_ndjson(args.out, header, (datafiles.record_to_dict(r) for r in unique))
    print(f"deduplicated {stats.total_in} -> {stats.total_out} (removed {stats.removed})")
    return EXIT_OK


def _probe_options(args, config) -> ProbeOptions:
    methods_text = _resolve(args.methods, config, "methods", "icmp,udp")
    try:
        methods = tuple(ProbeMethod(m.strip().lower()) for m in methods_text.split(",") if m.strip())
    except ValueError as exc:
        raise DataError(f"bad method list {methods_text!r}: {exc}") from exc
    return ProbeOptions(
        max_hops=_resolve(args.max_hops, config, "max_hops", 64, int),
        per_probe_timeout=_resolve(args.timeout, config, "timeout", 2.0, float),
        retries_per_method=_resolve(args.retries, config, "retries", 1, int),
        methods=methods,
        inter_probe_delay=_resolve(args.inter_probe_delay, config, "inter_probe_delay", 0.1, float),
        concurrency_limit=_resolve(args.concurrency, config, "concurrency", 16, int),
    )


def _load_topology(path: str | Path) -> netsim.TopologySpec:
    header, rows = datafiles.read_ndjson(_require_file(path))
    seed = int(header.get("seed", 0)) if header else 0
    try:
        hosts = tuple(netsim.host_from_dict(row) for row in rows)
    except (KeyError, ValueError) as exc:
        raise DataError(f"bad topology row in {path}: {exc}") from exc
    return netsim.TopologySpec(hosts=hosts, seed=seed)


def cmd_probe(args, config) -> int:
    records = _read_records(args.input)
    opts = _probe_options(args, config)
    if args.transport == "sim":
        if not args.topology:
            raise DataError("--transport sim requires --topology")
        transport = netsim.build_topology(_load_topology(args.topology))
        topology_digest = datafiles.content_digest(args.topology)
    else:
        from ttlscout.rawsock import RawSocketTransport

        transport = RawSocketTransport()
        topology_digest = None

    targets = [record.address for record in records]
    total = len(targets)
    step = max(1, total // 10)

    def progress(done: int, _total: int) -> None:
        if done % step == 0 or done == _total:
            print(f"probed {done}/{_total}", file=sys.stderr)

    outcomes = probe_batch(targets, transport, opts, progress=progress)
    header = datafiles.make_header(
        "probe-outcomes",
        {
            "transport": args.transport,
            "topology_digest": topology_digest,
            "records_digest": datafiles.content_digest(args.input),
            "max_hops": opts.max_hops,
            "methods": [m.value for m in opts.methods],
            "retries_per_method": opts.retries_per_method,
        },
    )
    datafiles.write_ndjson(args.out, header, (datafiles.outcome_to_dict(o) for o in outcomes))
    failures = sum(1 for o in outcomes if o.error is not None)
    print(f"probed {total} targets ({failures} with errors) -> {args.out}")
    return EXIT_OK


def cmd_analyze(args, config) -> int:
    records = _read_records(args.records)
    _, probe_rows = datafiles.read_ndjson(_require_file(args.probes))
    try:
        outcomes = [datafiles.outcome_from_dict(row) for row in probe_rows]
    except (KeyError, ValueError) as exc:
        raise DataError(f"bad probe outcome in {args.probes}: {exc}") from exc

    fps = _load_fingerprints(args.fingerprints)
    rules = analysis.DEFAULT_PROVIDER_RULES
    rules_digest = None
    if args.rules:
        with open(_require_file(args.rules), "r", encoding="utf-8") as fh:
            rules = analysis.load_provider_rules(fh)
        rules_digest = datafiles.file_digest(args.rules)

    strict = bool(_resolve(args.strict, config, "strict", False, bool))
    try:
        results = analysis.analyze_records(records, outcomes, fps, strict=strict)
    except ValueError as exc:
        raise DataError(str(exc)) from exc

    fingerprints_digest = (
        datafiles.file_digest(args.fingerprints) if args.fingerprints else "builtin"
    )
    header = datafiles.make_header(
        "comparison-results",
        {
            "strict_mode": strict,
            "fingerprints": fps.provenance,
            "fingerprints_digest": fingerprints_digest,
            "records_digest": datafiles.content_digest(args.records),
            "probes_digest": datafiles.content_digest(args.probes),
            "rules_digest": rules_digest,
        },
        extra={
            "strict_mode": strict,
            "category_counts": {
                cat.value: count for cat, count in analysis.category_counts(results).items()
            },
        },
    )
    datafiles.write_ndjson(args.out, header, (datafiles.comparison_to_dict(r) for r in results))

    if args.tables_dir:
        tables_dir = Path(args.tables_dir)
        tables_dir.mkdir(parents=True, exist_ok=True)
        consensus = {analysis.Category.CONSENSUS_HONEYPOT, analysis.Category.CONSENSUS_DEVICE}
        ports = analysis.port_distribution(results, include=consensus)
        datafiles.write_csv(
            tables_dir / "port_distribution.csv",
            ("port", "count", "percentage"),
            ((row.port, row.count, f"{row.percentage:.2f}") for row in ports),
        )
        providers = analysis.provider_distribution(results, include=consensus, rules=rules)
        datafiles.write_csv(
            tables_dir / "provider_distribution.csv",
            ("provider", "count", "percentage"),
            ((row.provider, row.count, f"{row.percentage:.2f}") for row in providers),
        )
        models = analysis.average_ttl_by_model(results)
        datafiles.write_csv(
            tables_dir / "model_ttl_averages.csv",
            ("vendor", "model", "mean_reconstructed_ttl", "samples"),
            ((row.vendor, row.model, f"{row.mean_ttl:.2f}", row.samples) for row in models),
        )

    counts = analysis.category_counts(results)
    summary = ", ".join(f"{cat.value}={count}" for cat, count in counts.items() if count)
    print(f"analyzed {len(results)} records: {summary or 'empty'} -> {args.out}")
    return EXIT_OK


def cmd_report(args, config) -> int:
    _, rows = datafiles.read_ndjson(_require_file(args.results))
    try:
        results = [datafiles.comparison_from_dict(row) for row in rows]
    except (KeyError, ValueError) as exc:
        raise DataError(f"bad result row in {args.results}: {exc}") from exc

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    anonymize = _resolve(args.anonymize, config, "anonymize", True, bool)

    if anonymize:
        dataset = reporting.anonymize_outcomes(results, salt=args.salt)
    else:
        dataset = [datafiles.comparison_to_dict(r) for r in results]
    header = datafiles.make_header(
        "report-dataset",
        {
            "results_digest": datafiles.content_digest(args.results),
            "anonymized": bool(anonymize),
            "salted": args.salt is not None,
        },
        extra={"anonymized": bool(anonymize), "salted": args.salt is not None},
    )
    datafiles.write_ndjson(out_dir / "dataset.ndjson", header, dataset)

    series = reporting.sorted_ttl_series(results)
    datafiles.write_csv(out_dir / "ttl_series.csv", reporting.TTL_SERIES_HEADER, series)

    summary_header, summary_rows = reporting.category_summary_rows(results)
    datafiles.write_csv(out_dir / "category_summary.csv", summary_header, summary_rows)

    print(f"report written to {out_dir} ({len(dataset)} rows, anonymize={anonymize})")
    return EXIT_OK


def _parse_mix(text: str) -> dict[str, float]:
    mix: dict[str, float] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise DataError(f"bad mix component {part!r}: expected label=proportion")
        label, value = part.rsplit("=", 1)
        try:
            mix[label.strip()] = float(value)
        except ValueError:
            raise DataError(f"bad mix proportion {value!r}") from None
    if not mix:
        raise DataError("empty mix")
    return mix


def cmd_sim_generate(args, config) -> int:
    fps = _load_fingerprints(args.fingerprints)
    mix = _parse_mix(args.mix)
    try:
        spec = netsim.generate_population(
            n=args.count,
            mix=mix,
            depth_range=(args.depth_min, args.depth_max),
            asymmetry_range=(args.asym_min, args.asym_max),
            seed=args.seed,
            fingerprints=fps,
        )
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    header = datafiles.make_header(
        "sim-topology",
        {
            "count": args.count,
            "mix": dict(sorted(mix.items())),
            "depth_range": [args.depth_min, args.depth_max],
            "asymmetry_range": [args.asym_min, args.asym_max],
            "seed": args.seed,
        },
        extra={"seed": args.seed},
    )
    datafiles.write_ndjson(args.out, header, (netsim.host_to_dict(h) for h in spec.hosts))

    if args.emit_records:
        from ttlscout.ingest import DeviceRecord

        records = [
            DeviceRecord(
                address=host.address,
                matched_port=102,
                origin_query="sim",
                raw_banner=f"sim host model={host.model_label or 'unknown'}",
            )
            for host in spec.hosts
        ]
        record_header = datafiles.make_header(
            "device-records", {"topology_digest": datafiles.content_digest(args.out)}
        )
        datafiles.write_ndjson(
            args.emit_records, record_header, (datafiles.record_to_dict(r) for r in records)
        )
    print(f"generated {len(spec.hosts)} hosts (seed {args.seed}) -> {args.out}")
    return EXIT_OK


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttlscout",
        description="Identify ICS honeypots from reconstructed IP TTL values.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fetch = sub.add_parser("fetch", help="harvest records from the Shodan API")
    p_fetch.add_argument("--query", action="append", help="search string (repeatable)")
    p_fetch.add_argument("--api-key", help=f"API key (overrides ${API_KEY_ENV})")
    p_fetch.add_argument("--cache-dir", help="response cache directory")
    p_fetch.add_argument("--page-limit", type=int, default=None)
    p_fetch.add_argument("--out", required=True, help="output record file")
    p_fetch.set_defaults(func=cmd_fetch)

    p_parse = sub.add_parser("parse", help="parse a Shodan export file (ndjson, .gz ok)")
    p_parse.add_argument("--input", required=True)
    p_parse.add_argument("--origin-query", default="export")
    p_parse.add_argument("--out", required=True)
    p_parse.set_defaults(func=cmd_parse)

    p_dedup = sub.add_parser("dedup", help="remove duplicate addresses, merging evidence")
    p_dedup.add_argument("--input", required=True)
    p_dedup.add_argument("--out", required=True)
    p_dedup.set_defaults(func=cmd_dedup)

    p_probe = sub.add_parser("probe", help="ping + traceroute every record")
    p_probe.add_argument("--input", required=True, help="record file")
    p_probe.add_argument("--out", required=True, help="probe outcome file")
    p_probe.add_argument("--transport", choices=("real", "sim"), default="real")
    p_probe.add_argument("--topology", help="topology file for --transport sim")
    p_probe.add_argument("--max-hops", type=int, default=None)
    p_probe.add_argument("--timeout", type=float, default=None, help="per-probe timeout seconds")
    p_probe.add_argument("--retries", type=int, default=None, help="attempts per method")
    p_probe.add_argument("--methods", default=None, help="comma list, e.g. icmp,udp")
    p_probe.add_argument("--inter-probe-delay", type=float, default=None)
    p_probe.add_argument("--concurrency", type=int, default=None)
    p_probe.set_defaults(func=cmd_probe)

    p_analyze = sub.add_parser("analyze", help="reconstruct TTLs, classify, compare with tags")
    p_analyze.add_argument("--records", required=True)
    p_analyze.add_argument("--probes", required=True)
    p_analyze.add_argument("--out", required=True, help="results file")
    p_analyze.add_argument("--fingerprints", help="fingerprint file (default: builtin table)")
    p_analyze.add_argument("--rules", help="provider bucketing rules file")
    p_analyze.add_argument(
        "--strict",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="map inconclusive verdicts to honeypot",
    )
    p_analyze.add_argument("--tables-dir", help="also emit summary CSV tables here")
    p_analyze.set_defaults(func=cmd_analyze)

    p_report = sub.add_parser("report", help="emit anonymized dataset and plot series")
    p_report.add_argument("--results", required=True)
    p_report.add_argument("--out-dir", required=True)
    p_report.add_argument(
        "--anonymize", action=argparse.BooleanOptionalAction, default=None
    )
    p_report.add_argument("--salt", default=None, help="optional hash salt (never written)")
    p_report.set_defaults(func=cmd_report)

    p_sim = sub.add_parser("sim", help="simulator utilities")
    sim_sub = p_sim.add_subparsers(dest="sim_command", required=True)
    p_gen = sim_sub.add_parser("generate", help="generate a seeded host population")
    p_gen.add_argument("--count", type=int, required=True)
    p_gen.add_argument(
        "--mix",
        required=True,
        help="comma list of label=proportion; 'device'/'os' spread across the kind",
    )
    p_gen.add_argument("--depth-min", type=int, default=1)
    p_gen.add_argument("--depth-max", type=int, default=30)
    p_gen.add_argument("--asym-min", type=int, default=0)
    p_gen.add_argument("--asym-max", type=int, default=0)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--fingerprints")
    p_gen.add_argument("--out", required=True, help="topology file")
    p_gen.add_argument("--emit-records", help="also write an untagged record file")
    p_gen.set_defaults(func=cmd_sim_generate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = parse_config_file(args.config) if args.config else {}
        return args.func(args, config)
    except MissingInputError as exc:
        print(f"error: missing-input: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except TransportError as exc:
        print(f"error: transport: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except AuthenticationError as exc:
        print(f"error: auth: {exc}", file=sys.stderr)
        return EXIT_AUTH_QUOTA
    except QuotaExceededError as exc:
        print(f"error: quota: {exc}", file=sys.stderr)
        return EXIT_AUTH_QUOTA
    except ShodanError as exc:
        print(f"error: fetch: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, IngestError, FingerprintError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
