"""TTL reconstruction, local verdicts, and comparison against Shodan tags.

The reconstruction is ``reply_ttl + hop_count - 1``: the destination
occupies hop position hop_count, so under symmetric routing its reply
traverses hop_count - 1 decrementing routers on the way back.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

from ttlscout.fingerprints import FingerprintKind, FingerprintSet, MatchResult, nearest_match
from ttlscout.ingest import DeviceRecord, has_honeypot_tag
from ttlscout.probe import PingResult, ProbeError, ProbeOutcome, TraceResult

# Reconstructed values above the IPv4 maximum indicate severe asymmetry or
# middlebox TTL rewriting; they are matched normally but flagged in reports.
ANOMALOUS_TTL_THRESHOLD = 255


class VerdictKind(enum.Enum):
    DEVICE = "device"
    HONEYPOT = "honeypot"
    INCONCLUSIVE = "inconclusive"


class Category(enum.Enum):
    CONSENSUS_HONEYPOT = "consensus_honeypot"
    CONSENSUS_DEVICE = "consensus_device"
    CONTENTION_LOCAL_DEVICE = "contention_local_device"
    CONTENTION_LOCAL_HONEYPOT = "contention_local_honeypot"
    ERROR = "error"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ReconstructedTTL:
    value: int
    ping_ttl: int
    hop_count: int

    def __post_init__(self) -> None:
        if self.value != self.ping_ttl + self.hop_count - 1:
            raise ValueError("reconstructed value must equal ping_ttl + hop_count - 1")

    @property
    def anomalous(self) -> bool:
        return self.value > ANOMALOUS_TTL_THRESHOLD


@dataclass(frozen=True)
class LocalVerdict:
    kind: VerdictKind
    matched: MatchResult
    reconstructed: ReconstructedTTL


@dataclass(frozen=True)
class ComparisonOutcome:
    category: Category
    record: DeviceRecord
    verdict: LocalVerdict | None
    probe_error: ProbeError | None

    def __post_init__(self) -> None:
        if (self.category is Category.ERROR) != (self.probe_error is not None):
            raise ValueError("category is ERROR iff a probe error is present")


def reconstruct_ttl(ping: PingResult, trace: TraceResult) -> ReconstructedTTL:
    """Reassemble the estimated original TTL from a ping reply and hop count."""
    if not trace.reached:
        raise ValueError("cannot reconstruct from an unreached traceroute")
    return ReconstructedTTL(
        value=ping.reply_ttl + trace.hop_count - 1,
        ping_ttl=ping.reply_ttl,
        hop_count=trace.hop_count,
    )


def classify(recon: ReconstructedTTL, fps: FingerprintSet) -> LocalVerdict:
    """Render the Local verdict from the nearest fingerprint entries.

    A nearest real device marks the host as not a honeypot; a nearest
    operating system flags it as a potential honeypot; a tie spanning both
    kinds stays inconclusive rather than fabricating certainty.
    """
    match = nearest_match(recon.value, fps)
    if match.tied_across_kinds:
        kind = VerdictKind.INCONCLUSIVE
    elif match.best[0].kind is FingerprintKind.DEVICE:
        kind = VerdictKind.DEVICE
    else:
        kind = VerdictKind.HONEYPOT
    return LocalVerdict(kind=kind, matched=match, reconstructed=recon)


def compare(
    record: DeviceRecord,
    outcome: ProbeOutcome,
    verdict: LocalVerdict | None,
    strict: bool = False,
) -> ComparisonOutcome:
    """Place one record into the consensus/contention/error partition.

    In strict mode an inconclusive verdict is treated as honeypot
    (conservative, biased toward flagging); the stored verdict is unchanged.
    """
    if outcome.error is not None:
        return ComparisonOutcome(
            category=Category.ERROR, record=record, verdict=None, probe_error=outcome.error
        )
    if verdict is None:
        raise ValueError("verdict required when the probe succeeded")

    effective = verdict.kind
    if strict and effective is VerdictKind.INCONCLUSIVE:
        effective = VerdictKind.HONEYPOT

    tagged = has_honeypot_tag(record)
    if effective is VerdictKind.INCONCLUSIVE:
        category = Category.INCONCLUSIVE
    elif effective is VerdictKind.HONEYPOT:
        category = Category.CONSENSUS_HONEYPOT if tagged else Category.CONTENTION_LOCAL_HONEYPOT
    else:
        category = Category.CONTENTION_LOCAL_DEVICE if tagged else Category.CONSENSUS_DEVICE
    return ComparisonOutcome(category=category, record=record, verdict=verdict, probe_error=None)


def analyze_records(
    records: Sequence[DeviceRecord],
    outcomes: Sequence[ProbeOutcome],
    fps: FingerprintSet,
    strict: bool = False,
) -> list[ComparisonOutcome]:
    """Join records with their probe outcomes by address and compare each."""
    by_target: dict[str, ProbeOutcome] = {}
    for outcome in outcomes:
        by_target.setdefault(outcome.target, outcome)

    results: list[ComparisonOutcome] = []
    for record in records:
        outcome = by_target.get(record.address)
        if outcome is None:
            raise ValueError(f"no probe outcome for {record.address}")
        verdict = None
        if outcome.error is None:
            assert outcome.ping is not None and outcome.trace is not None
            verdict = classify(reconstruct_ttl(outcome.ping, outcome.trace), fps)
        results.append(compare(record, outcome, verdict, strict=strict))
    return results


def _filtered(
    outcomes: Iterable[ComparisonOutcome], include: set[Category] | None
) -> list[ComparisonOutcome]:
    if include is None:
        return list(outcomes)
    return [outcome for outcome in outcomes if outcome.category in include]


@dataclass(frozen=True)
class PortRow:
    port: int
    count: int
    percentage: float


def port_distribution(
    outcomes: Iterable[ComparisonOutcome], include: set[Category] | None = None
) -> list[PortRow]:
    """Count matched ports over the filtered outcomes, ascending by port."""
    selected = _filtered(outcomes, include)
    counts: dict[int, int] = {}
    for outcome in selected:
        port = outcome.record.matched_port
        counts[port] = counts.get(port, 0) + 1
    total = len(selected)
    return [
        PortRow(port=port, count=count, percentage=round(100.0 * count / total, 2))
        for port, count in sorted(counts.items())
    ]


DEFAULT_PROVIDER_RULES: tuple[tuple[str, str], ...] = (
    ("alibaba", "Alibaba Cloud"),
    ("amazon", "Amazon AWS"),
    ("aws", "Amazon AWS"),
    ("digitalocean", "DigitalOcean"),
    ("google", "Google Cloud"),
    ("microsoft", "Microsoft Azure"),
    ("azure", "Microsoft Azure"),
    ("tencent", "Tencent Cloud"),
    ("linode", "Linode Cloud"),
    ("vultr", "Vultr"),
    ("oracle", "Oracle"),
)

UNKNOWN_PROVIDER = "(unknown)"


def load_provider_rules(stream: IO[str]) -> tuple[tuple[str, str], ...]:
    """Read 'substring,bucket' rules, one per line; # comments allowed."""
    rules: list[tuple[str, str]] = []
    for lineno, line in enumerate(stream, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "," not in stripped:
            raise ValueError(f"rules line {lineno}: expected 'substring,bucket'")
        substring, bucket = stripped.split(",", 1)
        rules.append((substring.strip().lower(), bucket.strip()))
    return tuple(rules)


def bucket_org(org: str, rules: Sequence[tuple[str, str]] = DEFAULT_PROVIDER_RULES) -> str:
    if not org.strip():
        return UNKNOWN_PROVIDER
    lowered = org.lower()
    for substring, bucket in rules:
        if substring in lowered:
            return bucket
    return org


@dataclass(frozen=True)
class ProviderRow:
    provider: str
    count: int
    percentage: float


def provider_distribution(
    outcomes: Iterable[ComparisonOutcome],
    include: set[Category] | None = None,
    rules: Sequence[tuple[str, str]] = DEFAULT_PROVIDER_RULES,
) -> list[ProviderRow]:
    """Group org strings into provider buckets via the substring rule table."""
    selected = _filtered(outcomes, include)
    counts: dict[str, int] = {}
    for outcome in selected:
        bucket = bucket_org(outcome.record.org, rules)
        counts[bucket] = counts.get(bucket, 0) + 1
    total = len(selected)
    return [
        ProviderRow(provider=name, count=count, percentage=round(100.0 * count / total, 2))
        for name, count in sorted(counts.items())
    ]


@dataclass(frozen=True)
class ModelRow:
    vendor: str
    model: str
    mean_ttl: float
    samples: int


def average_ttl_by_model(outcomes: Iterable[ComparisonOutcome]) -> list[ModelRow]:
    """Mean reconstructed TTL per extracted hardware model, vendor/model order."""
    samples: dict[tuple[str, str], list[int]] = {}
    for outcome in outcomes:
        if outcome.verdict is None:
            continue
        value = outcome.verdict.reconstructed.value
        for model in outcome.record.hardware_models:
            samples.setdefault((model.vendor, model.model), []).append(value)
    return [
        ModelRow(
            vendor=vendor,
            model=model,
            mean_ttl=round(sum(values) / len(values), 2),
            samples=len(values),
        )
        for (vendor, model), values in sorted(samples.items())
    ]


def category_counts(outcomes: Iterable[ComparisonOutcome]) -> Mapping[Category, int]:
    counts = {category: 0 for category in Category}
    for outcome in outcomes:
        counts[outcome.category] += 1
    return counts
