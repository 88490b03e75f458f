"""Minimal-footprint ping and traceroute measurements over a pluggable transport.

Ping yields the TTL carried by the target's reply as it arrives back at the
source; traceroute counts the hops out to the target. Both try ICMP before
UDP by default and never fabricate values: a missing measurement becomes an
explicit error variant on the outcome.
"""

from __future__ import annotations

import enum
import time
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

# Outgoing TTL for ping probes; large enough to reach any routable host.
PING_PROBE_TTL = 255


class ProbeMethod(enum.Enum):
    ICMP = "icmp"
    UDP = "udp"


class ProbeError(enum.Enum):
    PING_FAILED = "ping_failed"
    TRACE_FAILED = "trace_failed"
    BOTH_FAILED = "both_failed"


class TransportError(RuntimeError):
    """Transport-level fault (socket, permission): misconfiguration, not an
    unreachable target. Aborts the run instead of becoming an outcome."""

    def __init__(self, message: str, partial: "list[ProbeOutcome | None] | None" = None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class ProbeReply:
    """One reply observed at the source."""

    responder: str
    ip_ttl: int
    rtt: float
    from_target: bool


class Transport(Protocol):
    """Anything that can carry ping and traceroute probes.

    ``paced`` tells the engine whether inter-probe delays matter (real
    networks) or are pointless (in-process simulation). Implementations must
    be safe for concurrent use by up to the configured worker count.
    """

    paced: bool

    def ping_probe(
        self, target: str, method: ProbeMethod, timeout: float
    ) -> ProbeReply | None: ...

    def trace_probe(
        self, target: str, method: ProbeMethod, ttl: int, timeout: float
    ) -> ProbeReply | None: ...


@dataclass(frozen=True)
class ProbeOptions:
    max_hops: int = 64
    per_probe_timeout: float = 2.0
    retries_per_method: int = 1
    methods: tuple[ProbeMethod, ...] = (ProbeMethod.ICMP, ProbeMethod.UDP)
    inter_probe_delay: float = 0.1
    concurrency_limit: int = 16

    def __post_init__(self) -> None:
        if not 1 <= self.max_hops <= 255:
            raise ValueError(f"max_hops {self.max_hops} outside [1, 255]")
        if self.concurrency_limit < 1:
            raise ValueError("concurrency_limit must be >= 1")
        if self.retries_per_method < 1:
            raise ValueError("retries_per_method must be >= 1")
        if not self.methods:
            raise ValueError("at least one probe method required")


@dataclass(frozen=True)
class PingResult:
    reply_ttl: int
    rtt: float
    method: ProbeMethod

    def __post_init__(self) -> None:
        if not 1 <= self.reply_ttl <= 255:
            raise ValueError(f"reply_ttl {self.reply_ttl} outside [1, 255]")


@dataclass(frozen=True)
class TraceResult:
    """A traceroute walk. ``hop_count`` is the position of the hop that
    answered as the destination when ``reached``; otherwise the highest
    position probed."""

    hop_count: int
    reached: bool
    method: ProbeMethod
    hops: tuple[tuple[int, str | None], ...]

    def __post_init__(self) -> None:
        if self.hop_count < 1:
            raise ValueError("hop_count must be >= 1")


@dataclass(frozen=True)
class ProbeOutcome:
    target: str
    ping: PingResult | None
    trace: TraceResult | None
    error: ProbeError | None

    def __post_init__(self) -> None:
        expected: ProbeError | None
        if self.ping is None and self.trace is None:
            expected = ProbeError.BOTH_FAILED
        elif self.ping is None:
            expected = ProbeError.PING_FAILED
        elif self.trace is None:
            expected = ProbeError.TRACE_FAILED
        else:
            expected = None
        if self.error is not expected:
            raise ValueError(
                f"error {self.error} inconsistent with measurements (expected {expected})"
            )

    @property
    def usable(self) -> bool:
        return self.error is None


def ping(target: str, transport: Transport, opts: ProbeOptions) -> PingResult | None:
    """Ping with method fallback; None when every method/retry goes unanswered."""
    for method in opts.methods:
        for _ in range(opts.retries_per_method):
            reply = transport.ping_probe(target, method, opts.per_probe_timeout)
            if reply is not None and reply.from_target and 1 <= reply.ip_ttl <= 255:
                return PingResult(reply_ttl=reply.ip_ttl, rtt=reply.rtt, method=method)
    return None


def traceroute(target: str, transport: Transport, opts: ProbeOptions) -> TraceResult:
    """Walk outgoing TTL 1..max_hops until the target itself answers.

    Silent hops are recorded but do not abort the walk. Each hop tries the
    configured methods in order, so a destination dropping one protocol can
    still be reached by the other.
    """
    hops: list[tuple[int, str | None]] = []
    method_used = opts.methods[0]
    for position in range(1, opts.max_hops + 1):
        reply: ProbeReply | None = None
        for method in opts.methods:
            for _ in range(opts.retries_per_method):
                reply = transport.trace_probe(target, method, position, opts.per_probe_timeout)
                if reply is not None:
                    break
            if reply is not None:
                method_used = method
                break
        hops.append((position, reply.responder if reply else None))
        if reply is not None and reply.from_target:
            return TraceResult(
                hop_count=position, reached=True, method=method_used, hops=tuple(hops)
            )
    return TraceResult(
        hop_count=len(hops), reached=False, method=method_used, hops=tuple(hops)
    )


def probe_target(target: str, transport: Transport, opts: ProbeOptions) -> ProbeOutcome:
    """Ping then traceroute, serialized per target.

    Target-side failures are encoded in the outcome; only transport faults
    raise. An unreached walk is discarded: without the hop count the original
    TTL cannot be reassembled downstream.
    """
    ping_result = ping(target, transport, opts)
    if transport.paced and opts.inter_probe_delay > 0:
        time.sleep(opts.inter_probe_delay)
    walk = traceroute(target, transport, opts)
    trace_result = walk if walk.reached else None

    error: ProbeError | None
    if ping_result is None and trace_result is None:
        error = ProbeError.BOTH_FAILED
    elif ping_result is None:
        error = ProbeError.PING_FAILED
    elif trace_result is None:
        error = ProbeError.TRACE_FAILED
    else:
        error = None
    return ProbeOutcome(target=target, ping=ping_result, trace=trace_result, error=error)


def probe_batch(
    targets: Sequence[str],
    transport: Transport,
    opts: ProbeOptions,
    progress: Callable[[int, int], None] | None = None,
) -> list[ProbeOutcome]:
    """Probe up to concurrency_limit targets at once.

    Output order matches input order regardless of completion order. A
    transport fault cancels outstanding work and re-raises carrying the
    partial results gathered so far.
    """
    total = len(targets)
    results: list[ProbeOutcome | None] = [None] * total
    if total == 0:
        return []

    done = 0
    workers = min(opts.concurrency_limit, total)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {
            pool.submit(probe_target, target, transport, opts): index
            for index, target in enumerate(targets)
        }
        pending = set(futures)
        while pending:
            finished, pending = wait(pending, return_when=FIRST_EXCEPTION)
            for future in finished:
                index = futures[future]
                exc = future.exception()
                if exc is not None:
                    for remaining in pending:
                        remaining.cancel()
                    if isinstance(exc, TransportError):
                        raise TransportError(str(exc), partial=results) from exc
                    raise exc
                results[index] = future.result()
                done += 1
                if progress is not None:
                    progress(done, total)
    return [outcome for outcome in results if outcome is not None]
