"""Deterministic in-process virtual network for ground-truth testing.

Each simulated host sits at a forward depth (hops out from the source) and a
return depth (hops back), so path asymmetry is modeled as the only routing
property the TTL reconstruction is sensitive to. Responses are pure
functions of (topology, probe): no hidden state, replay-identical.
"""

from __future__ import annotations

import ipaddress
import random
import threading
from dataclasses import dataclass
from typing import Mapping

from ttlscout.fingerprints import FingerprintKind, FingerprintSet, builtin_set
from ttlscout.probe import PING_PROBE_TTL, ProbeMethod, ProbeReply

# Synthetic TTL-exceeded replies originate from router-ish stacks.
_ROUTER_INITIAL_TTL = 255


@dataclass(frozen=True)
class SimHost:
    """One simulated host.

    ``drops_icmp``/``drops_udp`` suppress the destination's replies per
    method. ``drops_ping``/``drops_trace`` are fault injection for the error
    taxonomy: they model transient loss that kills one measurement while the
    other succeeds, which the drop-by-method flags alone cannot produce.
    """

    address: str
    original_ttl: int
    forward_depth: int
    return_depth: int
    drops_icmp: bool = False
    drops_udp: bool = False
    is_honeypot_truth: bool = False
    model_label: str | None = None
    silent_hops: frozenset[int] = frozenset()
    drops_ping: bool = False
    drops_trace: bool = False

    def __post_init__(self) -> None:
        if not 1 <= self.original_ttl <= 255:
            raise ValueError(f"original_ttl {self.original_ttl} outside [1, 255]")
        if self.forward_depth < 1 or self.return_depth < 1:
            raise ValueError("depths must be >= 1")

    @property
    def asymmetry(self) -> int:
        return self.return_depth - self.forward_depth


@dataclass(frozen=True)
class TopologySpec:
    hosts: tuple[SimHost, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        addresses = [host.address for host in self.hosts]
        if len(set(addresses)) != len(addresses):
            raise ValueError("duplicate host addresses in topology")


def _reply_ttl(host: SimHost) -> int | None:
    # The destination stamps original_ttl; the return path decrements once
    # per router. A value below 1 means the reply dies before reaching us.
    value = host.original_ttl - (host.return_depth - 1)
    return value if value >= 1 else None


def _router_address(host: SimHost, position: int) -> str:
    last = int(ipaddress.IPv4Address(host.address)) & 0xFF
    return f"198.18.{position % 256}.{last}"


class SimTransport:
    """Transport backed by a topology spec; safe for concurrent probes."""

    paced = False

    def __init__(self, spec: TopologySpec):
        self.spec = spec
        self._hosts = {host.address: host for host in spec.hosts}
        self._lock = threading.Lock()
        self.probe_counts: dict[str, int] = {}

    def _count(self, target: str) -> None:
        with self._lock:
            self.probe_counts[target] = self.probe_counts.get(target, 0) + 1

    def _drops_method(self, host: SimHost, method: ProbeMethod) -> bool:
        if method is ProbeMethod.ICMP:
            return host.drops_icmp
        return host.drops_udp

    def _destination_reply(self, host: SimHost) -> ProbeReply | None:
        ttl = _reply_ttl(host)
        if ttl is None:
            return None
        rtt = 0.0001 * (host.forward_depth + host.return_depth)
        return ProbeReply(responder=host.address, ip_ttl=ttl, rtt=rtt, from_target=True)

    def ping_probe(self, target: str, method: ProbeMethod, timeout: float) -> ProbeReply | None:
        self._count(target)
        host = self._hosts.get(target)
        if host is None or host.drops_ping or self._drops_method(host, method):
            return None
        if host.forward_depth > PING_PROBE_TTL:
            return None
        return self._destination_reply(host)

    def trace_probe(
        self, target: str, method: ProbeMethod, ttl: int, timeout: float
    ) -> ProbeReply | None:
        self._count(target)
        host = self._hosts.get(target)
        if host is None:
            return None
        if ttl < host.forward_depth:
            if ttl in host.silent_hops:
                return None
            return ProbeReply(
                responder=_router_address(host, ttl),
                ip_ttl=_ROUTER_INITIAL_TTL - (ttl - 1),
                rtt=0.0002 * ttl,
                from_target=False,
            )
        if host.drops_trace or self._drops_method(host, method):
            return None
        return self._destination_reply(host)


def build_topology(spec: TopologySpec) -> SimTransport:
    """Materialize a topology spec into a Transport."""
    return SimTransport(spec)


def _expand_mix(
    mix: Mapping[str, float], fingerprints: FingerprintSet
) -> list[tuple[str, float]]:
    """Resolve kind shorthands ('device'/'os') and labels to per-label weights."""
    by_label = {fp.label: fp for fp in fingerprints}
    by_kind: dict[FingerprintKind, list[str]] = {kind: [] for kind in FingerprintKind}
    for fp in fingerprints:
        by_kind[fp.kind].append(fp.label)

    weights: dict[str, float] = {}
    for key, proportion in mix.items():
        if proportion < 0:
            raise ValueError(f"negative proportion for {key!r}")
        lowered = key.strip().lower()
        if lowered in ("device", "os"):
            labels = by_kind[FingerprintKind(lowered)]
            for label in labels:
                weights[label] = weights.get(label, 0.0) + proportion / len(labels)
        elif key in by_label:
            weights[key] = weights.get(key, 0.0) + proportion
        else:
            raise ValueError(f"mix key {key!r} matches no fingerprint label or kind")
    total = sum(weights.values())
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"mix proportions sum to {total}, expected 1")
    return sorted(weights.items())


def generate_population(
    n: int,
    mix: Mapping[str, float],
    depth_range: tuple[int, int],
    asymmetry_range: tuple[int, int],
    seed: int,
    fingerprints: FingerprintSet | None = None,
) -> TopologySpec:
    """Generate a seeded host population with TTLs drawn from fingerprint values.

    Mix keys are fingerprint labels or the shorthands 'device'/'os' (spread
    uniformly across that kind). Hosts are always placed within reply reach
    (return_depth <= original_ttl) so every generated host is measurable.
    Deterministic for a fixed seed.
    """
    fps = fingerprints or builtin_set()
    weighted = _expand_mix(mix, fps)
    by_label = {fp.label: fp for fp in fps}

    depth_lo, depth_hi = depth_range
    asym_lo, asym_hi = asymmetry_range
    if depth_lo > depth_hi or depth_lo < 1:
        raise ValueError(f"bad depth range {depth_range}")
    if asym_lo > asym_hi:
        raise ValueError(f"bad asymmetry range {asymmetry_range}")
    if n < 0:
        raise ValueError("n must be >= 0")

    rng = random.Random(seed)
    labels = [label for label, _ in weighted]
    cumulative: list[float] = []
    running = 0.0
    for _, weight in weighted:
        running += weight
        cumulative.append(running)

    hosts: list[SimHost] = []
    base_address = int(ipaddress.IPv4Address("10.0.0.1"))
    for i in range(n):
        pick = rng.random()
        label = labels[-1]
        for j, bound in enumerate(cumulative):
            if pick <= bound:
                label = labels[j]
                break
        fp = by_label[label]

        asym = rng.randint(asym_lo, asym_hi)
        # Constrain the draw so the reply survives the return path and
        # return_depth stays >= 1.
        fwd_lo = max(depth_lo, 1 - asym)
        fwd_hi = min(depth_hi, fp.ttl - asym)
        if fwd_lo > fwd_hi:
            raise ValueError(
                f"no feasible depth for ttl {fp.ttl} with asymmetry {asym} "
                f"in depth range {depth_range}"
            )
        forward = rng.randint(fwd_lo, fwd_hi)
        hosts.append(
            SimHost(
                address=str(ipaddress.IPv4Address(base_address + i)),
                original_ttl=fp.ttl,
                forward_depth=forward,
                return_depth=forward + asym,
                is_honeypot_truth=fp.kind is FingerprintKind.OPERATING_SYSTEM,
                model_label=fp.label,
            )
        )
    return TopologySpec(hosts=tuple(hosts), seed=seed)


def host_to_dict(host: SimHost) -> dict:
    return {
        "address": host.address,
        "original_ttl": host.original_ttl,
        "forward_depth": host.forward_depth,
        "return_depth": host.return_depth,
        "drops_icmp": host.drops_icmp,
        "drops_udp": host.drops_udp,
        "is_honeypot_truth": host.is_honeypot_truth,
        "model_label": host.model_label,
        "silent_hops": sorted(host.silent_hops),
        "drops_ping": host.drops_ping,
        "drops_trace": host.drops_trace,
    }


def host_from_dict(data: dict) -> SimHost:
    return SimHost(
        address=data["address"],
        original_ttl=int(data["original_ttl"]),
        forward_depth=int(data["forward_depth"]),
        return_depth=int(data["return_depth"]),
        drops_icmp=bool(data.get("drops_icmp", False)),
        drops_udp=bool(data.get("drops_udp", False)),
        is_honeypot_truth=bool(data.get("is_honeypot_truth", False)),
        model_label=data.get("model_label"),
        silent_hops=frozenset(int(p) for p in data.get("silent_hops", [])),
        drops_ping=bool(data.get("drops_ping", False)),
        drops_trace=bool(data.get("drops_trace", False)),
    )
