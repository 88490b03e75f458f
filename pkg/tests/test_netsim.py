import pytest

from ttlscout.fingerprints import builtin_set
from ttlscout.netsim import (
    SimHost,
    TopologySpec,
    build_topology,
    generate_population,
    host_from_dict,
    host_to_dict,
)
from ttlscout.probe import ProbeMethod, ProbeOptions, probe_target

OPTS = ProbeOptions(inter_probe_delay=0.0)


class TestSimReplies:
    def test_symmetric_arithmetic(self):
        # arithmetic oracle: reply = 60 - (7 - 1); hop count = forward depth
        spec = TopologySpec(hosts=(SimHost("10.0.0.1", 60, 7, 7),))
        outcome = probe_target("10.0.0.1", build_topology(spec), OPTS)
        assert outcome.ping.reply_ttl == 54
        assert outcome.trace.hop_count == 7

    def test_asymmetric_arithmetic(self):
        # 64 - (12 - 1) = 53 on the way back; 10 hops out
        spec = TopologySpec(hosts=(SimHost("10.0.0.1", 64, 10, 12),))
        outcome = probe_target("10.0.0.1", build_topology(spec), OPTS)
        assert outcome.ping.reply_ttl == 53
        assert outcome.trace.hop_count == 10

    def test_drops_both_methods_unreachable(self):
        spec = TopologySpec(
            hosts=(SimHost("10.0.0.1", 64, 3, 3, drops_icmp=True, drops_udp=True),)
        )
        outcome = probe_target("10.0.0.1", build_topology(spec), OPTS)
        assert outcome.error is not None
        assert outcome.ping is None and outcome.trace is None

    def test_reply_dies_when_ttl_budget_exceeded(self):
        # original 30 cannot survive a 40-hop return path
        spec = TopologySpec(hosts=(SimHost("10.0.0.1", 30, 40, 40),))
        transport = build_topology(spec)
        assert transport.ping_probe("10.0.0.1", ProbeMethod.ICMP, 1.0) is None

    def test_pure_replay_identical(self):
        spec = TopologySpec(hosts=(SimHost("10.0.0.1", 128, 6, 8),))
        transport = build_topology(spec)
        first = transport.trace_probe("10.0.0.1", ProbeMethod.ICMP, 3, 1.0)
        second = transport.trace_probe("10.0.0.1", ProbeMethod.ICMP, 3, 1.0)
        assert first == second

    def test_router_addresses_deterministic_and_distinct_from_host(self):
        spec = TopologySpec(hosts=(SimHost("10.0.0.1", 64, 4, 4),))
        transport = build_topology(spec)
        reply = transport.trace_probe("10.0.0.1", ProbeMethod.ICMP, 2, 1.0)
        assert reply.responder != "10.0.0.1"
        assert not reply.from_target


class TestTopologyValidation:
    def test_duplicate_address_rejected(self):
        hosts = (SimHost("10.0.0.1", 64, 1, 1), SimHost("10.0.0.1", 30, 2, 2))
        with pytest.raises(ValueError, match="duplicate"):
            TopologySpec(hosts=hosts)

    def test_zero_depth_rejected(self):
        with pytest.raises(ValueError):
            SimHost("10.0.0.1", 64, 0, 1)

    def test_ttl_bounds(self):
        with pytest.raises(ValueError):
            SimHost("10.0.0.1", 0, 1, 1)
        with pytest.raises(ValueError):
            SimHost("10.0.0.1", 256, 1, 1)


class TestGeneratePopulation:
    def test_seeded_determinism(self):
        kwargs = dict(
            n=200, mix={"device": 0.5, "os": 0.5}, depth_range=(1, 30), asymmetry_range=(0, 0), seed=7
        )
        assert generate_population(**kwargs) == generate_population(**kwargs)

    def test_all_linux_mix(self):
        spec = generate_population(
            n=20, mix={"Linux": 1.0}, depth_range=(1, 10), asymmetry_range=(0, 0), seed=1
        )
        assert all(h.original_ttl == 64 for h in spec.hosts)
        assert all(h.is_honeypot_truth for h in spec.hosts)

    def test_zero_hosts(self):
        spec = generate_population(
            n=0, mix={"os": 1.0}, depth_range=(1, 5), asymmetry_range=(0, 0), seed=3
        )
        assert spec.hosts == ()

    def test_invalid_proportions_rejected(self):
        with pytest.raises(ValueError, match="sum"):
            generate_population(
                n=5, mix={"Linux": 0.4}, depth_range=(1, 5), asymmetry_range=(0, 0), seed=0
            )

    def test_unknown_label_rejected(self):
        with pytest.raises(ValueError, match="no fingerprint"):
            generate_population(
                n=5, mix={"PDP-11": 1.0}, depth_range=(1, 5), asymmetry_range=(0, 0), seed=0
            )

    def test_device_shorthand_spreads_across_kind(self):
        spec = generate_population(
            n=300, mix={"device": 1.0}, depth_range=(1, 20), asymmetry_range=(0, 0), seed=11
        )
        ttls = {h.original_ttl for h in spec.hosts}
        device_ttls = {f.ttl for f in builtin_set() if f.kind.value == "device"}
        assert ttls <= device_ttls
        assert len(ttls) == len(device_ttls)
        assert not any(h.is_honeypot_truth for h in spec.hosts)

    def test_hosts_within_reply_reach(self):
        spec = generate_population(
            n=300,
            mix={"device": 0.6, "os": 0.4},
            depth_range=(1, 60),
            asymmetry_range=(-2, 2),
            seed=5,
        )
        for h in spec.hosts:
            assert h.return_depth <= h.original_ttl
            assert h.return_depth >= 1

    def test_asymmetry_range_honored(self):
        spec = generate_population(
            n=100, mix={"os": 1.0}, depth_range=(4, 25), asymmetry_range=(-2, 2), seed=9
        )
        assert all(-2 <= h.asymmetry <= 2 for h in spec.hosts)
        assert any(h.asymmetry != 0 for h in spec.hosts)

    def test_addresses_unique(self):
        spec = generate_population(
            n=500, mix={"device": 0.5, "os": 0.5}, depth_range=(1, 30), asymmetry_range=(0, 0), seed=2
        )
        assert len({h.address for h in spec.hosts}) == 500


class TestAsymmetryIdentity:
    @pytest.mark.parametrize("asym", range(-3, 4))
    def test_reconstruction_shifts_by_negative_asymmetry(self, asym):
        # reply_ttl + hop_count - 1 lands exactly at original - asymmetry
        fwd = 10
        spec = TopologySpec(hosts=(SimHost("10.0.0.1", 128, fwd, fwd + asym),))
        outcome = probe_target("10.0.0.1", build_topology(spec), OPTS)
        reconstructed = outcome.ping.reply_ttl + outcome.trace.hop_count - 1
        assert reconstructed == 128 - asym


class TestHostSerialization:
    def test_roundtrip(self):
        host = SimHost(
            "10.0.0.1",
            60,
            4,
            6,
            drops_icmp=True,
            model_label="6ES7 322-1BH01-0AA0",
            silent_hops=frozenset({2, 3}),
        )
        assert host_from_dict(host_to_dict(host)) == host
