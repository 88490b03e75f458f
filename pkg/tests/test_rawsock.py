import socket
import struct

import pytest

from ttlscout.probe import ProbeMethod
from ttlscout.rawsock import (
    ICMP_DEST_UNREACHABLE,
    ICMP_ECHO_REPLY,
    ICMP_TIME_EXCEEDED,
    RawSocketTransport,
    build_echo_request,
    icmp_checksum,
    parse_icmp,
    parse_ip_header,
)


def ip_packet(src: str, proto: int, ttl: int, payload: bytes, dst: str = "192.0.2.1") -> bytes:
    header = struct.pack(
        "!BBHHHBBH4s4s",
        0x45,
        0,
        20 + len(payload),
        0,
        0,
        ttl,
        proto,
        0,
        socket.inet_aton(src),
        socket.inet_aton(dst),
    )
    return header + payload


def icmp_message(icmp_type: int, code: int, rest_header: bytes, payload: bytes = b"") -> bytes:
    return struct.pack("!BBH", icmp_type, code, 0) + rest_header + payload


class TestChecksum:
    def test_zero_data(self):
        assert icmp_checksum(b"\x00\x00") == 0xFFFF

    def test_packet_with_embedded_checksum_sums_to_zero(self):
        packet = build_echo_request(ident=0x1234, seq=7)
        assert icmp_checksum(packet) == 0

    def test_odd_length_padded(self):
        assert icmp_checksum(b"\x01") == icmp_checksum(b"\x01\x00")


class TestEchoRequest:
    def test_structure(self):
        packet = build_echo_request(ident=0xABCD, seq=42)
        icmp_type, code, checksum, ident, seq = struct.unpack("!BBHHH", packet[:8])
        assert icmp_type == 8
        assert code == 0
        assert ident == 0xABCD
        assert seq == 42
        assert checksum != 0


class TestIpHeaderParsing:
    def test_fields_extracted(self):
        packet = ip_packet("203.0.113.9", socket.IPPROTO_ICMP, 53, b"\x00" * 8)
        ttl, proto, src, header_len = parse_ip_header(packet)
        assert ttl == 53
        assert proto == socket.IPPROTO_ICMP
        assert src == "203.0.113.9"
        assert header_len == 20

    def test_short_packet_rejected(self):
        with pytest.raises(ValueError):
            parse_ip_header(b"\x45\x00")

    def test_non_ipv4_rejected(self):
        with pytest.raises(ValueError):
            parse_ip_header(b"\x65" + b"\x00" * 19)


class TestIcmpParsing:
    def test_type_code_split(self):
        message = icmp_message(11, 0, b"\x00\x00\x00\x00", b"inner")
        icmp_type, code, rest = parse_icmp(message)
        assert icmp_type == 11
        assert code == 0
        assert rest == b"inner"

    def test_short_message_rejected(self):
        with pytest.raises(ValueError):
            parse_icmp(b"\x0b\x00")


def _transport(ident=0x1234):
    transport = RawSocketTransport.__new__(RawSocketTransport)
    transport._ident = ident
    return transport


class TestReplyMatching:
    def test_echo_reply_from_target(self):
        transport = _transport()
        reply_icmp = struct.pack("!BBHHH", ICMP_ECHO_REPLY, 0, 0, 0x1234, 9)
        packet = ip_packet("203.0.113.5", socket.IPPROTO_ICMP, 49, reply_icmp)
        matched = transport._match(
            packet, "203.0.113.5", "203.0.113.5", ProbeMethod.ICMP, seq=9, udp_sport=0, udp_dport=0
        )
        assert matched == ("203.0.113.5", 49, True)

    def test_echo_reply_wrong_seq_ignored(self):
        transport = _transport()
        reply_icmp = struct.pack("!BBHHH", ICMP_ECHO_REPLY, 0, 0, 0x1234, 8)
        packet = ip_packet("203.0.113.5", socket.IPPROTO_ICMP, 49, reply_icmp)
        assert (
            transport._match(
                packet, "203.0.113.5", "203.0.113.5", ProbeMethod.ICMP, 9, 0, 0
            )
            is None
        )

    def test_ttl_exceeded_from_router(self):
        transport = _transport()
        quoted_probe = build_echo_request(ident=0x1234, seq=5)[:8]
        inner = ip_packet("192.0.2.1", socket.IPPROTO_ICMP, 1, quoted_probe, dst="203.0.113.5")
        exceeded = icmp_message(ICMP_TIME_EXCEEDED, 0, b"\x00" * 4, inner)
        packet = ip_packet("198.18.3.1", socket.IPPROTO_ICMP, 62, exceeded)
        matched = transport._match(
            packet, "198.18.3.1", "203.0.113.5", ProbeMethod.ICMP, seq=5, udp_sport=0, udp_dport=0
        )
        assert matched == ("198.18.3.1", 62, False)

    def test_port_unreachable_from_target_is_terminal(self):
        transport = _transport()
        udp_header = struct.pack("!HHHH", 40001, 33434, 8, 0)
        inner = ip_packet("192.0.2.1", socket.IPPROTO_UDP, 1, udp_header, dst="203.0.113.5")
        unreachable = icmp_message(ICMP_DEST_UNREACHABLE, 3, b"\x00" * 4, inner)
        packet = ip_packet("203.0.113.5", socket.IPPROTO_ICMP, 51, unreachable)
        matched = transport._match(
            packet,
            "203.0.113.5",
            "203.0.113.5",
            ProbeMethod.UDP,
            seq=1,
            udp_sport=40001,
            udp_dport=33434,
        )
        assert matched == ("203.0.113.5", 51, True)

    def test_unreachable_with_wrong_ports_ignored(self):
        transport = _transport()
        udp_header = struct.pack("!HHHH", 40002, 33434, 8, 0)
        inner = ip_packet("192.0.2.1", socket.IPPROTO_UDP, 1, udp_header, dst="203.0.113.5")
        unreachable = icmp_message(ICMP_DEST_UNREACHABLE, 3, b"\x00" * 4, inner)
        packet = ip_packet("203.0.113.5", socket.IPPROTO_ICMP, 51, unreachable)
        assert (
            transport._match(
                packet, "203.0.113.5", "203.0.113.5", ProbeMethod.UDP, 1, 40001, 33434
            )
            is None
        )

    def test_foreign_icmp_ignored(self):
        transport = _transport()
        reply_icmp = struct.pack("!BBHHH", ICMP_ECHO_REPLY, 0, 0, 0x9999, 9)
        packet = ip_packet("203.0.113.5", socket.IPPROTO_ICMP, 49, reply_icmp)
        assert (
            transport._match(
                packet, "203.0.113.5", "203.0.113.5", ProbeMethod.ICMP, 9, 0, 0
            )
            is None
        )
