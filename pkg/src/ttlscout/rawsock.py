"""Real-network transport: ICMP echo and UDP high-port probes via raw sockets.

Reads the TTL straight from received IP headers, which is why the engine
never shells out to OS ping/traceroute. Requires CAP_NET_RAW or root for
the receiving socket; without it the constructor raises a transport fault
so the CLI can exit with guidance instead of probing blind.

UDP probes follow the classic traceroute convention: destination port
33434 + hop index, eliciting TTL-exceeded from routers and port-unreachable
from the target itself.
"""

from __future__ import annotations

import os
import select
import socket
import struct
import threading
import time

from ttlscout.probe import PING_PROBE_TTL, ProbeMethod, ProbeReply, TransportError

UDP_BASE_PORT = 33434

ICMP_ECHO_REQUEST = 8
ICMP_ECHO_REPLY = 0
ICMP_TIME_EXCEEDED = 11
ICMP_DEST_UNREACHABLE = 3
ICMP_PORT_UNREACHABLE_CODE = 3

_PAYLOAD = b"ttlscout"


def icmp_checksum(data: bytes) -> int:
    """RFC 1071 internet checksum."""
    if len(data) % 2:
        data += b"\x00"
    total = 0
    for i in range(0, len(data), 2):
        total += (data[i] << 8) + data[i + 1]
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def build_echo_request(ident: int, seq: int, payload: bytes = _PAYLOAD) -> bytes:
    header = struct.pack("!BBHHH", ICMP_ECHO_REQUEST, 0, 0, ident & 0xFFFF, seq & 0xFFFF)
    checksum = icmp_checksum(header + payload)
    header = struct.pack(
        "!BBHHH", ICMP_ECHO_REQUEST, 0, checksum, ident & 0xFFFF, seq & 0xFFFF
    )
    return header + payload


def parse_ip_header(packet: bytes) -> tuple[int, int, str, int]:
    """Return (ttl, protocol, source address, header length) of an IPv4 packet."""
    if len(packet) < 20:
        raise ValueError("short IP packet")
    version_ihl = packet[0]
    if version_ihl >> 4 != 4:
        raise ValueError("not IPv4")
    header_len = (version_ihl & 0x0F) * 4
    ttl = packet[8]
    protocol = packet[9]
    source = socket.inet_ntoa(packet[12:16])
    return ttl, protocol, source, header_len


def parse_icmp(payload: bytes) -> tuple[int, int, bytes]:
    """Return (type, code, rest) of an ICMP message."""
    if len(payload) < 8:
        raise ValueError("short ICMP message")
    icmp_type, code = payload[0], payload[1]
    return icmp_type, code, payload[8:]


def _echo_ident_seq(payload: bytes) -> tuple[int, int]:
    ident, seq = struct.unpack("!HH", payload[4:8])
    return ident, seq


class RawSocketTransport:
    """Transport over the live network. One socket pair per probe exchange,
    so concurrent workers never consume each other's replies."""

    paced = True

    def __init__(self):
        self._ident = os.getpid() & 0xFFFF
        self._seq_lock = threading.Lock()
        self._seq = 0
        # Probe privileges early: a permission failure is a configuration
        # fault, not a target failure.
        try:
            probe = socket.socket(socket.AF_INET, socket.SOCK_RAW, socket.IPPROTO_ICMP)
            probe.close()
        except PermissionError as exc:
            raise TransportError(
                "raw ICMP socket denied: run with CAP_NET_RAW or as root"
            ) from exc
        except OSError as exc:
            raise TransportError(f"cannot open raw ICMP socket: {exc}") from exc

    def _next_seq(self) -> int:
        with self._seq_lock:
            self._seq = (self._seq + 1) & 0xFFFF
            return self._seq

    def _open_raw(self) -> socket.socket:
        try:
            return socket.socket(socket.AF_INET, socket.SOCK_RAW, socket.IPPROTO_ICMP)
        except OSError as exc:
            raise TransportError(f"cannot open raw ICMP socket: {exc}") from exc

    def ping_probe(self, target: str, method: ProbeMethod, timeout: float) -> ProbeReply | None:
        return self._exchange(target, method, PING_PROBE_TTL, timeout, trace_position=None)

    def trace_probe(
        self, target: str, method: ProbeMethod, ttl: int, timeout: float
    ) -> ProbeReply | None:
        return self._exchange(target, method, ttl, timeout, trace_position=ttl)

    def _exchange(
        self,
        target: str,
        method: ProbeMethod,
        ttl: int,
        timeout: float,
        trace_position: int | None,
    ) -> ProbeReply | None:
        seq = self._next_seq()
        recv_sock = self._open_raw()
        send_sock: socket.socket | None = None
        udp_sport = 0
        udp_dport = 0
        try:
            if method is ProbeMethod.ICMP:
                packet = build_echo_request(self._ident, seq)
                try:
                    recv_sock.setsockopt(socket.IPPROTO_IP, socket.IP_TTL, ttl)
                    recv_sock.sendto(packet, (target, 0))
                except OSError as exc:
                    raise TransportError(f"ICMP send failed: {exc}") from exc
            else:
                udp_dport = UDP_BASE_PORT + ((trace_position - 1) if trace_position else 0)
                try:
                    send_sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
                    send_sock.setsockopt(socket.IPPROTO_IP, socket.IP_TTL, ttl)
                    send_sock.bind(("", 0))
                    udp_sport = send_sock.getsockname()[1]
                    send_sock.sendto(_PAYLOAD, (target, udp_dport))
                except OSError as exc:
                    raise TransportError(f"UDP send failed: {exc}") from exc
            sent_at = time.perf_counter()
            return self._await_reply(
                recv_sock, target, method, seq, udp_sport, udp_dport, sent_at, timeout
            )
        finally:
            recv_sock.close()
            if send_sock is not None:
                send_sock.close()

    def _await_reply(
        self,
        recv_sock: socket.socket,
        target: str,
        method: ProbeMethod,
        seq: int,
        udp_sport: int,
        udp_dport: int,
        sent_at: float,
        timeout: float,
    ) -> ProbeReply | None:
        deadline = sent_at + timeout
        while True:
            remaining = deadline - time.perf_counter()
            if remaining <= 0:
                return None
            readable, _, _ = select.select([recv_sock], [], [], remaining)
            if not readable:
                return None
            packet, (source, _) = recv_sock.recvfrom(4096)
            reply = self._match(packet, source, target, method, seq, udp_sport, udp_dport)
            if reply is not None:
                rtt = time.perf_counter() - sent_at
                return ProbeReply(
                    responder=reply[0], ip_ttl=reply[1], rtt=rtt, from_target=reply[2]
                )

    def _match(
        self,
        packet: bytes,
        source: str,
        target: str,
        method: ProbeMethod,
        seq: int,
        udp_sport: int,
        udp_dport: int,
    ) -> tuple[str, int, bool] | None:
        try:
            ttl, protocol, ip_source, header_len = parse_ip_header(packet)
            if protocol != socket.IPPROTO_ICMP:
                return None
            icmp_type, code, rest = parse_icmp(packet[header_len:])
        except ValueError:
            return None

        if icmp_type == ICMP_ECHO_REPLY and method is ProbeMethod.ICMP:
            ident, reply_seq = struct.unpack("!HH", packet[header_len + 4 : header_len + 8])
            if ident == self._ident and reply_seq == seq and ip_source == target:
                return (ip_source, ttl, True)
            return None

        if icmp_type not in (ICMP_TIME_EXCEEDED, ICMP_DEST_UNREACHABLE):
            return None
        # The error quotes the original IP header + 8 bytes of our probe.
        try:
            _, inner_proto, _, inner_len = parse_ip_header(rest)
        except ValueError:
            return None
        quoted = rest[inner_len : inner_len + 8]
        if len(quoted) < 8:
            return None
        if method is ProbeMethod.ICMP:
            if inner_proto != socket.IPPROTO_ICMP:
                return None
            ident, quoted_seq = _echo_ident_seq(quoted)
            if ident != self._ident or quoted_seq != seq:
                return None
        else:
            if inner_proto != socket.IPPROTO_UDP:
                return None
            sport, dport = struct.unpack("!HH", quoted[:4])
            if sport != udp_sport or dport != udp_dport:
                return None

        from_target = (
            ip_source == target
            and icmp_type == ICMP_DEST_UNREACHABLE
            and code == ICMP_PORT_UNREACHABLE_CODE
        )
        if icmp_type == ICMP_TIME_EXCEEDED:
            return (ip_source, ttl, False)
        if from_target:
            return (ip_source, ttl, True)
        return None
