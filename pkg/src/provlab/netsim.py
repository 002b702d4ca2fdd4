"""In-process simulated network.

Virtual Wi-Fi networks gate membership on an (ssid, passphrase) pair.
Broadcast datagrams reach every co-member, subject to a seeded
loss/duplication model; streams are lossless ordered byte pipes.  Every
frame lands in a global capture log so scenarios can assert on what was
actually observable on the wire.

Delivery is synchronous: a registered handler runs inside the sender's
call, which keeps whole scenarios deterministic without an event loop.
Per-sender ordering is guaranteed under concurrent use; a reentrant
lock serializes broker state, and capture snapshots always observe a
consistent prefix.
"""

from __future__ import annotations

import json
import random
import threading
from collections import deque
from dataclasses import dataclass, field

MAX_DATAGRAM = 2048
WAN_LABEL = "wan"


class NetSimError(Exception):
    pass


class DuplicateSsid(NetSimError):
    pass


class InvalidLength(NetSimError):
    pass


class UnknownSsid(NetSimError):
    pass


class WrongPassphrase(NetSimError):
    pass


class NotJoined(NetSimError):
    pass


class PeerUnreachable(NetSimError):
    pass


class UnknownEndpoint(NetSimError):
    pass


@dataclass
class SimClock:
    """Injected simulated time; scenarios advance it, nothing sleeps."""

    now: int = 1_600_000_000

    def advance(self, seconds: int) -> int:
        self.now += seconds
        return self.now

    def time(self) -> int:
        return self.now


@dataclass(frozen=True)
class EndpointId:
    id: str
    role: str  # device | app | cloud | proxy

    def __str__(self) -> str:
        return self.id


@dataclass
class LossModel:
    """Seeded broadcast unreliability.

    Draw order is part of the contract so tests can replay it: for each
    broadcast frame, for each receiving member in join order, one
    uniform draw decides drop; if delivered, a second draw decides
    duplication.  No draw is consumed for a dropped frame's duplicate.
    """

    drop_prob: float = 0.0
    dup_prob: float = 0.0
    seed: int = 0


@dataclass
class VirtualNetwork:
    ssid: str
    passphrase: str
    members: list[EndpointId] = field(default_factory=list)


@dataclass
class Datagram:
    src: EndpointId
    dst_port: int
    payload: bytes
    ssid: str


@dataclass
class CaptureEntry:
    t: int
    ssid: str
    src: str
    port: int
    len: int
    kind: str  # bcast | deliver | drop | stream
    dst: str | None = None

    def to_json(self) -> dict:
        rec = {
            "t": self.t,
            "ssid": self.ssid,
            "src": self.src,
            "port": self.port,
            "len": self.len,
            "kind": self.kind,
        }
        if self.dst is not None:
            rec["dst"] = self.dst
        return rec


class CaptureLog:
    """Append-only wire log.

    Every sent frame appears exactly once (kind ``bcast`` or ``stream``);
    broadcast fan-out additionally appears per receiver as ``deliver``
    or ``drop``, so a dropped frame is visibly sent-but-not-delivered.
    """

    def __init__(self, lock: threading.RLock | None = None):
        self._entries: list[CaptureEntry] = []
        self._lock = lock or threading.RLock()

    def append(self, entry: CaptureEntry) -> None:
        with self._lock:
            self._entries.append(entry)

    def snapshot(self) -> list[CaptureEntry]:
        with self._lock:
            return list(self._entries)

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(e.to_json(), sort_keys=True) + "\n" for e in self.snapshot()
        )

    @staticmethod
    def parse_jsonl(text: str) -> list[CaptureEntry]:
        entries = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            entries.append(
                CaptureEntry(
                    t=rec["t"],
                    ssid=rec["ssid"],
                    src=rec["src"],
                    port=rec["port"],
                    len=rec["len"],
                    kind=rec["kind"],
                    dst=rec.get("dst"),
                )
            )
        return entries


class StreamEnd:
    """One side of a reliable ordered byte pipe."""

    def __init__(self, sim: "Simulation", stream: "_Stream", side: int):
        self._sim = sim
        self._stream = stream
        self._side = side
        self._buf = bytearray()
        self.on_data = None  # callable() fired after bytes are appended

    @property
    def local(self) -> EndpointId:
        return self._stream.ends[self._side]

    @property
    def peer(self) -> EndpointId:
        return self._stream.ends[1 - self._side]

    @property
    def port(self) -> int:
        return self._stream.port

    def send(self, data: bytes) -> None:
        self._sim._stream_send(self._stream, self._side, data)

    def recv(self, limit: int | None = None) -> bytes:
        with self._sim._lock:
            if limit is None or limit >= len(self._buf):
                out = bytes(self._buf)
                self._buf.clear()
            else:
                out = bytes(self._buf[:limit])
                del self._buf[:limit]
        return out

    def pending(self) -> int:
        with self._sim._lock:
            return len(self._buf)


class _Stream:
    def __init__(self, a: EndpointId, b: EndpointId, port: int, label: str):
        self.ends = (a, b)
        self.port = port
        self.label = label  # shared ssid, or "wan" for uplink streams


class _EndpointRec:
    def __init__(self, endpoint: EndpointId, wan: bool):
        self.endpoint = endpoint
        self.wan = wan
        self.online = True
        self.networks: set[str] = set()
        self.inbox: deque[Datagram] = deque()
        self.datagram_handlers: dict[int, object] = {}
        self.stream_handlers: dict[int, object] = {}


class Simulation:
    """Broker for virtual networks, broadcasts, streams and the capture."""

    def __init__(self, loss: LossModel | None = None, clock: SimClock | None = None):
        self._lock = threading.RLock()
        self.clock = clock or SimClock()
        self.loss = loss or LossModel()
        self._rng = random.Random(self.loss.seed)
        self._networks: dict[str, VirtualNetwork] = {}
        self._endpoints: dict[str, _EndpointRec] = {}
        self.capture = CaptureLog(self._lock)

    # -- endpoints ---------------------------------------------------------

    def register(self, endpoint_id: str, role: str, wan: bool = False) -> EndpointId:
        with self._lock:
            if endpoint_id in self._endpoints:
                raise NetSimError(f"endpoint id {endpoint_id!r} already registered")
            ep = EndpointId(endpoint_id, role)
            self._endpoints[endpoint_id] = _EndpointRec(ep, wan)
            return ep

    def set_online(self, endpoint: EndpointId, online: bool) -> None:
        self._rec(endpoint).online = online

    def is_online(self, endpoint: EndpointId) -> bool:
        return self._rec(endpoint).online

    def _rec(self, endpoint: EndpointId) -> _EndpointRec:
        rec = self._endpoints.get(endpoint.id)
        if rec is None:
            raise UnknownEndpoint(f"unregistered endpoint {endpoint.id!r}")
        return rec

    # -- networks ----------------------------------------------------------

    def create_network(self, ssid: str, passphrase: str) -> VirtualNetwork:
        if not 1 <= len(ssid.encode("utf-8")) <= 32:
            raise InvalidLength("ssid must be 1-32 bytes")
        if not 8 <= len(passphrase.encode("utf-8")) <= 64:
            raise InvalidLength("passphrase must be 8-64 bytes")
        with self._lock:
            if ssid in self._networks:
                raise DuplicateSsid(f"ssid {ssid!r} already exists")
            net = VirtualNetwork(ssid=ssid, passphrase=passphrase)
            self._networks[ssid] = net
            return net

    def join(self, endpoint: EndpointId, ssid: str, passphrase: str) -> VirtualNetwork:
        with self._lock:
            rec = self._rec(endpoint)
            net = self._networks.get(ssid)
            if net is None:
                raise UnknownSsid(f"no network {ssid!r}")
            if passphrase != net.passphrase:
                raise WrongPassphrase(f"bad passphrase for {ssid!r}")
            if endpoint not in net.members:
                net.members.append(endpoint)
            rec.networks.add(ssid)
            return net

    def leave(self, endpoint: EndpointId, ssid: str) -> None:
        with self._lock:
            rec = self._rec(endpoint)
            net = self._networks.get(ssid)
            if net is None:
                raise UnknownSsid(f"no network {ssid!r}")
            if endpoint in net.members:
                net.members.remove(endpoint)
            rec.networks.discard(ssid)

    def leave_all(self, endpoint: EndpointId) -> None:
        rec = self._rec(endpoint)
        for ssid in list(rec.networks):
            self.leave(endpoint, ssid)

    def networks_of(self, endpoint: EndpointId) -> set[str]:
        return set(self._rec(endpoint).networks)

    def network(self, ssid: str) -> VirtualNetwork:
        net = self._networks.get(ssid)
        if net is None:
            raise UnknownSsid(f"no network {ssid!r}")
        return net

    # -- broadcast ---------------------------------------------------------

    def set_datagram_handler(self, endpoint: EndpointId, port: int, handler) -> None:
        self._rec(endpoint).datagram_handlers[port] = handler

    def broadcast(
        self,
        endpoint: EndpointId,
        dst_port: int,
        payload: bytes,
        ssid: str | None = None,
    ) -> None:
        if not 1 <= len(payload) <= MAX_DATAGRAM:
            raise InvalidLength(f"payload must be 1-{MAX_DATAGRAM} bytes")
        if not 1 <= dst_port <= 65535:
            raise InvalidLength("port must be 1-65535")
        with self._lock:
            rec = self._rec(endpoint)
            if ssid is None:
                if len(rec.networks) != 1:
                    raise NotJoined(
                        "endpoint must be joined to exactly one network or name the ssid"
                    )
                ssid = next(iter(rec.networks))
            if ssid not in rec.networks:
                raise NotJoined(f"{endpoint.id} is not a member of {ssid!r}")
            net = self._networks[ssid]
            now = self.clock.now
            self.capture.append(
                CaptureEntry(now, ssid, endpoint.id, dst_port, len(payload), "bcast")
            )
            deliveries: list[tuple[_EndpointRec, Datagram]] = []
            for member in net.members:
                if member == endpoint:
                    continue
                if self._rng.random() < self.loss.drop_prob:
                    self.capture.append(
                        CaptureEntry(
                            now, ssid, endpoint.id, dst_port, len(payload),
                            "drop", dst=member.id,
                        )
                    )
                    continue
                copies = 1
                if self._rng.random() < self.loss.dup_prob:
                    copies = 2
                dgram = Datagram(endpoint, dst_port, payload, ssid)
                for _ in range(copies):
                    self.capture.append(
                        CaptureEntry(
                            now, ssid, endpoint.id, dst_port, len(payload),
                            "deliver", dst=member.id,
                        )
                    )
                    deliveries.append((self._endpoints[member.id], dgram))
            # handlers run inside the lock: delivery is synchronous and the
            # lock is reentrant, so handlers may send in turn
            for mrec, dgram in deliveries:
                handler = mrec.datagram_handlers.get(dst_port)
                if handler is not None:
                    handler(dgram)
                else:
                    mrec.inbox.append(dgram)

    def poll_datagrams(self, endpoint: EndpointId) -> list[Datagram]:
        with self._lock:
            rec = self._rec(endpoint)
            out = list(rec.inbox)
            rec.inbox.clear()
            return out

    # -- streams -----------------------------------------------------------

    def set_stream_handler(self, endpoint: EndpointId, port: int, handler) -> None:
        """handler(stream_end, src_endpoint) is invoked on incoming opens."""
        self._rec(endpoint).stream_handlers[port] = handler

    def open_stream(
        self, endpoint: EndpointId, peer: EndpointId, port: int
    ) -> StreamEnd:
        with self._lock:
            src = self._rec(endpoint)
            dst = self._rec(peer)
            if not src.online or not dst.online:
                raise PeerUnreachable(f"{peer.id} is offline")
            shared = src.networks & dst.networks
            if not (dst.wan or src.wan or shared):
                raise PeerUnreachable(
                    f"{endpoint.id} and {peer.id} share no network and no uplink"
                )
            label = sorted(shared)[0] if shared else WAN_LABEL
            stream = _Stream(endpoint, peer, port, label)
            a_end = StreamEnd(self, stream, 0)
            b_end = StreamEnd(self, stream, 1)
            stream.end_objs = (a_end, b_end)
            handler = dst.stream_handlers.get(port)
            if handler is None:
                raise PeerUnreachable(f"{peer.id} is not listening on port {port}")
            handler(b_end, endpoint)
            return a_end

    def _stream_send(self, stream: _Stream, side: int, data: bytes) -> None:
        if not data:
            return
        with self._lock:
            src = stream.ends[side]
            dst = stream.ends[1 - side]
            if not self._rec(src).online or not self._rec(dst).online:
                raise PeerUnreachable(f"{dst.id} is offline")
            self.capture.append(
                CaptureEntry(
                    self.clock.now, stream.label, src.id, stream.port,
                    len(data), "stream", dst=dst.id,
                )
            )
            far = stream.end_objs[1 - side]
            far._buf.extend(data)
            if far.on_data is not None:
                far.on_data()
