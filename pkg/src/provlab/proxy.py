"""Edge proxy gateway and per-device network isolation.

Plays three roles at once: a mobile app toward the vendor cloud (signed
envelopes with keys recovered from the app assets), a cloud toward the
devices it fronts (they bind to it and take its commands), and a device
toward the real cloud (one upstream channel per fronted device).  The
isolation manager hands every device its own decoy network so a
compromised neighbor or a leaked cloud record never exposes the real
home credentials.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import dpl, protocol
from .cloud import CloudUnreachable, DeviceOffline, VendorCloud
from .netsim import (
    DuplicateSsid,
    EndpointId,
    PeerUnreachable,
    Simulation,
    StreamEnd,
    VirtualNetwork,
)
from .protocol import DeviceFrame, FrameReader, MalformedFrame, encode_frame
from .provisioner import (
    AppConfig,
    CloudRejected,
    EnvelopeFactory,
    ProvisionOutcome,
    T_PROV_SECONDS,
    POLL_INTERVAL,
    resolve_cloud_endpoint,
)
from .signing import (
    SigningKeySet,
    derive_signing_key,
    open_postdata,
    sign_envelope,
    verify_envelope,
)
from .stego import BmpImage, stego_extract

FAKE_SSID_PREFIX = "vdev-"
FAKE_PSK_CHARS = 16
REDACTED_NUMBER = 0.0
REDACTED_TEXT = "redacted"


class ProxyError(Exception):
    pass


class AlreadyAssigned(ProxyError):
    pass


class PolicyDenied(ProxyError):
    pass


class UpstreamRejected(ProxyError):
    pass


@dataclass
class ProxyPolicy:
    """What the proxy lets through and what it scrubs."""

    allowed_actions: set[str] = field(
        default_factory=lambda: set(protocol.REGISTERED_ACTIONS)
    )
    redact_fields: set[str] = field(default_factory=set)
    local_control: bool = True

    @classmethod
    def from_json(cls, text: str) -> "ProxyPolicy":
        raw = json.loads(text)
        return cls(
            allowed_actions=set(raw.get("allowed_actions", [])),
            redact_fields=set(raw.get("redact_fields", [])),
            local_control=bool(raw.get("local_control", False)),
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "allowed_actions": sorted(self.allowed_actions),
                "redact_fields": sorted(self.redact_fields),
                "local_control": self.local_control,
            },
            sort_keys=True,
            indent=2,
        )


def keys_from_bmp(image: BmpImage, seed: str, cert_hash: str, secret1: str) -> SigningKeySet:
    """Recover secret2 from the app's BMP asset and assemble the key set."""
    record, _report = stego_extract(image, seed)
    return SigningKeySet(
        cert_hash=cert_hash, secret1=secret1, secret2=record.keys[0].decode("utf-8")
    )


class ProxyGateway:
    def __init__(
        self,
        sim: Simulation,
        config: AppConfig,
        directory: dict[str, VendorCloud],
        policy: ProxyPolicy | None = None,
        rng=None,
        home_ssid: str | None = None,
        endpoint_id: str = "proxy-gw",
        dns_available: bool = True,
        dns_answers: dict[str, list[str]] | None = None,
        nonce_source=None,
    ):
        self.sim = sim
        self.clock = sim.clock
        self.config = config
        self.directory = directory
        self.policy = policy or ProxyPolicy()
        self.rng = rng
        self.home_ssid = home_ssid
        self.dns_available = dns_available
        self.dns_answers = dns_answers or {}
        self.endpoint = sim.register(endpoint_id, "proxy")
        sim.set_stream_handler(self.endpoint, protocol.DEVICE_PORT, self._accept_device)
        sim.set_stream_handler(self.endpoint, protocol.DEVICE_PORT_ALT, self._accept_device)
        self.envelopes = EnvelopeFactory(config, rng, nonce_source=nonce_source)
        self.assignments: dict[str, VirtualNetwork] = {}
        self._device_streams: dict[str, StreamEnd] = {}
        self._upstreams: dict[str, StreamEnd] = {}
        self._local_pending: dict[str, DeviceFrame] = {}
        self._local_seq = 0

    # -- isolation manager ------------------------------------------------------

    def allocate_virtual_network(self, device_id: str) -> VirtualNetwork:
        """Fresh decoy network for one device; the proxy joins it so it can
        broadcast provisioning traffic and reach the device afterwards."""
        if device_id in self.assignments:
            raise AlreadyAssigned(device_id)
        alphabet = "abcdefghijklmnopqrstuvwxyz0123456789"
        while True:
            ssid = FAKE_SSID_PREFIX + "".join(
                self.rng.choice("0123456789abcdef") for _ in range(4)
            )
            if ssid == self.home_ssid:
                continue
            passphrase = "".join(self.rng.choice(alphabet) for _ in range(FAKE_PSK_CHARS))
            try:
                net = self.sim.create_network(ssid, passphrase)
                break
            except DuplicateSsid:
                continue
        self.sim.join(self.endpoint, ssid, passphrase)
        self.assignments[device_id] = net
        return net

    def export_isolation_plan(self) -> str:
        return json.dumps(
            {
                did: {"ssid": net.ssid, "passphrase": net.passphrase}
                for did, net in self.assignments.items()
            },
            sort_keys=True,
            indent=2,
        )

    # -- app-role: token and status traffic to the real cloud ---------------------

    def _cloud(self) -> VendorCloud:
        _addr, cloud = resolve_cloud_endpoint(
            self.config.region, self.dns_available, self.dns_answers, self.directory
        )
        return cloud

    def _call(self, action: str, post_obj: dict) -> dict:
        cloud = self._cloud()
        envelope = self.envelopes.build(action, post_obj, self.clock.now)
        response = json.loads(cloud.post("/api.json", json.dumps(envelope)))
        key = derive_signing_key(self.config.keys)
        if not response.get("success"):
            raise CloudRejected(response.get("result", {}).get("error", "Unknown"))
        if not response.get("sign") or not verify_envelope(response, key):
            raise CloudRejected("response signature does not verify")
        return json.loads(open_postdata(response["result"], key))

    def acquire_token(self) -> str:
        result = self._call(
            protocol.ACTION_TOKEN_GET,
            {"region": self.config.region, "userId": self.config.user_id},
        )
        return result["token"]

    # -- isolated provisioning ----------------------------------------------------

    def provision_isolated(
        self,
        device_id: str,
        token: str | None = None,
        rounds: int = dpl.DEFAULT_ROUNDS,
        idle_hook=None,
    ) -> ProvisionOutcome:
        """Provision one device onto its decoy network with decoy credentials;
        the device registers with the cloud knowing nothing about the home."""
        net = self.assignments.get(device_id)
        if net is None:
            net = self.allocate_virtual_network(device_id)
        if token is None:
            try:
                token = self.acquire_token()
            except (CloudRejected, CloudUnreachable) as exc:
                return ProvisionOutcome(False, error=str(exc))
        creds = dpl.Credentials(ssid=net.ssid, passphrase=net.passphrase, token=token)
        for length in dpl.encode(creds, rounds).flatten():
            self.sim.broadcast(
                self.endpoint,
                dpl.PROVISION_PORT,
                bytes([dpl.FILLER_BYTE]) * length,
                ssid=net.ssid,
            )
        if idle_hook is not None:
            idle_hook()
        deadline = self.clock.now + T_PROV_SECONDS
        while True:
            try:
                status = self._call(protocol.ACTION_DEVICE_STATUS, {"token": token})
            except (CloudRejected, CloudUnreachable) as exc:
                return ProvisionOutcome(False, error=str(exc))
            if status.get("online"):
                return ProvisionOutcome(True, device_id=status.get("device_id"))
            if status.get("reject_reason"):
                return ProvisionOutcome(
                    False, error=f"BindRejected:{status['reject_reason']}"
                )
            if self.clock.now >= deadline:
                return ProvisionOutcome(False, error="Timeout")
            self.clock.advance(POLL_INTERVAL)

    # -- app-side relay with policy -------------------------------------------------

    def relay_app_envelope(self, envelope: dict) -> dict:
        """Terminate an app request, scrub it per policy, re-sign, forward."""
        action = envelope.get("a")
        if action not in self.policy.allowed_actions:
            raise PolicyDenied(f"action {action!r} not allowed")
        forwarded = {k: v for k, v in envelope.items() if k != protocol.SIGN_FIELD}
        for name in self.policy.redact_fields:
            if name in forwarded:
                forwarded[name] = (
                    REDACTED_NUMBER
                    if isinstance(forwarded[name], (int, float))
                    and not isinstance(forwarded[name], bool)
                    else REDACTED_TEXT
                )
        key = derive_signing_key(self.config.keys)
        forwarded["sign"] = sign_envelope(forwarded, key)
        try:
            cloud = self._cloud()
            return json.loads(cloud.post("/api.json", json.dumps(forwarded)))
        except CloudUnreachable as exc:
            raise UpstreamRejected(str(exc)) from exc

    # -- cloud-role toward devices / device-role toward cloud -------------------------

    def _accept_device(self, stream: StreamEnd, src: EndpointId) -> None:
        reader = FrameReader()

        def on_data():
            try:
                frames = reader.push(stream.recv())
            except MalformedFrame:
                return
            for frame in frames:
                self._on_device_frame(stream, frame)

        stream.on_data = on_data

    def _on_device_frame(self, stream: StreamEnd, frame: DeviceFrame) -> None:
        if frame.kind == "bind":
            self._device_streams[frame.device_id] = stream
            upstream = self._open_upstream(frame.device_id)
            if upstream is None:
                stream.send(
                    encode_frame(
                        DeviceFrame(
                            kind="ack",
                            device_id=frame.device_id,
                            request_id=frame.request_id,
                            payload={"success": False, "reason": "UpstreamUnreachable"},
                        )
                    )
                )
                return
            upstream.send(encode_frame(frame))
        elif frame.kind == "ack" and frame.request_id in self._local_pending:
            self._local_pending[frame.request_id] = frame
        else:
            upstream = self._upstreams.get(frame.device_id)
            if upstream is not None:
                upstream.send(encode_frame(frame))

    def _open_upstream(self, device_id: str) -> StreamEnd | None:
        existing = self._upstreams.get(device_id)
        if existing is not None:
            return existing
        try:
            cloud = self._cloud()
        except (CloudUnreachable, CloudRejected):
            return None
        try:
            upstream = self.sim.open_stream(
                self.endpoint, cloud.endpoint, protocol.DEVICE_PORT
            )
        except PeerUnreachable:
            return None
        reader = FrameReader()

        def on_data():
            try:
                frames = reader.push(upstream.recv())
            except MalformedFrame:
                return
            for frame in frames:
                self._on_upstream_frame(device_id, frame)

        upstream.on_data = on_data
        self._upstreams[device_id] = upstream
        return upstream

    def _on_upstream_frame(self, device_id: str, frame: DeviceFrame) -> None:
        down = self._device_streams.get(device_id)
        if down is not None:
            down.send(encode_frame(frame))

    # -- offline local control --------------------------------------------------------

    def local_control(self, device_id: str, command: dict) -> dict:
        """Command the device directly over the proxy's device-side channel;
        works with the vendor cloud completely dark."""
        if not self.policy.local_control:
            raise PolicyDenied("local_control is disabled by policy")
        stream = self._device_streams.get(device_id)
        if stream is None:
            raise DeviceOffline(device_id)
        self._local_seq += 1
        request_id = f"local-{self._local_seq:06d}"
        self._local_pending[request_id] = None
        frame = DeviceFrame(
            kind="command",
            device_id=device_id,
            payload={"command": command},
            request_id=request_id,
        )
        try:
            stream.send(encode_frame(frame))
        except PeerUnreachable as exc:
            self._local_pending.pop(request_id, None)
            raise DeviceOffline(device_id) from exc
        ack = self._local_pending.pop(request_id, None)
        if ack is None:
            raise DeviceOffline(device_id)
        return ack.payload.get("status", {})
