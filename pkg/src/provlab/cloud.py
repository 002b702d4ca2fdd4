"""Vendor-cloud emulator.

One signed-envelope endpoint for app requests (token issuance, device
status, control relay), one stream endpoint for device binds and
command delivery, and a JSON-snapshottable registry.  Nothing in the
registry mutates unless the request signature verified first.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field, asdict

from . import protocol
from .netsim import Simulation, EndpointId, StreamEnd
from .protocol import (
    DeviceFrame,
    FrameReader,
    MalformedFrame,
    RejectReason,
    TokenStore,
    TokenRecord,
    ProvisionToken,
    encode_frame,
    issue_token,
)
from .signing import (
    SigningKeySet,
    derive_signing_key,
    open_postdata,
    seal_postdata,
    sign_envelope,
    verify_envelope,
    AuthFailure,
    BadEncoding,
    MissingSign,
)

API_PATH = "/api.json"


class CloudError(Exception):
    pass


class CloudUnreachable(CloudError):
    pass


class DeviceOffline(CloudError):
    pass


class UnknownDevice(CloudError):
    pass


class CorruptSnapshot(CloudError):
    pass


@dataclass
class DeviceRecord:
    device_id: str
    user_id: str
    bundle_id: str
    ssid: str
    passphrase: str
    token_value: str
    status: dict = field(default_factory=dict)


@dataclass
class CloudRegistry:
    tokens: TokenStore = field(default_factory=TokenStore)
    devices: dict[str, DeviceRecord] = field(default_factory=dict)
    vendors: dict[str, SigningKeySet] = field(default_factory=dict)

    def to_json(self) -> str:
        snap = {
            "tokens": {
                value: {
                    "token": asdict(rec.token),
                    "bound_device": rec.bound_device,
                    "last_reject": rec.last_reject,
                }
                for value, rec in self.tokens.records.items()
            },
            "devices": {did: asdict(rec) for did, rec in self.devices.items()},
            "vendors": {bid: asdict(ks) for bid, ks in self.vendors.items()},
        }
        return json.dumps(snap, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CloudRegistry":
        try:
            snap = json.loads(text)
            registry = cls()
            for value, rec in snap["tokens"].items():
                registry.tokens.records[value] = TokenRecord(
                    token=ProvisionToken(**rec["token"]),
                    bound_device=rec["bound_device"],
                    last_reject=rec["last_reject"],
                )
            for did, rec in snap["devices"].items():
                registry.devices[did] = DeviceRecord(**rec)
            for bid, ks in snap["vendors"].items():
                registry.vendors[bid] = SigningKeySet(**ks)
            return registry
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise CorruptSnapshot(f"snapshot does not parse: {exc}") from exc

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def persist(registry: CloudRegistry, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(registry.to_json())


def restore(path) -> CloudRegistry:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return CloudRegistry.from_json(fh.read())
    except OSError as exc:
        raise CorruptSnapshot(f"cannot read snapshot: {exc}") from exc


class VendorCloud:
    """The cloud side of the provisioning protocol.

    App requests arrive as HTTP-style POSTs to ``/api.json`` (modeled as
    a direct call); device traffic arrives on netsim streams to port
    6668 (or its 1883 alias) as length-prefixed frames.
    """

    def __init__(
        self,
        sim: Simulation,
        rng,
        endpoint_id: str = "cloud",
        nonce_source=None,
    ):
        self.sim = sim
        self.clock = sim.clock
        self.rng = rng
        self.nonce_source = nonce_source
        self.endpoint = sim.register(endpoint_id, "cloud", wan=True)
        sim.set_stream_handler(self.endpoint, protocol.DEVICE_PORT, self._accept_stream)
        sim.set_stream_handler(self.endpoint, protocol.DEVICE_PORT_ALT, self._accept_stream)
        self.registry = CloudRegistry()
        self.online = True
        self._lock = threading.RLock()
        self._device_streams: dict[str, StreamEnd] = {}
        self._pending_acks: dict[str, DeviceFrame] = {}
        self._relay_seq = 0
        self.requests_total = 0
        self.verify_failures = 0
        self.last_envelope: dict | None = None

    # -- setup -------------------------------------------------------------

    def register_vendor(self, bundle_id: str, keys: SigningKeySet) -> None:
        self.registry.vendors[bundle_id] = keys

    def set_online(self, online: bool) -> None:
        self.online = online
        self.sim.set_online(self.endpoint, online)

    # -- app endpoint --------------------------------------------------------

    def post(self, path: str, body: str) -> str:
        """The app-facing wire surface: JSON envelope in, JSON response out."""
        if not self.online:
            raise CloudUnreachable("cloud endpoint is down")
        if path != API_PATH:
            return json.dumps(self._failure(None, "NotFound"))
        try:
            envelope = json.loads(body)
        except json.JSONDecodeError:
            return json.dumps(self._failure(None, "BadRequest"))
        return json.dumps(self.handle_app_request(envelope))

    def handle_app_request(self, envelope: dict) -> dict:
        self.requests_total += 1
        bundle = envelope.get("bundleId")
        keys = self.registry.vendors.get(bundle)
        if keys is None:
            self.verify_failures += 1
            return self._failure(None, "UnknownBundle")
        key = derive_signing_key(keys)
        try:
            if not verify_envelope(envelope, key):
                self.verify_failures += 1
                return self._failure(key, "BadSignature")
        except MissingSign:
            self.verify_failures += 1
            return self._failure(key, "BadSignature")
        action = envelope.get("a")
        if action not in protocol.REGISTERED_ACTIONS:
            return self._failure(key, "UnknownAction")
        try:
            post_obj = json.loads(open_postdata(envelope.get("postData", ""), key))
        except (AuthFailure, BadEncoding, json.JSONDecodeError, UnicodeDecodeError):
            return self._failure(key, "BadPostData")
        self.last_envelope = dict(envelope)
        if action == protocol.ACTION_TOKEN_GET:
            return self._do_token_get(envelope, post_obj, key)
        if action == protocol.ACTION_DEVICE_STATUS:
            return self._do_status(post_obj, key)
        if action == protocol.ACTION_DEVICE_CONTROL:
            return self._do_control(post_obj, key)
        if action == protocol.ACTION_DEVICE_BIND:
            return self._do_envelope_bind(envelope, post_obj, key)
        return self._failure(key, "UnknownAction")

    def _respond(self, key: bytes, result_obj: dict) -> dict:
        sealed = seal_postdata(
            json.dumps(result_obj, sort_keys=True).encode("utf-8"),
            key,
            nonce_source=self.nonce_source,
        )
        response = {"success": True, "t": self.clock.now, "result": sealed}
        response["sign"] = sign_envelope(response, key)
        return response

    def _failure(self, key: bytes | None, reason: str) -> dict:
        response = {
            "success": False,
            "t": self.clock.now,
            "result": {"error": reason},
        }
        response["sign"] = sign_envelope(response, key) if key else ""
        return response

    def _do_token_get(self, envelope: dict, post_obj: dict, key: bytes) -> dict:
        region = post_obj.get("region", "")
        user_id = post_obj.get("userId", "")
        token = issue_token(
            self.rng, self.clock.now, region, envelope["bundleId"], user_id
        )
        self.registry.tokens.add(token)
        return self._respond(
            key,
            {
                "token": token.value,
                "region": region,
                "expires_in": protocol.TTL_SECONDS,
            },
        )

    def _do_status(self, post_obj: dict, key: bytes) -> dict:
        device_id = post_obj.get("device_id")
        token_value = post_obj.get("token")
        if device_id is None and token_value is not None:
            rec = self.registry.tokens.get(token_value)
            if rec is not None:
                device_id = rec.bound_device
                if device_id is None:
                    return self._respond(
                        key,
                        {"online": False, "device_id": None,
                         "reject_reason": rec.last_reject},
                    )
            else:
                return self._respond(
                    key, {"online": False, "device_id": None, "reject_reason": None}
                )
        dev = self.registry.devices.get(device_id) if device_id else None
        if dev is None:
            return self._respond(
                key, {"online": False, "device_id": device_id, "reject_reason": None}
            )
        online = device_id in self._device_streams
        return self._respond(
            key,
            {
                "online": online,
                "device_id": device_id,
                "status": dict(dev.status),
                "reject_reason": None,
            },
        )

    def _do_control(self, post_obj: dict, key: bytes) -> dict:
        device_id = post_obj.get("device_id", "")
        command = post_obj.get("command", {})
        if device_id not in self.registry.devices:
            return self._failure(key, "DeviceOffline")
        try:
            ack_payload = self.relay_command(device_id, command)
        except DeviceOffline:
            return self._failure(key, "DeviceOffline")
        if not ack_payload.get("success", False):
            return self._failure(key, ack_payload.get("reason", "CommandRejected"))
        return self._respond(
            key, {"device_id": device_id, "status": ack_payload.get("status", {})}
        )

    def _do_envelope_bind(self, envelope: dict, post_obj: dict, key: bytes) -> dict:
        frame = DeviceFrame(
            kind="bind",
            device_id=post_obj.get("device_id", ""),
            token=post_obj.get("token"),
            payload={
                "ssid": post_obj.get("ssid", ""),
                "passphrase": post_obj.get("passphrase", ""),
                "bundle_id": envelope["bundleId"],
                "user_id": post_obj.get("userId"),
            },
        )
        ack = self.handle_bind(frame)
        if ack.payload.get("success"):
            return self._respond(key, {"device_id": frame.device_id, "bound": True})
        return self._failure(key, ack.payload.get("reason", "BindRejected"))

    # -- device channel ------------------------------------------------------

    def _accept_stream(self, stream: StreamEnd, src: EndpointId) -> None:
        reader = FrameReader()

        def on_data():
            data = stream.recv()
            try:
                frames = reader.push(data)
            except MalformedFrame:
                return
            for frame in frames:
                self._on_device_frame(stream, frame)

        stream.on_data = on_data

    def _on_device_frame(self, stream: StreamEnd, frame: DeviceFrame) -> None:
        if frame.kind == "bind":
            ack = self.handle_bind(frame)
            if ack.payload.get("success"):
                with self._lock:
                    self._device_streams[frame.device_id] = stream
            stream.send(encode_frame(ack))
        elif frame.kind == "ack":
            if frame.request_id is not None:
                with self._lock:
                    self._pending_acks[frame.request_id] = frame
            dev = self.registry.devices.get(frame.device_id)
            if dev is not None and "status" in frame.payload:
                dev.status = dict(frame.payload["status"])
        elif frame.kind == "status":
            dev = self.registry.devices.get(frame.device_id)
            if dev is not None:
                dev.status = dict(frame.payload.get("status", {}))
        # devices never send commands to the cloud; such frames are dropped

    def handle_bind(self, frame: DeviceFrame) -> DeviceFrame:
        """Atomic token check-and-bind; the ack carries the verdict."""
        if frame.kind != "bind":
            raise MalformedFrame(f"expected bind frame, got {frame.kind!r}")
        token_value = frame.token or ""
        verdict = self.registry.tokens.bind(
            token_value,
            frame.device_id,
            self.clock.now,
            bundle_id=frame.payload.get("bundle_id"),
            user_id=frame.payload.get("user_id"),
        )
        if not verdict.accepted:
            return DeviceFrame(
                kind="ack",
                device_id=frame.device_id,
                request_id=frame.request_id,
                payload={"success": False, "reason": verdict.reason.value},
            )
        token = self.registry.tokens.get(token_value).token
        self.registry.devices[frame.device_id] = DeviceRecord(
            device_id=frame.device_id,
            user_id=token.user_id,
            bundle_id=token.bundle_id,
            ssid=frame.payload.get("ssid", ""),
            passphrase=frame.payload.get("passphrase", ""),
            token_value=token_value,
        )
        return DeviceFrame(
            kind="ack",
            device_id=frame.device_id,
            request_id=frame.request_id,
            payload={"success": True},
        )

    def relay_command(self, device_id: str, command: dict) -> dict:
        """Push one command frame to the device and return its ack payload."""
        with self._lock:
            stream = self._device_streams.get(device_id)
            self._relay_seq += 1
            request_id = f"relay-{self._relay_seq:06d}"
        if stream is None:
            raise DeviceOffline(f"no live channel to {device_id}")
        frame = DeviceFrame(
            kind="command",
            device_id=device_id,
            payload={"command": command},
            request_id=request_id,
        )
        try:
            stream.send(encode_frame(frame))
        except Exception as exc:
            raise DeviceOffline(f"channel to {device_id} is dead: {exc}") from exc
        with self._lock:
            ack = self._pending_acks.pop(request_id, None)
        if ack is None:
            raise DeviceOffline(f"{device_id} did not acknowledge")
        dev = self.registry.devices.get(device_id)
        if dev is not None and "status" in ack.payload:
            dev.status = dict(ack.payload["status"])
        return ack.payload

    # -- introspection -------------------------------------------------------

    def stored_footprint(self, device_id: str) -> dict:
        """Everything the cloud knows about a device's network."""
        dev = self.registry.devices.get(device_id)
        if dev is None:
            raise UnknownDevice(device_id)
        return {
            "device_id": dev.device_id,
            "ssid": dev.ssid,
            "passphrase": dev.passphrase,
            "user_id": dev.user_id,
            "bundle_id": dev.bundle_id,
            "status": dict(dev.status),
        }
