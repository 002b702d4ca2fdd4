"""Vendor-mobile-app emulator.

Resolves the cloud endpoint (simulated DNS with the hard-coded fallback
table the vendor apps carry), acquires a provisioning token through a
signed envelope, broadcasts credentials+token as a packet-length
sequence on port 30011, and drives device control through the cloud.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import dpl, protocol
from .cloud import CloudUnreachable, DeviceOffline, VendorCloud
from .netsim import Simulation
from .signing import (
    SigningKeySet,
    derive_signing_key,
    open_postdata,
    seal_postdata,
    sign_envelope,
    verify_envelope,
)
from .stego import parse_bmp, stego_extract

T_PROV_SECONDS = 30
POLL_INTERVAL = 2

# verbatim from the decompiled resolver, odd zero-padded octets included;
# in simulation these strings are directory keys, not routable addresses
HARDCODED_ENDPOINTS = {
    "IN": ["13.234.164.70", "13.234.09.49"],
    "AZ": ["35.167.213.203", "52.27.05.79"],
    "EU": ["52.29.0.171", "35.156.160.91"],
    "AY": ["162.14.14.134"],
}


class ProvisionerError(Exception):
    pass


class UnknownRegion(ProvisionerError):
    pass


class CloudRejected(ProvisionerError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def hardcoded_endpoints(region: str) -> list[str]:
    """The fallback table; unknown regions yield an empty list."""
    return list(HARDCODED_ENDPOINTS.get(region, []))


def resolve_cloud_endpoint(
    region: str,
    dns_available: bool,
    dns_answers: dict[str, list[str]],
    directory: dict[str, VendorCloud],
) -> tuple[str, VendorCloud]:
    """First reachable endpoint for the region, DNS first, table second."""
    if dns_available:
        candidates = list(dns_answers.get(region, []))
    else:
        candidates = hardcoded_endpoints(region)
    if not candidates:
        raise UnknownRegion(f"no endpoints for region {region!r}")
    for address in candidates:
        cloud = directory.get(address)
        if cloud is not None and cloud.online:
            return address, cloud
    raise CloudUnreachable(f"no reachable endpoint among {candidates}")


@dataclass
class AppConfig:
    bundle_id: str
    client_id: str
    region: str
    user_id: str
    keys: SigningKeySet
    sid: str = "az16113405328608e6hqj3z3"
    install_id: str = "CAAC4B69-A95B-4483-801D-000000000001"
    lat: float = 90.0
    lon: float = -90.0
    time_zone_id: str = "America/Chicago"


def load_app_config(path) -> AppConfig:
    """Read a provisioner config file; secret2 is pulled out of the BMP
    named in the file, exercising the whole key pipeline at startup."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    keys_raw = raw["keys"]
    with open(keys_raw["secret2_bmp"], "rb") as fh:
        image = parse_bmp(fh.read())
    record, _report = stego_extract(image, keys_raw["seed"])
    keys = SigningKeySet(
        cert_hash=keys_raw["certHash"],
        secret1=keys_raw["secret1"],
        secret2=record.keys[0].decode("utf-8"),
    )
    return AppConfig(
        bundle_id=raw["bundleId"],
        client_id=raw["clientId"],
        region=raw["region"],
        user_id=raw.get("userId", "user-01"),
        keys=keys,
    )


class EnvelopeFactory:
    """Builds fully-populated signed request envelopes in the vendor shape."""

    def __init__(self, config: AppConfig, rng, nonce_source=None):
        self.config = config
        self.rng = rng
        self.nonce_source = nonce_source
        self._seq = 0

    def _request_id(self) -> str:
        self._seq += 1
        tail = "".join(self.rng.choice("0123456789ABCDEF") for _ in range(12))
        return f"{self._seq:08d}-{tail}"

    def build(self, action: str, post_obj: dict, now: int, redact: dict | None = None) -> dict:
        cfg = self.config
        key = derive_signing_key(cfg.keys)
        envelope = {
            "time": now,
            "lang": "en",
            "deviceId": cfg.install_id,
            "et": "0.0.1",
            "osSystem": "14.2",
            "bundleId": cfg.bundle_id,
            "lon": cfg.lon,
            "channel": "oem",
            "appVersion": "1.1.2",
            "ttid": "appstore",
            "v": "1.0",
            "sid": cfg.sid,
            "platform": "iPhone",
            "postData": seal_postdata(
                json.dumps(post_obj, sort_keys=True).encode("utf-8"),
                key,
                nonce_source=self.nonce_source,
            ),
            "requestId": self._request_id(),
            "sdVersion": "3.20.1",
            "timeZoneId": cfg.time_zone_id,
            "lat": cfg.lat,
            "clientId": cfg.client_id,
            "a": action,
            "appRnVersion": "5.29",
        }
        if redact:
            envelope.update(redact)
        envelope["sign"] = sign_envelope(envelope, key)
        return envelope


@dataclass
class ProvisionOutcome:
    success: bool
    device_id: str | None = None
    error: str | None = None


@dataclass
class IssuedToken:
    value: str
    region: str
    acquired_at: int
    expires_in: int


class MobileApp:
    def __init__(
        self,
        sim: Simulation,
        config: AppConfig,
        directory: dict[str, VendorCloud],
        rng,
        dns_available: bool = True,
        dns_answers: dict[str, list[str]] | None = None,
        endpoint_id: str | None = None,
        nonce_source=None,
    ):
        self.sim = sim
        self.clock = sim.clock
        self.config = config
        self.directory = directory
        self.dns_available = dns_available
        self.dns_answers = dns_answers or {}
        self.endpoint = sim.register(endpoint_id or f"app-{config.user_id}", "app")
        self.envelopes = EnvelopeFactory(config, rng, nonce_source=nonce_source)
        self.last_token: IssuedToken | None = None

    # -- cloud plumbing ------------------------------------------------------

    def _cloud(self) -> tuple[str, VendorCloud]:
        return resolve_cloud_endpoint(
            self.config.region, self.dns_available, self.dns_answers, self.directory
        )

    def _call(self, action: str, post_obj: dict) -> dict:
        _addr, cloud = self._cloud()
        envelope = self.envelopes.build(action, post_obj, self.clock.now)
        response = json.loads(cloud.post("/api.json", json.dumps(envelope)))
        key = derive_signing_key(self.config.keys)
        if not response.get("success"):
            reason = response.get("result", {}).get("error", "Unknown")
            raise CloudRejected(reason)
        # responses are signed by the cloud too; check before trusting data
        if not response.get("sign") or not verify_envelope(response, key):
            raise CloudRejected("response signature does not verify")
        return json.loads(open_postdata(response["result"], key))

    # -- the four app-side operations -----------------------------------------

    def acquire_token(self) -> IssuedToken:
        result = self._call(
            protocol.ACTION_TOKEN_GET,
            {"region": self.config.region, "userId": self.config.user_id},
        )
        token = IssuedToken(
            value=result["token"],
            region=result["region"],
            acquired_at=self.clock.now,
            expires_in=result["expires_in"],
        )
        self.last_token = token
        return token

    def broadcast_credentials(self, creds: dpl.Credentials, rounds: int = dpl.DEFAULT_ROUNDS) -> int:
        """Emit the packet-length sequence on port 30011; returns frame count."""
        seq = dpl.encode(creds, rounds)
        return self._broadcast_lengths(seq.flatten())

    def _broadcast_lengths(self, lengths: list[int]) -> int:
        for length in lengths:
            self.sim.broadcast(
                self.endpoint, dpl.PROVISION_PORT, bytes([dpl.FILLER_BYTE]) * length
            )
        return len(lengths)

    def provision(
        self,
        creds: dpl.Credentials,
        rounds: int = dpl.DEFAULT_ROUNDS,
        idle_hook=None,
    ) -> ProvisionOutcome:
        """Broadcast credentials, then poll the cloud until the device shows
        up online or the provisioning window lapses."""
        self.broadcast_credentials(creds, rounds)
        if idle_hook is not None:
            idle_hook()
        deadline = self.clock.now + T_PROV_SECONDS
        while True:
            try:
                status = self._call(
                    protocol.ACTION_DEVICE_STATUS, {"token": creds.token}
                )
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

    def control_device(self, device_id: str, command: dict) -> dict:
        """app -> cloud -> device and back; never touches the device directly."""
        try:
            result = self._call(
                protocol.ACTION_DEVICE_CONTROL,
                {"device_id": device_id, "command": command},
            )
        except CloudRejected as exc:
            if exc.reason == "DeviceOffline":
                raise DeviceOffline(device_id) from exc
            raise
        return result["status"]

    def device_status(self, device_id: str) -> dict:
        return self._call(protocol.ACTION_DEVICE_STATUS, {"device_id": device_id})
