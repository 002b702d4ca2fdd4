"""IoT device state machine.

Listens for credential broadcasts on port 30011, applies the
length-only token check, joins whatever SSID it decoded (it has no way
to tell a real home network from a decoy), binds to the cloud over a
stream, then obeys command frames.  The local listener on the device's
own port is deliberately credulous: any network member that can reach
it and speaks the framing is obeyed, which is the replay/hijack surface
the isolation mitigation closes.
"""

from __future__ import annotations

import json
from enum import Enum

from . import dpl, protocol
from .netsim import EndpointId, NetSimError, PeerUnreachable, Simulation, StreamEnd
from .protocol import DeviceFrame, FrameReader, MalformedFrame, encode_frame

VALID_POWER = ("on", "off")
BRIGHTNESS_RANGE = (0, 100)


class DevicePhase(Enum):
    UNPROVISIONED = "Unprovisioned"
    CREDS_RECEIVED = "CredsReceived"
    CREDS_REJECTED = "CredsRejected"
    WIFI_JOINED = "WifiJoined"
    BIND_PENDING = "BindPending"
    REGISTERED = "Registered"
    REGISTER_FAILED = "RegisterFailed"


class IoTDevice:
    def __init__(
        self,
        sim: Simulation,
        device_id: str,
        cloud_endpoint: EndpointId,
        bundle_id: str = "com.xyz.smart",
    ):
        self.sim = sim
        self.clock = sim.clock
        self.device_id = device_id
        self.cloud_endpoint = cloud_endpoint
        self.bundle_id = bundle_id
        self.endpoint = sim.register(device_id, "device")
        self.phase = DevicePhase.UNPROVISIONED
        self.creds: dpl.Credentials | None = None
        self.attributes = {"power": "off", "brightness": 0}
        self.decoder = dpl.DecoderState()
        self.events: list[dict] = []
        self._cloud_stream: StreamEnd | None = None
        self._cloud_reader = FrameReader()
        sim.set_datagram_handler(self.endpoint, dpl.PROVISION_PORT, self._on_datagram)
        sim.set_stream_handler(self.endpoint, protocol.DEVICE_PORT, self._accept_local)
        sim.set_stream_handler(self.endpoint, protocol.DEVICE_PORT_ALT, self._accept_local)
        self._log("boot", "listening for provisioning broadcasts")

    # -- provisioning ---------------------------------------------------------

    def _on_datagram(self, dgram) -> None:
        if self.phase is not DevicePhase.UNPROVISIONED:
            return
        self.decoder.feed(len(dgram.payload))
        if self.decoder.phase is dpl.Phase.COMPLETE:
            self._on_credentials(self.decoder.credentials)

    def idle(self) -> None:
        """The decode window closed with no more frames arriving; settle."""
        if self.phase is DevicePhase.UNPROVISIONED:
            self.decoder.finalize()
            if self.decoder.phase is dpl.Phase.COMPLETE:
                self._on_credentials(self.decoder.credentials)

    def _on_credentials(self, creds: dpl.Credentials) -> None:
        self.creds = creds
        self._set_phase(DevicePhase.CREDS_RECEIVED, f"ssid={creds.ssid}")
        if not protocol.device_token_check(creds.token):
            # wrong-length token: indicate and go quiet, never touch the net
            self._set_phase(
                DevicePhase.CREDS_REJECTED, f"token length {len(creds.token)} != 32"
            )
            return
        try:
            self.sim.join(self.endpoint, creds.ssid, creds.passphrase)
        except NetSimError as exc:
            self._log("wifi_join_failed", str(exc))
            return
        for ssid in self.sim.networks_of(self.endpoint) - {creds.ssid}:
            self.sim.leave(self.endpoint, ssid)
        self._set_phase(DevicePhase.WIFI_JOINED, creds.ssid)
        self._bind(creds)

    def _bind(self, creds: dpl.Credentials) -> None:
        try:
            stream = self.sim.open_stream(
                self.endpoint, self.cloud_endpoint, protocol.DEVICE_PORT
            )
        except PeerUnreachable as exc:
            self._log("cloud_unreachable", str(exc))
            self._set_phase(DevicePhase.REGISTER_FAILED, "cloud unreachable")
            return
        self._cloud_stream = stream
        stream.on_data = self._on_cloud_data
        self._set_phase(DevicePhase.BIND_PENDING, "bind sent")
        frame = DeviceFrame(
            kind="bind",
            device_id=self.device_id,
            token=creds.token,
            payload={
                "ssid": creds.ssid,
                "passphrase": creds.passphrase,
                "bundle_id": self.bundle_id,
            },
        )
        stream.send(encode_frame(frame))

    def _on_cloud_data(self) -> None:
        data = self._cloud_stream.recv()
        try:
            frames = self._cloud_reader.push(data)
        except MalformedFrame:
            return
        for frame in frames:
            if frame.kind == "ack" and self.phase is DevicePhase.BIND_PENDING:
                if frame.payload.get("success"):
                    self._set_phase(DevicePhase.REGISTERED, "cloud accepted bind")
                else:
                    reason = frame.payload.get("reason", "?")
                    self._set_phase(DevicePhase.REGISTER_FAILED, f"cloud reject: {reason}")
            elif frame.kind == "command":
                ack = self.handle_command(frame)
                self._cloud_stream.send(encode_frame(ack))

    # -- command handling -------------------------------------------------------

    def handle_command(self, frame: DeviceFrame) -> DeviceFrame:
        """Cloud-path command handling: requires a completed registration."""
        if self.phase is not DevicePhase.REGISTERED:
            return self._ack(frame, False, reason="NotRegistered")
        ok, detail = self.apply_command(frame.payload.get("command", {}))
        if not ok:
            return self._ack(frame, False, reason=detail)
        return self._ack(frame, True)

    def apply_command(self, command: dict) -> tuple[bool, str]:
        if not isinstance(command, dict) or not command:
            return False, "UnknownCommand"
        staged = {}
        for key, value in command.items():
            if key == "power" and value in VALID_POWER:
                staged[key] = value
            elif (
                key == "brightness"
                and isinstance(value, int)
                and BRIGHTNESS_RANGE[0] <= value <= BRIGHTNESS_RANGE[1]
            ):
                staged[key] = value
            else:
                return False, "UnknownCommand"
        self.attributes.update(staged)
        self._log("command", json.dumps(staged, sort_keys=True))
        return True, ""

    def _ack(self, frame: DeviceFrame, success: bool, reason: str | None = None) -> DeviceFrame:
        payload = {"success": success, "status": dict(self.attributes)}
        if reason:
            payload["reason"] = reason
        return DeviceFrame(
            kind="ack",
            device_id=self.device_id,
            request_id=frame.request_id,
            payload=payload,
        )

    # -- the open local listener --------------------------------------------------

    def _accept_local(self, stream: StreamEnd, src: EndpointId) -> None:
        reader = FrameReader()

        def on_data():
            try:
                frames = reader.push(stream.recv())
            except MalformedFrame:
                return  # garbage is silently ignored
            for frame in frames:
                self._on_local_frame(stream, frame)

        stream.on_data = on_data

    def _on_local_frame(self, stream: StreamEnd, frame: DeviceFrame) -> None:
        if self.phase not in (
            DevicePhase.WIFI_JOINED,
            DevicePhase.BIND_PENDING,
            DevicePhase.REGISTERED,
        ):
            return
        if frame.kind != "command":
            return
        # no authentication whatsoever: whoever reaches this port is obeyed
        ok, detail = self.apply_command(frame.payload.get("command", {}))
        payload = {"success": ok, "status": dict(self.attributes)}
        if not ok:
            payload["reason"] = detail
        stream.send(
            encode_frame(
                DeviceFrame(
                    kind="ack",
                    device_id=self.device_id,
                    request_id=frame.request_id,
                    payload=payload,
                )
            )
        )

    # -- event log ----------------------------------------------------------------

    def _set_phase(self, phase: DevicePhase, detail: str) -> None:
        self.phase = phase
        self._log(phase.value, detail)

    def _log(self, event: str, detail: str) -> None:
        self.events.append(
            {
                "t": self.clock.now,
                "device_id": self.device_id,
                "phase": self.phase.value,
                "event": event,
                "detail": detail,
            }
        )

    def export_events(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)
