import json
import random
import threading

import pytest

from provlab import dpl, protocol
from provlab.cloud import (
    CloudRegistry,
    CorruptSnapshot,
    UnknownDevice,
    VendorCloud,
    persist,
    restore,
)
from provlab.device import DevicePhase, IoTDevice
from provlab.netsim import LossModel, SimClock, Simulation
from provlab.protocol import DeviceFrame, FrameReader, MalformedFrame, encode_frame
from provlab.provisioner import AppConfig, MobileApp
from provlab.signing import SigningKeySet, derive_signing_key, sign_envelope

HOME = "home-net"
PSK = "hunter2-long"


@pytest.fixture
def world(keyset):
    rng = random.Random(11)
    sim = Simulation(loss=LossModel(), clock=SimClock(1_613_000_000))
    cloud = VendorCloud(sim, rng=rng, nonce_source=rng)
    cloud.register_vendor("com.xyz.smart", keyset)
    sim.create_network(HOME, PSK)
    directory = {"52.29.0.171": cloud}
    config = AppConfig(
        bundle_id="com.xyz.smart", client_id="client-01", region="EU",
        user_id="user-01", keys=keyset,
    )
    app = MobileApp(sim, config, directory, rng=rng, dns_available=False,
                    dns_answers={"EU": ["52.29.0.171"]}, nonce_source=rng)
    sim.join(app.endpoint, HOME, PSK)
    return sim, cloud, app, rng


def provision_one(sim, cloud, app, device_id="bulb-01"):
    device = IoTDevice(sim, device_id, cloud.endpoint)
    sim.join(device.endpoint, HOME, PSK)
    token = app.acquire_token()
    creds = dpl.Credentials(HOME, PSK, token.value)
    outcome = app.provision(creds, idle_hook=device.idle)
    assert outcome.success
    return device, token


class TestRegistrationFlow:
    def test_happy_path_reaches_registered(self, world):
        sim, cloud, app, _ = world
        device, token = provision_one(sim, cloud, app)
        assert device.phase is DevicePhase.REGISTERED
        rec = cloud.registry.tokens.get(token.value)
        assert rec.bound_device == "bulb-01"

    def test_state_machine_path(self, world):
        # the only road to Registered runs through the full chain
        sim, cloud, app, _ = world
        device, _ = provision_one(sim, cloud, app)
        phases = [e["event"] for e in device.events if e["event"] in
                  {p.value for p in DevicePhase}]
        assert phases == [
            "CredsReceived", "WifiJoined", "BindPending", "Registered",
        ]

    def test_device_verdict_blind_to_freshness(self, world):
        # same 32-char shape, fresh vs stale: identical device behavior,
        # divergent cloud verdicts
        sim, cloud, app, rng = world
        stale = app.acquire_token()
        sim.clock.advance(protocol.TTL_SECONDS + 60)
        fresh = app.acquire_token()
        results = {}
        for label, value in (("stale", stale.value), ("fresh", fresh.value)):
            device = IoTDevice(sim, f"dev-{label}", cloud.endpoint)
            sim.join(device.endpoint, HOME, PSK)
            app.broadcast_credentials(dpl.Credentials(HOME, PSK, value), rounds=1)
            device.idle()
            results[label] = device
        # both devices accepted the token and attempted the bind
        for device in results.values():
            attempted = [e["event"] for e in device.events]
            assert "BindPending" in attempted
        assert results["fresh"].phase is DevicePhase.REGISTERED
        assert results["stale"].phase is DevicePhase.REGISTER_FAILED

    def test_command_round_trip_updates_status(self, world):
        sim, cloud, app, _ = world
        device, _ = provision_one(sim, cloud, app)
        status = app.control_device("bulb-01", {"brightness": 42})
        assert status["brightness"] == 42
        assert device.attributes["brightness"] == 42
        assert cloud.registry.devices["bulb-01"].status["brightness"] == 42

    def test_command_range_violation(self, world):
        sim, cloud, app, _ = world
        device, _ = provision_one(sim, cloud, app)
        from provlab.provisioner import CloudRejected

        with pytest.raises(CloudRejected) as err:
            app.control_device("bulb-01", {"brightness": 150})
        assert "UnknownCommand" in str(err.value)
        assert device.attributes["brightness"] == 0

    def test_command_before_registered_is_refused(self, world):
        sim, cloud, app, _ = world
        device = IoTDevice(sim, "bulb-02", cloud.endpoint)
        ack = device.handle_command(
            DeviceFrame(kind="command", device_id="bulb-02",
                        payload={"command": {"power": "on"}})
        )
        assert not ack.payload["success"]
        assert ack.payload["reason"] == "NotRegistered"

    def test_relay_matches_request_ids(self, world):
        sim, cloud, app, _ = world
        device, _ = provision_one(sim, cloud, app)
        before = [e for e in sim.capture.snapshot()
                  if e.kind == "stream" and e.src == cloud.endpoint.id]
        app.control_device("bulb-01", {"power": "on"})
        after = [e for e in sim.capture.snapshot()
                 if e.kind == "stream" and e.src == cloud.endpoint.id]
        # exactly one command frame left the cloud for this control call
        assert len(after) == len(before) + 1
        acks = [e for e in sim.capture.snapshot()
                if e.kind == "stream" and e.src == "bulb-01"]
        assert acks  # and the device answered on the same channel


class TestSignatureGate:
    def test_no_mutation_on_tamper(self, world):
        sim, cloud, app, rng = world
        envelope = app.envelopes.build(
            protocol.ACTION_TOKEN_GET,
            {"region": "EU", "userId": "user-01"},
            sim.clock.now,
        )
        fingerprint = cloud.registry.fingerprint()
        tampered = dict(envelope)
        tampered["lon"] = -89.0
        response = cloud.handle_app_request(tampered)
        assert response["success"] is False
        assert response["result"]["error"] == "BadSignature"
        assert cloud.registry.fingerprint() == fingerprint

    def test_unknown_bundle(self, world, keyset):
        sim, cloud, app, _ = world
        envelope = app.envelopes.build(
            protocol.ACTION_TOKEN_GET, {"region": "EU"}, sim.clock.now
        )
        envelope["bundleId"] = "com.nobody.app"
        envelope["sign"] = sign_envelope(envelope, derive_signing_key(keyset))
        response = cloud.handle_app_request(envelope)
        assert response["result"]["error"] == "UnknownBundle"

    def test_unknown_action(self, world, keyset):
        sim, cloud, app, _ = world
        envelope = app.envelopes.build("m.not.an.action", {}, sim.clock.now)
        response = cloud.handle_app_request(envelope)
        assert response["result"]["error"] == "UnknownAction"

    def test_missing_sign_rejected(self, world):
        sim, cloud, app, _ = world
        envelope = app.envelopes.build(
            protocol.ACTION_TOKEN_GET, {"region": "EU"}, sim.clock.now
        )
        del envelope["sign"]
        response = cloud.handle_app_request(envelope)
        assert response["result"]["error"] == "BadSignature"


class TestBind:
    def test_handle_bind_requires_bind_kind(self, world):
        _, cloud, _, _ = world
        with pytest.raises(MalformedFrame):
            cloud.handle_bind(DeviceFrame(kind="status", device_id="d"))

    def test_vendor_mismatch_at_bind(self, world):
        sim, cloud, app, _ = world
        token = app.acquire_token()
        ack = cloud.handle_bind(
            DeviceFrame(
                kind="bind", device_id="dev-x", token=token.value,
                payload={"ssid": HOME, "passphrase": PSK,
                         "bundle_id": "com.other.vendor"},
            )
        )
        assert not ack.payload["success"]
        assert ack.payload["reason"] == "VendorMismatch"

    def test_concurrent_binds_single_winner(self, world):
        sim, cloud, app, _ = world
        token = app.acquire_token()
        results = []

        def bind(device_id):
            ack = cloud.handle_bind(
                DeviceFrame(
                    kind="bind", device_id=device_id, token=token.value,
                    payload={"ssid": HOME, "passphrase": PSK,
                             "bundle_id": "com.xyz.smart"},
                )
            )
            results.append((device_id, ack.payload["success"]))

        threads = [
            threading.Thread(target=bind, args=(f"racer-{i}",)) for i in range(8)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        winners = [d for d, ok in results if ok]
        assert len(winners) == 1
        assert len(cloud.registry.devices) == 1

    def test_token_conservation(self, world):
        sim, cloud, app, _ = world
        provision_one(sim, cloud, app, "bulb-01")
        provision_one(sim, cloud, app, "bulb-02")
        assert cloud.registry.tokens.bound_count() == len(cloud.registry.devices) == 2


class TestRegistryPersistence:
    def test_empty_round_trip(self, tmp_path):
        registry = CloudRegistry()
        path = tmp_path / "registry.json"
        persist(registry, path)
        assert restore(path) == registry

    def test_populated_round_trip(self, world, tmp_path):
        sim, cloud, app, _ = world
        provision_one(sim, cloud, app, "bulb-01")
        provision_one(sim, cloud, app, "bulb-02")
        app.control_device("bulb-01", {"power": "on"})
        path = tmp_path / "registry.json"
        persist(cloud.registry, path)
        again = restore(path)
        assert again == cloud.registry
        assert again.to_json() == cloud.registry.to_json()

    def test_truncated_snapshot(self, world, tmp_path):
        sim, cloud, app, _ = world
        provision_one(sim, cloud, app)
        path = tmp_path / "registry.json"
        persist(cloud.registry, path)
        text = path.read_text()
        path.write_text(text[: len(text) // 2])
        with pytest.raises(CorruptSnapshot):
            restore(path)

    def test_not_json(self, tmp_path):
        path = tmp_path / "registry.json"
        path.write_text("]]]]")
        with pytest.raises(CorruptSnapshot):
            restore(path)


class TestFootprint:
    def test_footprint_reports_what_device_said_at_bind(self, world):
        sim, cloud, app, _ = world
        provision_one(sim, cloud, app)
        foot = cloud.stored_footprint("bulb-01")
        assert foot["ssid"] == HOME  # the baseline leak isolation removes
        assert foot["passphrase"] == PSK
        assert foot["bundle_id"] == "com.xyz.smart"
        assert foot["user_id"] == "user-01"

    def test_unknown_device(self, world):
        _, cloud, _, _ = world
        with pytest.raises(UnknownDevice):
            cloud.stored_footprint("ghost")


class TestLocalListener:
    def test_same_network_attacker_commands_device(self, world):
        sim, cloud, app, _ = world
        device, _ = provision_one(sim, cloud, app)
        attacker = sim.register("attacker", "device")
        sim.join(attacker, HOME, PSK)
        stream = sim.open_stream(attacker, device.endpoint, protocol.DEVICE_PORT)
        stream.send(encode_frame(DeviceFrame(
            kind="command", device_id="bulb-01",
            payload={"command": {"power": "on"}}, request_id="evil-1",
        )))
        acks = FrameReader().push(stream.recv())
        assert acks[0].payload["success"]
        assert device.attributes["power"] == "on"

    def test_alt_port_1883_same_framing(self, world):
        sim, cloud, app, _ = world
        device, _ = provision_one(sim, cloud, app)
        attacker = sim.register("attacker", "device")
        sim.join(attacker, HOME, PSK)
        stream = sim.open_stream(attacker, device.endpoint, protocol.DEVICE_PORT_ALT)
        stream.send(encode_frame(DeviceFrame(
            kind="command", device_id="bulb-01",
            payload={"command": {"power": "on"}},
        )))
        assert device.attributes["power"] == "on"

    def test_malformed_frames_ignored(self, world):
        sim, cloud, app, _ = world
        device, _ = provision_one(sim, cloud, app)
        attacker = sim.register("attacker", "device")
        sim.join(attacker, HOME, PSK)
        stream = sim.open_stream(attacker, device.endpoint, protocol.DEVICE_PORT)
        stream.send((100).to_bytes(4, "big") + b"x" * 100)
        assert device.attributes == {"power": "off", "brightness": 0}
