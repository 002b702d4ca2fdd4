import json
import random

import pytest

from provlab import dpl, protocol
from provlab.cloud import DeviceOffline, VendorCloud
from provlab.device import DevicePhase, IoTDevice
from provlab.netsim import LossModel, SimClock, Simulation
from provlab.provisioner import AppConfig, MobileApp
from provlab.proxy import (
    AlreadyAssigned,
    PolicyDenied,
    ProxyGateway,
    ProxyPolicy,
    keys_from_bmp,
)
from provlab.stego import StegoRecord, make_bmp, stego_embed


@pytest.fixture
def rig(keyset):
    rng = random.Random(23)
    sim = Simulation(loss=LossModel(), clock=SimClock(1_613_000_000))
    cloud = VendorCloud(sim, rng=rng, nonce_source=rng)
    cloud.register_vendor("com.xyz.smart", keyset)
    sim.create_network("home-net", "hunter2-long")
    config = AppConfig(
        bundle_id="com.xyz.smart", client_id="gw-client", region="EU",
        user_id="user-01", keys=keyset,
    )
    proxy = ProxyGateway(
        sim, config, {"52.29.0.171": cloud},
        policy=ProxyPolicy(redact_fields={"lat", "lon"}, local_control=True),
        rng=rng, home_ssid="home-net", dns_available=False, nonce_source=rng,
    )
    return sim, cloud, proxy, rng


def provision_proxied(sim, proxy, device_id="bulb-01"):
    net = proxy.allocate_virtual_network(device_id)
    device = IoTDevice(sim, device_id, proxy.endpoint)
    sim.join(device.endpoint, net.ssid, net.passphrase)
    outcome = proxy.provision_isolated(device_id, idle_hook=device.idle)
    assert outcome.success, outcome
    return device, net


class TestIsolationManager:
    def test_allocation_shape(self, rig):
        sim, _, proxy, _ = rig
        net = proxy.allocate_virtual_network("bulb-01")
        assert net.ssid.startswith("vdev-")
        assert len(net.ssid) == 9
        assert len(net.passphrase) == 16
        assert net.ssid != "home-net"

    def test_double_allocation_rejected(self, rig):
        _, _, proxy, _ = rig
        proxy.allocate_virtual_network("bulb-01")
        with pytest.raises(AlreadyAssigned):
            proxy.allocate_virtual_network("bulb-01")

    def test_two_devices_two_disjoint_networks(self, rig):
        sim, _, proxy, _ = rig
        net_a = proxy.allocate_virtual_network("bulb-01")
        net_b = proxy.allocate_virtual_network("plug-02")
        assert net_a.ssid != net_b.ssid
        assert net_a.passphrase != net_b.passphrase
        # cross-broadcast delivery count is zero
        rx = sim.register("listener", "device")
        sim.join(rx, net_b.ssid, net_b.passphrase)
        sim.broadcast(proxy.endpoint, 30011, b"xx", ssid=net_a.ssid)
        assert sim.poll_datagrams(rx) == []

    def test_plan_export(self, rig):
        _, _, proxy, _ = rig
        net = proxy.allocate_virtual_network("bulb-01")
        plan = json.loads(proxy.export_isolation_plan())
        assert plan == {"bulb-01": {"ssid": net.ssid, "passphrase": net.passphrase}}


class TestIsolatedProvisioning:
    def test_happy_path_footprint_is_fake_only(self, rig):
        sim, cloud, proxy, _ = rig
        device, net = provision_proxied(sim, proxy)
        assert device.phase is DevicePhase.REGISTERED
        foot = cloud.stored_footprint("bulb-01")
        assert foot["ssid"] == net.ssid
        assert foot["passphrase"] == net.passphrase
        snapshot = cloud.registry.to_json()
        assert "home-net" not in snapshot
        assert "hunter2-long" not in snapshot

    def test_stale_token_is_bind_rejected(self, rig):
        sim, cloud, proxy, _ = rig
        token = proxy.acquire_token()
        sim.clock.advance(protocol.TTL_SECONDS + 5)
        net = proxy.allocate_virtual_network("bulb-01")
        device = IoTDevice(sim, "bulb-01", proxy.endpoint)
        sim.join(device.endpoint, net.ssid, net.passphrase)
        outcome = proxy.provision_isolated(
            "bulb-01", token=token, idle_hook=device.idle
        )
        assert not outcome.success
        assert outcome.error == "BindRejected:Expired"
        assert device.phase is DevicePhase.REGISTER_FAILED


class TestRelay:
    def test_transparent_control_via_proxy(self, rig, keyset):
        sim, cloud, proxy, rng = rig
        device, _ = provision_proxied(sim, proxy)
        app_config = AppConfig(
            bundle_id="com.xyz.smart", client_id="app-client", region="EU",
            user_id="user-01", keys=keyset,
        )
        app = MobileApp(
            sim, app_config, {"52.29.0.171": cloud}, rng=rng,
            dns_available=False, endpoint_id="phone", nonce_source=rng,
        )
        envelope = app.envelopes.build(
            protocol.ACTION_DEVICE_CONTROL,
            {"device_id": "bulb-01", "command": {"power": "on"}},
            sim.clock.now,
        )
        response = proxy.relay_app_envelope(envelope)
        assert response["success"] is True
        assert device.attributes["power"] == "on"

    def test_redaction_happens_before_signing(self, rig, keyset):
        sim, cloud, proxy, rng = rig
        app_config = AppConfig(
            bundle_id="com.xyz.smart", client_id="app-client", region="EU",
            user_id="user-01", keys=keyset,
        )
        app = MobileApp(
            sim, app_config, {"52.29.0.171": cloud}, rng=rng,
            dns_available=False, endpoint_id="phone", nonce_source=rng,
        )
        envelope = app.envelopes.build(
            protocol.ACTION_TOKEN_GET,
            {"region": "EU", "userId": "user-01"},
            sim.clock.now,
        )
        assert envelope["lat"] == 90.0
        response = proxy.relay_app_envelope(envelope)
        assert response["success"] is True  # signature verified upstream
        assert cloud.last_envelope["lat"] == 0.0
        assert cloud.last_envelope["lon"] == 0.0
        assert cloud.verify_failures == 0

    def test_policy_denied_sends_nothing_upstream(self, rig, keyset):
        sim, cloud, proxy, rng = rig
        proxy.policy.allowed_actions = {protocol.ACTION_DEVICE_STATUS}
        before = cloud.requests_total
        with pytest.raises(PolicyDenied):
            proxy.relay_app_envelope({"a": protocol.ACTION_DEVICE_CONTROL})
        assert cloud.requests_total == before


class TestLocalControl:
    def test_local_control_with_cloud_down(self, rig):
        sim, cloud, proxy, _ = rig
        device, _ = provision_proxied(sim, proxy)
        cloud.set_online(False)
        status = proxy.local_control("bulb-01", {"power": "on"})
        assert status["power"] == "on"
        assert device.attributes["power"] == "on"

    def test_local_control_disabled_by_policy(self, rig):
        sim, cloud, proxy, _ = rig
        provision_proxied(sim, proxy)
        proxy.policy.local_control = False
        with pytest.raises(PolicyDenied):
            proxy.local_control("bulb-01", {"power": "on"})

    def test_unknown_device(self, rig):
        _, _, proxy, _ = rig
        with pytest.raises(DeviceOffline):
            proxy.local_control("ghost", {"power": "on"})


class TestPolicyFile:
    def test_policy_json_round_trip(self):
        policy = ProxyPolicy(
            allowed_actions={"tuya.m.token.get", "m.device.control"},
            redact_fields={"lat", "lon"},
            local_control=True,
        )
        again = ProxyPolicy.from_json(policy.to_json())
        assert again == policy


class TestKeyPipeline:
    def test_keys_from_bmp(self, keyset):
        image = make_bmp(64, 64)
        carrier = stego_embed(
            image, "seed-string", StegoRecord(keys=[keyset.secret2.encode()])
        )
        keys = keys_from_bmp(
            carrier, "seed-string", cert_hash=keyset.cert_hash,
            secret1=keyset.secret1,
        )
        assert keys == keyset
