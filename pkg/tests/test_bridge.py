"""Bridge bootstrap, caches, and RPC dispatch tests."""

from __future__ import annotations

import json
import time
from decimal import Decimal

import pytest

from myno.bridge.core import ArgTypeError, Bridge, BridgeConfig, UnknownRpc
from myno.mqtt.client import connect

from conftest import PLANT_DOC, PLANT_UUID, RespondingDevice, wait_until


def _control_client(broker):
    client = connect("127.0.0.1", broker.port, client_id="testctl")
    client.subscribe("yang/config/response/#", qos=1)
    client.subscribe("yang/config/error/#", qos=1)
    client.subscribe("yang/config/registered/#", qos=1)
    return client


def test_create_registers_and_regenerates(broker, bridge):
    ctl = _control_client(broker)
    try:
        baseline = bridge.model_text
        ctl.publish("yang/config/create", PLANT_DOC, qos=1)
        reply = ctl.next_message(timeout=5)
        assert reply is not None
        assert reply.topic == f"yang/config/response/{PLANT_UUID}"
        assert json.loads(reply.payload) == {"status": "created", "uuid": PLANT_UUID}
        assert len(bridge.active_devices()) == 1
        assert bridge.model_text != baseline
        assert f"rpc {PLANT_UUID}-pump_switch" in bridge.model_text
        assert bridge.metrics.processing_ms, "processing time must be recorded"
    finally:
        ctl.close()


def test_identical_create_is_idempotent(broker, bridge):
    ctl = _control_client(broker)
    try:
        ctl.publish("yang/config/create", PLANT_DOC, qos=1)
        assert ctl.next_message(timeout=5) is not None
        model_before = bridge.model_text
        regenerations = bridge.metrics.regenerations
        ctl.publish("yang/config/create", PLANT_DOC, qos=1)
        reply = ctl.next_message(timeout=5)
        assert json.loads(reply.payload)["status"] == "unchanged"
        assert bridge.model_text == model_before
        assert bridge.metrics.regenerations == regenerations
        assert bridge.metrics.creates_ignored == 1
    finally:
        ctl.close()


def test_malformed_description_reports_error_and_leaves_registry(broker, bridge):
    ctl = _control_client(broker)
    try:
        ctl.publish("yang/config/create", "@prefix broken", qos=1)
        reply = ctl.next_message(timeout=5)
        assert reply.topic == "yang/config/error/unknown"
        body = json.loads(reply.payload)
        assert body["error"] == "syntax"
        assert bridge.active_devices() == []
    finally:
        ctl.close()


def test_delete_unknown_uuid_reports_error(broker, bridge):
    ctl = _control_client(broker)
    try:
        ctl.publish("yang/config/delete/nope", b"", qos=1)
        reply = ctl.next_message(timeout=5)
        assert reply.topic == "yang/config/error/nope"
        assert bridge.active_devices() == []
    finally:
        ctl.close()


def test_registration_check(broker, bridge):
    ctl = _control_client(broker)
    try:
        ctl.publish("yang/config/check", b"ghost", qos=1)
        reply = ctl.next_message(timeout=5)
        assert reply.topic == "yang/config/registered/ghost"
        assert reply.payload == b"false"

        ctl.publish("yang/config/create", PLANT_DOC, qos=1)
        assert ctl.next_message(timeout=5).topic.startswith("yang/config/response/")
        ctl.publish("yang/config/check", PLANT_UUID.encode(), qos=1)
        reply = ctl.next_message(timeout=5)
        assert reply.topic == f"yang/config/registered/{PLANT_UUID}"
        assert reply.payload == b"true"
    finally:
        ctl.close()


def test_read_returns_stored_description(broker, bridge):
    ctl = _control_client(broker)
    try:
        ctl.publish("yang/config/create", PLANT_DOC, qos=1)
        assert ctl.next_message(timeout=5) is not None
        ctl.publish(f"yang/config/read/{PLANT_UUID}", b"", qos=1)
        reply = ctl.next_message(timeout=5)
        assert reply.topic == f"yang/config/response/{PLANT_UUID}"
        assert reply.payload.decode() == PLANT_DOC
    finally:
        ctl.close()


def test_update_replaces_description(broker, bridge):
    ctl = _control_client(broker)
    try:
        ctl.publish("yang/config/create", PLANT_DOC, qos=1)
        assert ctl.next_message(timeout=5) is not None
        renamed = PLANT_DOC.replace('rdfs:label "Plant Monitor"', 'rdfs:label "Plant Monitor Mk2"')
        ctl.publish(f"yang/config/update/{PLANT_UUID}", renamed, qos=1)
        reply = ctl.next_message(timeout=5)
        assert json.loads(reply.payload)["status"] == "updated"
        assert bridge.active_devices()[0].description.name == "Plant Monitor Mk2"
    finally:
        ctl.close()


def test_update_uuid_mismatch_is_rejected(broker, bridge):
    ctl = _control_client(broker)
    try:
        ctl.publish("yang/config/create", PLANT_DOC, qos=1)
        assert ctl.next_message(timeout=5) is not None
        ctl.publish("yang/config/update/other-uuid", PLANT_DOC, qos=1)
        reply = ctl.next_message(timeout=5)
        assert reply.topic == "yang/config/error/other-uuid"
        assert json.loads(reply.payload)["error"] == "uuid-mismatch"
    finally:
        ctl.close()


def test_delete_tombstones_and_regenerates(broker, bridge):
    ctl = _control_client(broker)
    try:
        ctl.publish("yang/config/create", PLANT_DOC, qos=1)
        assert ctl.next_message(timeout=5) is not None
        ctl.publish(f"yang/config/delete/{PLANT_UUID}", b"", qos=1)
        reply = ctl.next_message(timeout=5)
        assert json.loads(reply.payload)["status"] == "deleted"
        assert bridge.active_devices() == []
        assert "rpc " not in bridge.model_text
        entry = bridge.registry_snapshot()[PLANT_UUID]
        assert entry.state == "deleted"
        # registration check now answers false
        ctl.publish("yang/config/check", PLANT_UUID.encode(), qos=1)
        assert ctl.next_message(timeout=5).payload == b"false"
    finally:
        ctl.close()


def test_bootstrap_commutativity_yields_identical_model(broker):
    """Any arrival order of distinct creates gives byte-identical models."""
    other_uuid = "c9d0e1f2-0000-4abc-8000-444444444444"
    other_doc = PLANT_DOC.replace(PLANT_UUID, other_uuid).replace(
        'rdfs:label "Plant Monitor"', 'rdfs:label "Plant Monitor Two"'
    )
    models = []
    for order in ([PLANT_DOC, other_doc], [other_doc, PLANT_DOC]):
        bridge = Bridge(BridgeConfig(mqtt_port=broker.port, client_id=f"b{len(models)}"))
        # drive the serial worker path directly; order is what matters here
        bridge._client = _NullClient()
        for doc in order:
            bridge._process_create(doc.encode())
        models.append(bridge.model_text)
        assert len(bridge.active_devices()) == 2
    assert models[0] == models[1]


class _NullClient:
    def publish(self, *args, **kwargs):
        pass


def test_sensor_ingest_and_last_write_wins(broker, bridge):
    ctl = _control_client(broker)
    pub = connect("127.0.0.1", broker.port, client_id="sensorpub")
    try:
        ctl.publish("yang/config/create", PLANT_DOC, qos=1)
        assert ctl.next_message(timeout=5) is not None
        topic = f"sensor/moisture/moisture_1/{PLANT_UUID}"
        pub.publish(topic, b"42.5")
        wait_until(lambda: bridge.metrics.sensor_messages == 1, message="first reading")
        snapshot = bridge.state_snapshot()
        assert snapshot["devices"][0]["sensors"]["moisture_1"]["value"] == "42.5"
        assert snapshot["devices"][0]["sensors"]["moisture_1"]["unit"] == "percent"
        # ingesting a reading marks the device active
        assert snapshot["devices"][0]["state"] == "active"

        pub.publish(topic, b"1.0")
        pub.publish(topic, b"2.0")
        wait_until(lambda: bridge.metrics.sensor_messages == 3, message="three readings")
        snapshot = bridge.state_snapshot()
        assert snapshot["devices"][0]["sensors"]["moisture_1"]["value"] == "2.0"
    finally:
        ctl.close()
        pub.close()


def test_sensor_cache_matches_replay_log_oracle(broker, bridge):
    """Cache equals last-value-per-key over a randomized replay log."""
    import random

    rng = random.Random(97)
    keys = [(f"u{i}", f"s{j}") for i in range(3) for j in range(4)]
    log = []
    for _ in range(300):
        uuid, sensor = rng.choice(keys)
        value = str(round(rng.uniform(0, 100), 2))
        log.append((uuid, sensor, value))
    pub = connect("127.0.0.1", broker.port, client_id="replaypub")
    try:
        for uuid, sensor, value in log:
            pub.publish(f"sensor/kind/{sensor}/{uuid}", value.encode())
        wait_until(
            lambda: bridge.metrics.sensor_messages == len(log), message="replay ingested"
        )
        expected = {}
        for uuid, sensor, value in log:  # independent oracle: last write per key
            expected[(uuid, sensor)] = value
        with bridge._cache_lock:
            cached = {k: str(r.value) for k, r in bridge._sensor_cache.items()}
        assert cached == expected
    finally:
        pub.close()


def test_unparseable_sensor_payload_is_counted_and_dropped(broker, bridge):
    pub = connect("127.0.0.1", broker.port, client_id="badpub")
    try:
        pub.publish(f"sensor/moisture/moisture_1/{PLANT_UUID}", b"abc")
        wait_until(lambda: bridge.metrics.sensor_parse_errors == 1, message="parse error counted")
        assert bridge.metrics.sensor_messages == 0
    finally:
        pub.close()


def _register(broker, bridge):
    ctl = _control_client(broker)
    ctl.publish("yang/config/create", PLANT_DOC, qos=1)
    assert ctl.next_message(timeout=5) is not None
    ctl.close()


def test_dispatch_unknown_rpc_raises(broker, bridge):
    with pytest.raises(UnknownRpc):
        bridge.dispatch_rpc("nothing-here", {})


def test_dispatch_arg_type_error_before_publish(broker, bridge):
    _register(broker, bridge)
    rpc = f"{PLANT_UUID}-led_rgb"
    with pytest.raises(ArgTypeError):
        bridge.dispatch_rpc(rpc, {"red": "a lot", "green": 0, "blue": 0})
    with pytest.raises(ArgTypeError):
        bridge.dispatch_rpc(rpc, {"red": 1})  # missing args
    with pytest.raises(ArgTypeError):
        bridge.dispatch_rpc(f"{PLANT_UUID}-pump_switch", {"state": "maybe"})
    assert bridge.metrics.rpcs_dispatched == 0


def test_dispatch_round_trip_with_device(broker, bridge):
    _register(broker, bridge)
    device = RespondingDevice(broker.port, [f"command/pump/pump_switch/{PLANT_UUID}"])
    try:
        response = bridge.dispatch_rpc(f"{PLANT_UUID}-pump_switch", {"state": True})
        assert response.status == "ok"
        assert response.detail["result"] == {"state": True}
        assert device.handled[0]["method"] == "setPumpState"
        assert device.handled[0]["params"] == {"state": True}
        assert bridge.in_flight_rpcs() == 0
    finally:
        device.close()


def test_dispatch_config_rpc_envelope(broker, bridge):
    _register(broker, bridge)
    device = RespondingDevice(broker.port, [f"config/moisture_low_alert/{PLANT_UUID}"])
    try:
        response = bridge.dispatch_rpc(
            f"{PLANT_UUID}-moisture_low_alert",
            {"threshold": "28.5", "interval": 5, "duration": 30},
        )
        assert response.status == "ok"
        assert device.handled[0]["method"] == "configureEvent"
        assert device.handled[0]["params"] == {"threshold": "28.5", "interval": 5, "duration": 30}
    finally:
        device.close()


def test_dispatch_timeout_when_device_offline(broker):
    bridge = Bridge(BridgeConfig(mqtt_port=broker.port, rpc_timeout=1.0)).start()
    try:
        _register(broker, bridge)
        started = time.monotonic()
        response = bridge.dispatch_rpc(f"{PLANT_UUID}-pump_switch", {"state": True})
        elapsed = time.monotonic() - started
        assert response.status == "error"
        assert response.detail == "timeout"
        assert abs(elapsed - 1.0) < 0.5
        assert bridge.metrics.rpc_timeouts == 1
        assert bridge.in_flight_rpcs() == 0
    finally:
        bridge.stop()


def test_event_ingestion_counts(broker, bridge):
    pub = connect("127.0.0.1", broker.port, client_id="evtpub")
    try:
        pub.publish(
            f"event/moisture_low_alert/{PLANT_UUID}",
            json.dumps({"config": "moisture_low_alert", "value": "25.0"}),
        )
        wait_until(lambda: bridge.metrics.events_received == 1, message="event counted")
    finally:
        pub.close()


def test_actuator_state_visible_in_snapshot(broker, bridge):
    pub = connect("127.0.0.1", broker.port, client_id="statepub")
    try:
        _register(broker, bridge)
        pub.publish(f"state/pump_switch/{PLANT_UUID}", b"on")
        wait_until(
            lambda: bridge.state_snapshot()["devices"][0]["actuators"]["pump_switch"] == "on",
            message="actuator state cached",
        )
    finally:
        pub.close()
