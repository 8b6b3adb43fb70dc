from __future__ import annotations

import json
import time
from pathlib import Path

import pytest

from myno.bridge.core import Bridge, BridgeConfig
from myno.mqtt.broker import MicroBroker
from myno.mqtt.client import MqttClient

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
PLANT_DOC = (FIXTURES / "plant-device.ttl").read_text()
PLANT_UUID = "a3e1f2c4-5b6d-4e7f-8a9b-0c1d2e3f4a5b"


@pytest.fixture
def broker():
    b = MicroBroker(port=0, retry_interval=0.3).start()
    yield b
    b.stop()


@pytest.fixture
def bridge(broker):
    b = Bridge(BridgeConfig(mqtt_port=broker.port, rpc_timeout=3.0)).start()
    yield b
    b.stop()


class RespondingDevice:
    """Raw MQTT client that answers command envelopes like a device would."""

    def __init__(self, broker_port: int, command_topics: list[str], client_id: str = "fake-device"):
        self.handled: list[dict] = []
        self.client = MqttClient(
            "127.0.0.1", broker_port, client_id=client_id, on_message=self._on_message
        ).connect()
        for topic in command_topics:
            self.client.subscribe(topic, qos=1)

    def _on_message(self, message):
        envelope = json.loads(message.payload.decode())
        self.handled.append({"topic": message.topic, **envelope})
        reply_topic = f"{message.topic}/response/{envelope['correlation']}"
        self.client.publish(reply_topic, json.dumps({"status": "ok", "result": envelope["params"]}))

    def close(self):
        self.client.close()


def wait_until(predicate, timeout: float = 5.0, poll: float = 0.01, message: str = "condition"):
    """Poll until ``predicate()`` is truthy; fail the test on timeout."""
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return
        time.sleep(poll)
    raise AssertionError(f"timed out waiting for {message}")
