"""Virtual device: capability aggregation over the physical fleet.

Watches the bootstrapping topics, keeps mean/min/max aggregate feeds per
sensor type across all active devices, and registers itself through the
same check/create/update path as any physical device. Aggregates are
event-driven: each member reading recomputes the statistics over the
latest value per member and publishes them on the standard sensor topic
scheme.
"""

from __future__ import annotations

import argparse
import logging
import queue
import secrets
import threading
import time
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation

from myno.model import VOCAB, DeviceDescription, extract_description, validate
from myno.model.description import SensorFunction, Unit
from myno.model.description import description_to_store
from myno.mqtt.client import Message, MqttClient
from myno.rdf import parse_turtle, serialize_turtle
from myno.rdf.turtle import SyntaxError_
from myno.model import ExtractionError

log = logging.getLogger("myno.vdev")

STATISTICS = ("max", "mean", "min")
_TWO_PLACES = Decimal("0.01")


@dataclass(frozen=True)
class AggregateSpec:
    sensor_type: str
    statistic: str
    member_topics: frozenset[str]
    publish_topic: str


class AggregatorCore:
    """Pure aggregation state; no sockets, fully deterministic."""

    def __init__(self, own_uuid: str):
        self.own_uuid = own_uuid
        self._members: dict[str, DeviceDescription] = {}
        self._latest: dict[str, Decimal] = {}  # member topic -> last value

    # -- membership ------------------------------------------------------------

    def upsert_member(self, description: DeviceDescription) -> bool:
        if description.uuid == self.own_uuid or description.uuid.startswith("vdev-"):
            return False  # never aggregate a virtual device, itself included
        previous = self._members.get(description.uuid)
        self._members[description.uuid] = description
        return previous != description

    def remove_member(self, uuid: str) -> bool:
        if uuid not in self._members:
            return False
        removed = self._members.pop(uuid)
        for sensor in removed.sensors:
            self._latest.pop(sensor.topic, None)
        return True

    def member_count(self) -> int:
        return len(self._members)

    # -- specs -------------------------------------------------------------------

    def _topics_by_type(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {}
        for description in self._members.values():
            for sensor in description.sensors:
                out.setdefault(sensor.sensor_type, set()).add(sensor.topic)
        return out

    def specs(self) -> list[AggregateSpec]:
        out = []
        for sensor_type, topics in sorted(self._topics_by_type().items()):
            for statistic in STATISTICS:
                out.append(
                    AggregateSpec(
                        sensor_type=sensor_type,
                        statistic=statistic,
                        member_topics=frozenset(topics),
                        publish_topic=(
                            f"sensor/{sensor_type}/{statistic}_{sensor_type}/{self.own_uuid}"
                        ),
                    )
                )
        return out

    def fingerprint(self) -> tuple:
        return tuple(
            (s.sensor_type, s.statistic, tuple(sorted(s.member_topics))) for s in self.specs()
        )

    def _unit_for(self, sensor_type: str) -> Unit:
        units = []
        for uuid in sorted(self._members):
            for sensor in self._members[uuid].sensors:
                if sensor.sensor_type == sensor_type and sensor.unit.iri:
                    units.append(sensor.unit)
        return units[0] if units else Unit(iri="", label="")

    def description(self, name: str = "Virtual Device") -> DeviceDescription:
        sensors = []
        for spec in self.specs():
            unit = self._unit_for(spec.sensor_type)
            sensors.append(
                SensorFunction(
                    name=f"{spec.statistic}_{spec.sensor_type}",
                    description=(
                        f"{spec.statistic} of {len(spec.member_topics)} {spec.sensor_type} "
                        "feed(s) across the device network"
                    ),
                    unit=unit,
                    topic=spec.publish_topic,
                )
            )
        return DeviceDescription(
            uuid=self.own_uuid,
            name=name,
            category="virtual",
            yang_description="Software-only device aggregating the live sensor feeds "
            "of every physical device on the network.",
            sensors=tuple(sorted(sensors, key=lambda s: s.name)),
        )

    # -- readings -----------------------------------------------------------------

    def member_topic_types(self) -> dict[str, str]:
        return {
            sensor.topic: sensor.sensor_type
            for description in self._members.values()
            for sensor in description.sensors
        }

    def on_reading(self, topic: str, value: Decimal) -> list[tuple[str, str]]:
        """Record a member reading; returns (topic, payload) publishes."""
        types = self.member_topic_types()
        sensor_type = types.get(topic)
        if sensor_type is None:
            return []
        self._latest[topic] = value
        relevant = [
            self._latest[t]
            for t in sorted(types)
            if types[t] == sensor_type and t in self._latest
        ]
        if not relevant:
            return []
        out = []
        for spec in self.specs():
            if spec.sensor_type != sensor_type:
                continue
            stat = _statistic(spec.statistic, relevant)
            out.append((spec.publish_topic, str(stat)))
        return out


def _statistic(name: str, values: list[Decimal]) -> Decimal:
    if name == "mean":
        raw = sum(values, Decimal(0)) / Decimal(len(values))
    elif name == "min":
        raw = min(values)
    else:
        raw = max(values)
    return raw.quantize(_TWO_PLACES, rounding=ROUND_HALF_EVEN)


class VirtualDevice:
    """MQTT-facing wrapper around AggregatorCore."""

    def __init__(
        self,
        mqtt_host: str,
        mqtt_port: int,
        uuid: str | None = None,
        vocab=VOCAB,
        check_timeout: float = 2.0,
    ):
        self.uuid = uuid or f"vdev-{secrets.token_hex(6)}"
        if not self.uuid.startswith("vdev-"):
            raise ValueError("virtual device uuid must carry the vdev- prefix")
        self.core = AggregatorCore(self.uuid)
        self.vocab = vocab
        self.mqtt_host = mqtt_host
        self.mqtt_port = mqtt_port
        self.check_timeout = check_timeout
        self._client: MqttClient | None = None
        self._inbox: "queue.Queue[Message]" = queue.Queue()
        self._stopping = threading.Event()
        self._worker: threading.Thread | None = None
        self._announced = False
        self._published_fingerprint: tuple | None = None
        self.description_publishes = 0
        self.aggregate_publishes = 0

    def start(self) -> "VirtualDevice":
        self._client = MqttClient(
            self.mqtt_host, self.mqtt_port, client_id=self.uuid, on_message=self._inbox.put
        ).connect()
        self._client.subscribe("yang/config/#", qos=1)
        self._client.subscribe("sensor/#", qos=0)
        self._worker = threading.Thread(target=self._run, name="vdev-worker", daemon=True)
        self._worker.start()
        return self

    def stop(self) -> None:
        self._stopping.set()
        if self._worker is not None:
            self._worker.join(timeout=3)
        if self._client is not None:
            self._client.close()

    # -- internals ----------------------------------------------------------------

    def _publish(self, topic: str, payload: bytes | str, qos: int = 0) -> None:
        assert self._client is not None
        try:
            self._client.publish(topic, payload, qos=qos)
        except Exception:
            if not self._stopping.is_set():
                log.exception("vdev publish to %s failed", topic)

    def _description_text(self) -> str:
        description = self.core.description()
        assert validate(description) == []
        store = description_to_store(description, self.vocab)
        return serialize_turtle(store, self.vocab.prefixes())

    def _run(self) -> None:
        # ordinary-device registration: check first, then create if unknown
        self._publish("yang/config/check", self.uuid, qos=1)
        reply_topic = f"yang/config/registered/{self.uuid}"
        deadline = time.monotonic() + self.check_timeout
        answer: bytes | None = None
        while time.monotonic() < deadline and answer is None and not self._stopping.is_set():
            try:
                message = self._inbox.get(timeout=0.05)
            except queue.Empty:
                continue
            if message.topic == reply_topic:
                answer = message.payload
            else:
                self._handle(message)
        if answer != b"true":
            self._publish("yang/config/create", self._description_text(), qos=1)
            self.description_publishes += 1
        self._announced = True
        self._published_fingerprint = self.core.fingerprint()

        while not self._stopping.is_set():
            try:
                message = self._inbox.get(timeout=0.2)
            except queue.Empty:
                continue
            self._handle(message)

    def _handle(self, message: Message) -> None:
        segments = message.topic.split("/")
        if message.topic == "yang/config/create":
            self._member_update(message.payload)
        elif segments[:3] == ["yang", "config", "update"] and len(segments) == 4:
            if segments[3] != self.uuid:
                self._member_update(message.payload)
        elif segments[:3] == ["yang", "config", "delete"] and len(segments) == 4:
            if self.core.remove_member(segments[3]):
                self._republish_if_changed()
        elif segments[0] == "sensor" and len(segments) == 4:
            self._reading(message.topic, message.payload)

    def _member_update(self, payload: bytes) -> None:
        try:
            description = extract_description(parse_turtle(payload.decode("utf-8")), self.vocab)
        except (UnicodeDecodeError, SyntaxError_, ExtractionError):
            return  # the bridge already reports malformed descriptions
        if self.core.upsert_member(description):
            self._republish_if_changed()

    def _republish_if_changed(self) -> None:
        if not self._announced:
            return
        fingerprint = self.core.fingerprint()
        if fingerprint == self._published_fingerprint:
            return
        self._published_fingerprint = fingerprint
        self._publish(f"yang/config/update/{self.uuid}", self._description_text(), qos=1)
        self.description_publishes += 1

    def _reading(self, topic: str, payload: bytes) -> None:
        if topic.endswith(f"/{self.uuid}"):
            return  # own aggregate feed
        try:
            value = Decimal(payload.decode("utf-8").strip())
        except (InvalidOperation, UnicodeDecodeError):
            return
        for publish_topic, text in self.core.on_reading(topic, value):
            self._publish(publish_topic, text, qos=0)
            self.aggregate_publishes += 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="myno-vdev", description="Run the virtual device")
    parser.add_argument("--mqtt-host", default="127.0.0.1")
    parser.add_argument("--mqtt-port", type=int, default=1883)
    parser.add_argument("--uuid", default=None, help="must start with vdev-")
    parser.add_argument("--verbose", "-v", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    vdev = VirtualDevice(args.mqtt_host, args.mqtt_port, uuid=args.uuid).start()
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        vdev.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
