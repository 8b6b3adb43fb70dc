"""Threaded device runners wiring SimDevice state machines to a broker.

Each runner owns one MQTT connection and drives one device: the check-first
registration handshake, interval-scheduled sensor publishing, and command
handling. Runners share a clock but no other state; the Fleet coordinates
staggered start offsets and aggregates traffic counters.
"""

from __future__ import annotations

import logging
import queue
import threading
import uuid as uuid_module
import random
import time

from myno.mqtt.client import ConnectionLost, Message, MqttClient
from myno.simfleet.clock import Clock, SystemClock
from myno.simfleet.device import Outbound, SimDevice

log = logging.getLogger("myno.simfleet")

CHECK_TIMEOUT_REAL = 2.0
IDLE_POLL_REAL = 0.2
RECONNECT_BACKOFF_REAL = [0.2, 0.5, 1.0, 2.0]


class DeviceRunner(threading.Thread):
    """Runs one device against a broker until its window ends or stop()."""

    def __init__(
        self,
        device: SimDevice,
        host: str,
        port: int,
        clock: Clock | None = None,
        start_at: float = 0.0,
        duration: float | None = None,
        qos_telemetry: int = 0,
    ):
        super().__init__(name=f"device-{device.uuid[:8]}", daemon=True)
        self.device = device
        self.host = host
        self.port = port
        self.clock = clock or SystemClock()
        self.start_at = start_at
        self.duration = duration
        self.qos_telemetry = qos_telemetry
        self._halt = threading.Event()
        self.done = threading.Event()
        self._inbox: "queue.Queue[Message]" = queue.Queue()
        self._client: MqttClient | None = None
        self.counters = {
            "checks_sent": 0,
            "descriptions_sent": 0,
            "sensor_sent": 0,
            "event_sent": 0,
            "state_sent": 0,
            "commands_handled": 0,
        }
        self.registered_known = False  # bridge answered "true" to the check
        self.error: Exception | None = None

    def stop(self) -> None:
        self._halt.set()

    # -- internals -------------------------------------------------------------

    def _connect(self) -> MqttClient:
        client = MqttClient(
            self.host,
            self.port,
            client_id=self.device.uuid,
            on_message=self._inbox.put,
        ).connect()
        for topic in self.device.topics_to_subscribe():
            client.subscribe(topic, qos=1)
        return client

    def _publish(self, outbound: Outbound) -> None:
        assert self._client is not None
        qos = outbound.qos
        if outbound.topic.startswith("sensor/"):
            qos = self.qos_telemetry
        self._client.publish(outbound.topic, outbound.payload, qos=qos, retain=outbound.retain)
        if outbound.topic.startswith("sensor/"):
            self.counters["sensor_sent"] += 1
        elif outbound.topic.startswith("event/"):
            self.counters["event_sent"] += 1
        elif outbound.topic.startswith("state/"):
            self.counters["state_sent"] += 1
        elif outbound.topic == "yang/config/create":
            self.counters["descriptions_sent"] += 1
        elif outbound.topic == "yang/config/check":
            self.counters["checks_sent"] += 1

    def _wait_start_slot(self) -> bool:
        while not self._halt.is_set():
            remaining = self.start_at - self.clock.now()
            if remaining <= 0:
                return True
            self._halt.wait(min(self.clock.real_delay(remaining), 0.5))
        return False

    def _register(self) -> None:
        """Check-first handshake; publish the description only when new."""
        self._publish(self.device.check_message())
        reply_topic = f"yang/config/registered/{self.device.uuid}"
        deadline = time.monotonic() + CHECK_TIMEOUT_REAL
        answer: bytes | None = None
        while time.monotonic() < deadline and answer is None:
            try:
                message = self._inbox.get(timeout=0.05)
            except queue.Empty:
                continue
            if message.topic == reply_topic:
                answer = message.payload
            else:
                self._handle_inbound(message)
        if answer == b"true":
            self.registered_known = True
            return
        # "false" or no reply: send the full description
        self._publish(self.device.create_message())

    def _handle_inbound(self, message: Message) -> None:
        now = self.clock.now()
        replies = self.device.on_command(message.topic, message.payload, now)
        if replies:
            self.counters["commands_handled"] += 1
        for outbound in replies:
            self._publish(outbound)

    def run(self) -> None:
        try:
            if not self._wait_start_slot():
                return
            self._client = self._connect()
            self._register()
            epoch = self.clock.now()
            self.device.begin_sampling(epoch, self.duration)
            for outbound in self.device.initial_state_messages():
                self._publish(outbound)
            self._main_loop()
        except ConnectionLost as exc:
            if not self._halt.is_set():
                self.error = exc
                log.warning("device %s lost its connection: %s", self.device.uuid, exc)
        except Exception as exc:  # surfaced through .error for the harness
            self.error = exc
            log.exception("device %s crashed", self.device.uuid)
        finally:
            if self._client is not None:
                self._client.close()
            self.done.set()

    def _reconnect(self) -> None:
        """Bounded exponential backoff; device state survives the outage."""
        if self._client is not None:
            self._client.close()
        for delay in RECONNECT_BACKOFF_REAL:
            if self._halt.wait(delay):
                raise ConnectionLost("stopped while reconnecting")
            try:
                self._client = self._connect()
                self._register()  # check answers true, no description resend
                return
            except (OSError, ConnectionLost):
                continue
        raise ConnectionLost("reconnect attempts exhausted")

    def _main_loop(self) -> None:
        device = self.device
        while not self._halt.is_set():
            try:
                now = self.clock.now()
                if device.stop_at is not None and now >= device.stop_at:
                    for outbound in device.advance_to(device.stop_at):
                        self._publish(outbound)
                    return
                for outbound in device.advance_to(now):
                    self._publish(outbound)
                due = device.next_due()
                if due is None:
                    wait_real = IDLE_POLL_REAL
                else:
                    wait_real = min(
                        max(self.clock.real_delay(due - self.clock.now()), 0.0), IDLE_POLL_REAL
                    )
                try:
                    message = self._inbox.get(timeout=max(wait_real, 0.001))
                except queue.Empty:
                    continue
                self._handle_inbound(message)
                while True:  # drain without waiting
                    try:
                        self._handle_inbound(self._inbox.get_nowait())
                    except queue.Empty:
                        break
            except ConnectionLost:
                if self._halt.is_set():
                    return
                self._reconnect()


class Fleet:
    """A set of simulated devices built from one description template."""

    def __init__(
        self,
        host: str,
        port: int,
        template_text: str,
        template_uuid: str,
        count: int,
        seed: int = 0,
        clock: Clock | None = None,
        uuids: list[str] | None = None,
        intervals: dict[str, float] | None = None,
    ):
        self.host = host
        self.port = port
        self.clock = clock or SystemClock()
        if uuids is None:
            rng = random.Random(seed)
            uuids = [str(uuid_module.UUID(int=rng.getrandbits(128), version=4)) for _ in range(count)]
        if len(uuids) != count:
            raise ValueError("uuid list length must equal device count")
        self.uuids = uuids
        self.devices = [
            SimDevice(
                uuid=device_uuid,
                description_text=template_text.replace(template_uuid, device_uuid),
                seed=seed,
                intervals=intervals,
            )
            for device_uuid in uuids
        ]
        self.runners: list[DeviceRunner] = []

    def start(self, stagger: float = 60.0, duration: float | None = None) -> "Fleet":
        """Launch every device; device k joins at sim time k*stagger."""
        for index, device in enumerate(self.devices):
            runner = DeviceRunner(
                device,
                self.host,
                self.port,
                clock=self.clock,
                start_at=index * stagger,
                duration=duration,
            )
            self.runners.append(runner)
            runner.start()
        return self

    def wait_done(self, timeout_real: float) -> bool:
        deadline = time.monotonic() + timeout_real
        for runner in self.runners:
            remaining = deadline - time.monotonic()
            if remaining <= 0 or not runner.done.wait(timeout=remaining):
                return False
        return True

    def stop(self) -> None:
        for runner in self.runners:
            runner.stop()
        for runner in self.runners:
            runner.done.wait(timeout=5)

    def totals(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for runner in self.runners:
            for key, value in runner.counters.items():
                out[key] = out.get(key, 0) + value
        return out

    def errors(self) -> list[Exception]:
        return [r.error for r in self.runners if r.error is not None]
